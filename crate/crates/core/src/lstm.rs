//! Inference-only recurrent flip ranker.
//!
//! A single-layer LSTM reads one scalar per flippable position, and a dense
//! softmax head on the last hidden state scores the flip buckets. Weights
//! come from a JSON interchange file with base64-encoded little-endian
//! `f64` tensors, row-major.
//!
//! Gate order inside the stacked tensors is input, forget, cell, output.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::PolarCode;
use crate::flip::BucketMap;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LstmError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("weights contain non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("sequence length {got} does not match expected {expected}")]
    SequenceLength { expected: usize, got: usize },
    #[error("weights were trained for {weights}, live code is {live}")]
    FingerprintMismatch { weights: String, live: String },
    #[error("unsupported weight format version {0}")]
    Version(u32),
    #[error("weight file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

/// Identity of the code and list size a model was trained for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub n_bits: usize,
    pub k_info: usize,
    pub list_size: usize,
    pub cs_hash: String,
}

impl Fingerprint {
    pub fn of(code: &PolarCode, list_size: usize) -> Self {
        Self { n_bits: code.n_bits(), k_info: code.k_info(), list_size, cs_hash: code.critical_set_hash() }
    }

    /// Number of timesteps the ranker consumes: K - log2(L).
    pub fn sequence_len(&self) -> usize {
        self.k_info.saturating_sub(self.list_size.trailing_zeros() as usize)
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "N={} K={} L={} cs={}", self.n_bits, self.k_info, self.list_size, self.cs_hash)
    }
}

/// LSTM cell plus dense softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub hidden_size: usize,
    pub input_size: usize,
    pub output_size: usize,
    /// `[4][H][input_size]`
    pub w_input: Vec<f64>,
    /// `[4][H][H]`
    pub w_recurrent: Vec<f64>,
    /// `[4][H]`
    pub b_gate: Vec<f64>,
    /// `[S][H]`
    pub w_out: Vec<f64>,
    /// `[S]`
    pub b_out: Vec<f64>,
    /// Raw metrics are divided by this before entering the network.
    pub normalization: f64,
    pub fingerprint: Fingerprint,
    pub format_version: u32,
}

/// Softmax output over the flip buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketDistribution {
    pub probs: Vec<f64>,
}

impl BucketDistribution {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Arithmetic counted by the instrumented forward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpTally {
    pub adds: u64,
    pub mults: u64,
}

/// Per-call breakdown returned by [`LstmWeights::rank_counted`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RankOps {
    pub steps: u64,
    /// Total over all recurrent steps.
    pub recurrent: OpTally,
    /// Dense output layer.
    pub head: OpTally,
    /// Softmax normalisation.
    pub softmax: OpTally,
}

impl RankOps {
    /// Cost of one recurrent step plus the dense head.
    pub fn per_step_with_head(&self) -> OpTally {
        OpTally {
            adds: self.recurrent.adds / self.steps.max(1) + self.head.adds,
            mults: self.recurrent.mults / self.steps.max(1) + self.head.mults,
        }
    }
}

trait Counter {
    fn add(&mut self, n: u64);
    fn mul(&mut self, n: u64);
}

struct NoCount;

impl Counter for NoCount {
    #[inline(always)]
    fn add(&mut self, _: u64) {}
    #[inline(always)]
    fn mul(&mut self, _: u64) {}
}

impl Counter for OpTally {
    fn add(&mut self, n: u64) {
        self.adds += n;
    }
    fn mul(&mut self, n: u64) {
        self.mults += n;
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Table-style operation counts for one step of the ranker plus its head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub adds: u64,
    pub mults: u64,
    pub memory: u64,
}

/// Closed-form complexity of the compact ranker (`with_domain_knowledge`:
/// scalar input, S outputs) or of an LLR-fed ranker over all K positions.
pub fn count_ops(hidden: u64, buckets: u64, list_size: u64, k_info: u64, with_domain_knowledge: bool) -> OpCount {
    let h = hidden;
    if with_domain_knowledge {
        OpCount {
            adds: h * (4 * h + buckets + 9),
            mults: h * (4 * h + buckets + 7),
            memory: h * (4 * h + buckets + 10),
        }
    } else {
        let w = 4 * h + 4 * list_size + k_info;
        OpCount { adds: h * (w + 5), mults: h * (w + 3), memory: h * (w + 6) }
    }
}

impl LstmWeights {
    /// All-zero model of the given shape.
    pub fn zeros(hidden_size: usize, input_size: usize, output_size: usize, fingerprint: Fingerprint) -> Self {
        Self {
            hidden_size,
            input_size,
            output_size,
            w_input: vec![0.0; 4 * hidden_size * input_size],
            w_recurrent: vec![0.0; 4 * hidden_size * hidden_size],
            b_gate: vec![0.0; 4 * hidden_size],
            w_out: vec![0.0; output_size * hidden_size],
            b_out: vec![0.0; output_size],
            normalization: 1.0,
            fingerprint,
            format_version: FORMAT_VERSION,
        }
    }

    pub fn validate(&self) -> Result<(), LstmError> {
        let (h, i, s) = (self.hidden_size, self.input_size, self.output_size);
        if h == 0 || i == 0 || s == 0 {
            return Err(LstmError::Shape("sizes must be positive".into()));
        }
        let expect = [
            ("w_input", self.w_input.len(), 4 * h * i),
            ("w_recurrent", self.w_recurrent.len(), 4 * h * h),
            ("b_gate", self.b_gate.len(), 4 * h),
            ("w_out", self.w_out.len(), s * h),
            ("b_out", self.b_out.len(), s),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(LstmError::Shape(format!("{name} has {got} entries, expected {want}")));
            }
        }
        let tensors: [(&'static str, &[f64]); 5] = [
            ("w_input", &self.w_input),
            ("w_recurrent", &self.w_recurrent),
            ("b_gate", &self.b_gate),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ];
        for (name, t) in tensors {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(LstmError::NonFinite(name));
            }
        }
        if !(self.normalization.is_finite() && self.normalization > 0.0) {
            return Err(LstmError::NonFinite("normalization"));
        }
        Ok(())
    }

    /// Refuse weights trained for a different code, list size or bucket count.
    pub fn check_compatible(&self, code: &PolarCode, list_size: usize) -> Result<(), LstmError> {
        let live = Fingerprint::of(code, list_size);
        if live != self.fingerprint {
            return Err(LstmError::FingerprintMismatch {
                weights: self.fingerprint.to_string(),
                live: live.to_string(),
            });
        }
        let buckets = BucketMap::new(code, list_size).num_buckets();
        if buckets != self.output_size {
            return Err(LstmError::Shape(format!(
                "output size {} but the code has {buckets} flip buckets",
                self.output_size
            )));
        }
        if self.input_size != 1 {
            return Err(LstmError::Shape(format!("ranker input size must be 1, got {}", self.input_size)));
        }
        Ok(())
    }

    pub fn normalize(&self, metrics: &[f64]) -> Vec<f64> {
        metrics.iter().map(|m| m / self.normalization).collect()
    }

    /// One recurrent step.
    pub fn lstm_step(&self, x: &[f64], state: &LstmState) -> Result<LstmState, LstmError> {
        self.check_state(x, state)?;
        let mut next = LstmState::zeros(self.hidden_size);
        let mut gates = vec![0.0; 4 * self.hidden_size];
        self.step_into(x, state, &mut next, &mut gates, &mut NoCount);
        Ok(next)
    }

    fn check_state(&self, x: &[f64], state: &LstmState) -> Result<(), LstmError> {
        if x.len() != self.input_size {
            return Err(LstmError::Shape(format!("input has {} values, expected {}", x.len(), self.input_size)));
        }
        if state.h.len() != self.hidden_size || state.c.len() != self.hidden_size {
            return Err(LstmError::Shape(format!("state is not of hidden size {}", self.hidden_size)));
        }
        Ok(())
    }

    fn step_into<C: Counter>(
        &self,
        x: &[f64],
        state: &LstmState,
        next: &mut LstmState,
        gates: &mut [f64],
        ops: &mut C,
    ) {
        let h = self.hidden_size;
        let ni = self.input_size;
        for (row, gate) in gates.iter_mut().enumerate() {
            let wi = &self.w_input[row * ni..(row + 1) * ni];
            let wr = &self.w_recurrent[row * h..(row + 1) * h];
            let mut acc = self.b_gate[row];
            for (w, v) in wi.iter().zip(x) {
                acc += w * v;
            }
            for (w, v) in wr.iter().zip(&state.h) {
                acc += w * v;
            }
            *gate = acc;
        }
        // Pre-activations: one product and one sum per weight.
        ops.mul((4 * h * (ni + h)) as u64);
        ops.add((4 * h * (ni + h)) as u64);
        for u in 0..h {
            let i_g = logistic(gates[u]);
            let f_g = logistic(gates[h + u]);
            let g_g = gates[2 * h + u].tanh();
            let o_g = logistic(gates[3 * h + u]);
            let c = f_g * state.c[u] + i_g * g_g;
            next.c[u] = c;
            next.h[u] = o_g * c.tanh();
        }
        // Three logistic denominators, c' = f c + i g, h' = o tanh(c').
        ops.add(4 * h as u64);
        ops.mul(3 * h as u64);
    }

    fn forward<C: Counter>(&self, seq: &[f64], steps: &mut C, head: &mut C, softmax: &mut C) -> Vec<f64> {
        let h = self.hidden_size;
        let ni = self.input_size;
        let mut state = LstmState::zeros(h);
        let mut next = LstmState::zeros(h);
        let mut gates = vec![0.0; 4 * h];
        for x in seq.chunks_exact(ni) {
            self.step_into(x, &state, &mut next, &mut gates, steps);
            std::mem::swap(&mut state, &mut next);
        }
        let mut logits: Vec<f64> = self
            .w_out
            .chunks_exact(h)
            .zip(&self.b_out)
            .map(|(row, b)| b + row.iter().zip(&state.h).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        head.mul((self.output_size * h) as u64);
        head.add((self.output_size * h) as u64);
        softmax_in_place(&mut logits);
        softmax.add(2 * self.output_size as u64);
        softmax.mul(self.output_size as u64);
        logits
    }

    fn check_sequence(&self, seq: &[f64]) -> Result<(), LstmError> {
        let expected = self.fingerprint.sequence_len() * self.input_size;
        if seq.len() != expected {
            return Err(LstmError::SequenceLength { expected, got: seq.len() });
        }
        Ok(())
    }

    /// Bucket distribution for a normalised metric sequence of length K - log2(L).
    pub fn rank(&self, seq: &[f64]) -> Result<BucketDistribution, LstmError> {
        self.check_sequence(seq)?;
        Ok(BucketDistribution { probs: self.forward(seq, &mut NoCount, &mut NoCount, &mut NoCount) })
    }

    /// Sequence of any length; used by the training-side parity checks.
    pub fn rank_any(&self, seq: &[f64]) -> Result<BucketDistribution, LstmError> {
        if seq.is_empty() || !seq.len().is_multiple_of(self.input_size) {
            return Err(LstmError::SequenceLength { expected: self.input_size, got: seq.len() });
        }
        Ok(BucketDistribution { probs: self.forward(seq, &mut NoCount, &mut NoCount, &mut NoCount) })
    }

    /// [`rank`](Self::rank) with arithmetic counting.
    pub fn rank_counted(&self, seq: &[f64]) -> Result<(BucketDistribution, RankOps), LstmError> {
        self.check_sequence(seq)?;
        let (mut steps, mut head, mut softmax) = (OpTally::default(), OpTally::default(), OpTally::default());
        let probs = self.forward(seq, &mut steps, &mut head, &mut softmax);
        let ops = RankOps { steps: (seq.len() / self.input_size) as u64, recurrent: steps, head, softmax };
        Ok((BucketDistribution { probs }, ops))
    }

    /// Categorical cross-entropy `-ln p[label]`.
    pub fn cross_entropy(&self, seq: &[f64], label: usize) -> Result<f64, LstmError> {
        let dist = self.rank_any(seq)?;
        let p = dist.probs.get(label).ok_or_else(|| LstmError::Shape(format!("label {label} out of range")))?;
        Ok(-p.ln())
    }

    /// Mutable access to one scalar parameter by tensor name and flat index.
    pub fn param_mut(&mut self, tensor: &str, index: usize) -> Option<&mut f64> {
        match tensor {
            "w_input" => self.w_input.get_mut(index),
            "w_recurrent" => self.w_recurrent.get_mut(index),
            "b_gate" => self.b_gate.get_mut(index),
            "w_out" => self.w_out.get_mut(index),
            "b_out" => self.b_out.get_mut(index),
            _ => None,
        }
    }

    /// Central finite-difference derivative of the cross-entropy with
    /// respect to one parameter.
    pub fn finite_difference_gradient(
        &self,
        seq: &[f64],
        label: usize,
        tensor: &str,
        index: usize,
        eps: f64,
    ) -> Result<f64, LstmError> {
        let mut probe = self.clone();
        let base = *probe.param_mut(tensor, index).ok_or_else(|| LstmError::Shape(format!("{tensor}[{index}]")))?;
        *probe.param_mut(tensor, index).expect("checked") = base + eps;
        let up = probe.cross_entropy(seq, label)?;
        *probe.param_mut(tensor, index).expect("checked") = base - eps;
        let down = probe.cross_entropy(seq, label)?;
        Ok((up - down) / (2.0 * eps))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&WeightFile::from(self)).expect("weight file serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, LstmError> {
        let file: WeightFile = serde_json::from_str(text).map_err(|e| LstmError::Format(e.to_string()))?;
        file.into_weights()
    }

    pub fn save(&self, path: &Path) -> Result<(), LstmError> {
        std::fs::write(path, self.to_json()).map_err(|e| LstmError::Io(format!("{}: {e}", path.display())))
    }

    /// Read a weight file and check it against the live code.
    pub fn load(path: &Path, code: &PolarCode, list_size: usize) -> Result<Self, LstmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LstmError::Io(format!("{}: {e}", path.display())))?;
        let weights = Self::from_json(&text)?;
        weights.check_compatible(code, list_size)?;
        Ok(weights)
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: String,
}

impl Tensor {
    fn encode(shape: Vec<usize>, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self { shape, data: B64.encode(bytes) }
    }

    fn decode(&self, name: &str, expected_shape: &[usize]) -> Result<Vec<f64>, LstmError> {
        if self.shape != expected_shape {
            return Err(LstmError::Shape(format!("{name} shape {:?}, expected {expected_shape:?}", self.shape)));
        }
        let bytes = B64.decode(&self.data).map_err(|e| LstmError::Format(format!("{name}: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(LstmError::Format(format!("{name}: payload is not a whole number of f64")));
        }
        let values: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let count: usize = expected_shape.iter().product();
        if values.len() != count {
            return Err(LstmError::Shape(format!("{name} has {} values, expected {count}", values.len())));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tensors {
    w_input: Tensor,
    w_recurrent: Tensor,
    b_gate: Tensor,
    w_out: Tensor,
    b_out: Tensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightFile {
    format_version: u32,
    gate_order: Vec<String>,
    hidden_size: usize,
    input_size: usize,
    output_size: usize,
    normalization: f64,
    fingerprint: Fingerprint,
    tensors: Tensors,
}

const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];

impl From<&LstmWeights> for WeightFile {
    fn from(w: &LstmWeights) -> Self {
        let (h, i, s) = (w.hidden_size, w.input_size, w.output_size);
        Self {
            format_version: FORMAT_VERSION,
            gate_order: GATE_ORDER.iter().map(|s| s.to_string()).collect(),
            hidden_size: h,
            input_size: i,
            output_size: s,
            normalization: w.normalization,
            fingerprint: w.fingerprint.clone(),
            tensors: Tensors {
                w_input: Tensor::encode(vec![4, h, i], &w.w_input),
                w_recurrent: Tensor::encode(vec![4, h, h], &w.w_recurrent),
                b_gate: Tensor::encode(vec![4, h], &w.b_gate),
                w_out: Tensor::encode(vec![s, h], &w.w_out),
                b_out: Tensor::encode(vec![s], &w.b_out),
            },
        }
    }
}

impl WeightFile {
    fn into_weights(self) -> Result<LstmWeights, LstmError> {
        if self.format_version != FORMAT_VERSION {
            return Err(LstmError::Version(self.format_version));
        }
        if self.gate_order != GATE_ORDER {
            return Err(LstmError::Format(format!("unsupported gate order {:?}", self.gate_order)));
        }
        let (h, i, s) = (self.hidden_size, self.input_size, self.output_size);
        let t = &self.tensors;
        let weights = LstmWeights {
            hidden_size: h,
            input_size: i,
            output_size: s,
            w_input: t.w_input.decode("w_input", &[4, h, i])?,
            w_recurrent: t.w_recurrent.decode("w_recurrent", &[4, h, h])?,
            b_gate: t.b_gate.decode("b_gate", &[4, h])?,
            w_out: t.w_out.decode("w_out", &[s, h])?,
            b_out: t.b_out.decode("b_out", &[s])?,
            normalization: self.normalization,
            fingerprint: self.fingerprint,
            format_version: self.format_version,
        };
        weights.validate()?;
        Ok(weights)
    }
}
