//! Successive cancellation and CRC-aided list decoding.
//!
//! The list decoder works on LLRs and follows the usual lazy-copy layout:
//! every path owns one buffer per tree depth for LLRs (`alpha`) and partial
//! sums (`beta`), buffers are shared between paths after a split and only
//! copied when a path is about to write into a shared one.
//!
//! Every 2L -> L survivor selection is recorded in an [`SclSnapshot`]; the
//! resulting [`SclTrace`] is what the flip metrics are computed from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::{BitVector, PolarCode};
use crate::math::{bit_reverse, f_exact, f_min_sum, g, softplus};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DecodeError {
    #[error("list size {0} is not a power of two >= 1")]
    ListSize(usize),
    #[error("expected {expected} channel LLRs, got {got}")]
    LlrLength { expected: usize, got: usize },
    #[error("channel LLR at position {0} is not finite")]
    NonFiniteLlr(usize),
    #[error("flip position {0} is not an information position")]
    FlipNotInformation(usize),
    #[error("flip position {0} lies in the first log2(L) information bits; nothing is discarded there")]
    FlipBeforeListFull(usize),
}

/// Check-node rule used inside the decoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMode {
    #[default]
    Exact,
    MinSum,
}

/// `current_pm + ln(1 + exp(-(1 - 2 bit) llr))`.
#[inline]
pub fn pm_increment(current_pm: f64, decision_bit: u8, decision_llr: f64) -> f64 {
    let signed = if decision_bit == 0 { decision_llr } else { -decision_llr };
    current_pm + softplus(-signed)
}

/// One 2L -> L survivor selection at information position `info_index`.
///
/// Entry `r` of every `*_reserved` vector describes the survivor of rank `r`.
/// `pm_discarded` lists the eliminated candidates in ascending order. When
/// `flipped` is set the roles were swapped: the reserved lists hold the
/// candidates of ranks L+1..2L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SclSnapshot {
    pub info_index: usize,
    pub pm_reserved: Vec<f64>,
    pub pm_discarded: Vec<f64>,
    pub decision_llrs_reserved: Vec<f64>,
    pub decisions_reserved: Vec<u8>,
    /// Path metric restricted to information positions, per survivor.
    pub info_pm_reserved: Vec<f64>,
    /// Slot each survivor occupies after the selection.
    pub reserved_paths: Vec<usize>,
    /// Slot of the path each survivor was extended from.
    pub reserved_parents: Vec<usize>,
    pub flipped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SclTrace {
    pub list_size: usize,
    /// Information positions decided while the list was still growing.
    pub first_split_indices: Vec<usize>,
    /// Decisions on `first_split_indices`, indexed by slot, once the list is full.
    pub growth_decisions: Vec<Vec<u8>>,
    pub snapshots: Vec<SclSnapshot>,
}

impl SclTrace {
    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Positions at which a flip can be requested, in decoding order.
    pub fn flippable_indices(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.info_index).collect()
    }

    /// CSV dump, one row per snapshot: index, L reserved PMs, L discarded PMs.
    pub fn to_csv(&self) -> String {
        let l = self.list_size;
        let mut out = String::from("info_index");
        for r in 1..=l {
            out.push_str(&format!(",pm_reserved_{r}"));
        }
        for r in 1..=l {
            out.push_str(&format!(",pm_discarded_{r}"));
        }
        out.push('\n');
        for s in &self.snapshots {
            out.push_str(&s.info_index.to_string());
            for v in s.pm_reserved.iter().chain(&s.pm_discarded) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// K decoded bits in information-set order.
    pub message: BitVector,
    pub crc_ok: bool,
    pub trace: SclTrace,
    pub chosen_path_pm: f64,
}

/// Decision history and metrics of one list entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderPath {
    pub decisions: Vec<u8>,
    pub pm: f64,
    pub info_pm: f64,
    pub alive: bool,
}

/// Plain SC: hard decision `llr < 0` at information positions, 0 elsewhere.
pub fn sc_decode(code: &PolarCode, llrs: &[f64]) -> Result<DecodeOutcome, DecodeError> {
    sc_decode_with(code, llrs, FMode::Exact)
}

pub fn sc_decode_with(code: &PolarCode, llrs: &[f64], f_mode: FMode) -> Result<DecodeOutcome, DecodeError> {
    check_llrs(code, llrs)?;
    let n = code.n_bits();
    let bits = code.stages();
    let natural: Vec<f64> = (0..n).map(|j| llrs[bit_reverse(j, bits)]).collect();
    let mut u = vec![0u8; n];
    let mut pm = 0.0;
    sc_node(&natural, code.frozen_mask(), &mut u, &mut pm, f_mode);
    let message = code.extract(&u);
    let crc_ok = code.crc_check(message.as_slice());
    Ok(DecodeOutcome { message, crc_ok, trace: SclTrace { list_size: 1, ..Default::default() }, chosen_path_pm: pm })
}

fn sc_node(llr: &[f64], frozen: &[bool], u: &mut [u8], pm: &mut f64, f_mode: FMode) -> Vec<u8> {
    if llr.len() == 1 {
        let bit = if frozen[0] { 0 } else { u8::from(llr[0] < 0.0) };
        *pm = pm_increment(*pm, bit, llr[0]);
        u[0] = bit;
        return vec![bit];
    }
    let h = llr.len() / 2;
    let (a, b) = llr.split_at(h);
    let left: Vec<f64> = match f_mode {
        FMode::Exact => a.iter().zip(b).map(|(&x, &y)| f_exact(x, y)).collect(),
        FMode::MinSum => a.iter().zip(b).map(|(&x, &y)| f_min_sum(x, y)).collect(),
    };
    let (u_left, u_right) = u.split_at_mut(h);
    let beta_left = sc_node(&left, &frozen[..h], u_left, pm, f_mode);
    let right: Vec<f64> = (0..h).map(|j| g(a[j], b[j], beta_left[j])).collect();
    let beta_right = sc_node(&right, &frozen[h..], u_right, pm, f_mode);
    let mut out: Vec<u8> = beta_left.iter().zip(&beta_right).map(|(x, y)| x ^ y).collect();
    out.extend_from_slice(&beta_right);
    out
}

fn check_llrs(code: &PolarCode, llrs: &[f64]) -> Result<(), DecodeError> {
    if llrs.len() != code.n_bits() {
        return Err(DecodeError::LlrLength { expected: code.n_bits(), got: llrs.len() });
    }
    if let Some(pos) = llrs.iter().position(|v| !v.is_finite()) {
        return Err(DecodeError::NonFiniteLlr(pos + 1));
    }
    Ok(())
}

/// One-shot CA-SCL decode; see [`SclDecoder::decode`].
pub fn scl_decode(
    code: &PolarCode,
    llrs: &[f64],
    list_size: usize,
    flip: Option<usize>,
) -> Result<DecodeOutcome, DecodeError> {
    SclDecoder::new(code, list_size)?.decode(llrs, flip)
}

/// Pool of equally sized buffers for one tree depth with reference counts.
#[derive(Debug, Clone)]
struct Pool<T> {
    arrays: Vec<Vec<T>>,
    refs: Vec<u32>,
    free: Vec<usize>,
}

impl<T: Copy + Default> Pool<T> {
    fn new(count: usize, len: usize) -> Self {
        Self { arrays: vec![vec![T::default(); len]; count], refs: vec![0; count], free: Vec::new() }
    }

    fn reset(&mut self) {
        self.refs.iter_mut().for_each(|r| *r = 0);
        self.free = (0..self.arrays.len()).rev().collect();
    }

    fn take(&mut self) -> usize {
        let id = self.free.pop().expect("buffer pool exhausted");
        self.refs[id] = 1;
        id
    }

    fn release(&mut self, id: usize) {
        self.refs[id] -= 1;
        if self.refs[id] == 0 {
            self.free.push(id);
        }
    }

    /// Make `id` exclusively owned; returns the (possibly new) buffer id.
    fn unshare(&mut self, id: usize, keep_contents: bool) -> usize {
        if self.refs[id] == 1 {
            return id;
        }
        self.refs[id] -= 1;
        let fresh = self.take();
        if keep_contents {
            let (src, dst) = two_mut(&mut self.arrays, id, fresh);
            dst.copy_from_slice(src);
        }
        fresh
    }
}

fn two_mut<T>(v: &mut [T], read: usize, write: usize) -> (&T, &mut T) {
    debug_assert_ne!(read, write);
    if read < write {
        let (lo, hi) = v.split_at_mut(write);
        (&lo[read], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(read);
        (&hi[0], &mut lo[write])
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    pm: f64,
    parent: usize,
    bit: u8,
    llr: f64,
}

/// Reusable CA-SCL decoder bound to one code and list size.
#[derive(Debug, Clone)]
pub struct SclDecoder<'c> {
    code: &'c PolarCode,
    list_size: usize,
    f_mode: FMode,
    stages: usize,
    channel: Vec<f64>,
    /// `alpha[d]` holds LLR buffers of length `2^(stages - d)`, d = 1..=stages.
    alpha: Vec<Pool<f64>>,
    /// `beta[d]` holds partial-sum buffers of length `2^(stages - d)`, d = 0..stages.
    beta: Vec<Pool<u8>>,
    path_alpha: Vec<Vec<usize>>,
    path_beta: Vec<Vec<usize>>,
    active: Vec<bool>,
    free_slots: Vec<usize>,
    pm: Vec<f64>,
    info_pm: Vec<f64>,
    decisions: Vec<Vec<u8>>,
    growth: Vec<Vec<u8>>,
}

impl<'c> SclDecoder<'c> {
    pub fn new(code: &'c PolarCode, list_size: usize) -> Result<Self, DecodeError> {
        if list_size == 0 || !list_size.is_power_of_two() {
            return Err(DecodeError::ListSize(list_size));
        }
        let n = code.n_bits();
        let stages = code.stages() as usize;
        let alpha = (0..=stages).map(|d| Pool::new(if d == 0 { 0 } else { list_size }, 1 << (stages - d))).collect();
        let beta =
            (0..=stages).map(|d| Pool::new(if d == stages { 0 } else { list_size }, 1 << (stages - d))).collect();
        Ok(Self {
            code,
            list_size,
            f_mode: FMode::Exact,
            stages,
            channel: vec![0.0; n],
            alpha,
            beta,
            path_alpha: vec![vec![0; stages + 1]; list_size],
            path_beta: vec![vec![0; stages + 1]; list_size],
            active: vec![false; list_size],
            free_slots: Vec::new(),
            pm: vec![0.0; list_size],
            info_pm: vec![0.0; list_size],
            decisions: vec![vec![0; n]; list_size],
            growth: vec![Vec::new(); list_size],
        })
    }

    pub fn with_f_mode(mut self, f_mode: FMode) -> Self {
        self.f_mode = f_mode;
        self
    }

    pub fn code(&self) -> &PolarCode {
        self.code
    }

    pub fn list_size(&self) -> usize {
        self.list_size
    }

    /// Number of leading information positions decided without a selection.
    pub fn growth_len(&self) -> usize {
        self.list_size.trailing_zeros() as usize
    }

    /// Check that `index` names a position where a selection takes place.
    pub fn validate_flip(&self, index: usize) -> Result<(), DecodeError> {
        match self.code.info_rank(index) {
            None => Err(DecodeError::FlipNotInformation(index)),
            Some(rank) if rank < self.growth_len() => Err(DecodeError::FlipBeforeListFull(index)),
            Some(_) => Ok(()),
        }
    }

    /// Run CA-SCL over `llrs` (codeword order).
    ///
    /// With `flip = Some(i)` the selection at information position `i` keeps
    /// the candidates of ranks L+1..2L instead of 1..L; every other selection
    /// is unchanged.
    pub fn decode(&mut self, llrs: &[f64], flip: Option<usize>) -> Result<DecodeOutcome, DecodeError> {
        check_llrs(self.code, llrs)?;
        if let Some(index) = flip {
            self.validate_flip(index)?;
        }
        self.reset(llrs);

        let n = self.code.n_bits();
        let l = self.list_size;
        let mut trace = SclTrace { list_size: l, ..Default::default() };
        let mut llr_of = vec![0.0; l];
        let mut candidates: Vec<Candidate> = Vec::with_capacity(2 * l);

        for i in 0..n {
            let slots = self.active_slots();
            for &p in &slots {
                llr_of[p] = self.leaf_llr(p, i);
            }
            if self.code.frozen_mask()[i] {
                for &p in &slots {
                    self.pm[p] = pm_increment(self.pm[p], 0, llr_of[p]);
                    self.decisions[p][i] = 0;
                    self.propagate(p, i, 0);
                }
                continue;
            }

            candidates.clear();
            for &p in &slots {
                for bit in 0..2u8 {
                    candidates.push(Candidate {
                        pm: pm_increment(self.pm[p], bit, llr_of[p]),
                        parent: p,
                        bit,
                        llr: llr_of[p],
                    });
                }
            }

            if candidates.len() <= l {
                self.grow(&slots, &candidates, i);
                trace.first_split_indices.push(i + 1);
                if self.active_count() == l {
                    trace.growth_decisions = self.growth.clone();
                }
                continue;
            }

            candidates.sort_by(|a, b| a.pm.total_cmp(&b.pm).then(a.parent.cmp(&b.parent)).then(a.bit.cmp(&b.bit)));
            let flipped = flip == Some(i + 1);
            let (kept, dropped) = if flipped {
                let (d, k) = candidates.split_at(l);
                (k, d)
            } else {
                candidates.split_at(l)
            };
            let snapshot = self.select(kept, dropped, i, flipped);
            trace.snapshots.push(snapshot);
        }

        let mut finished = self.active_slots();
        finished.sort_by(|&a, &b| self.pm[a].total_cmp(&self.pm[b]).then(a.cmp(&b)));
        let mut chosen = finished[0];
        let mut crc_ok = false;
        for &p in &finished {
            if self.code.crc_check(self.code.extract(&self.decisions[p]).as_slice()) {
                chosen = p;
                crc_ok = true;
                break;
            }
        }
        Ok(DecodeOutcome {
            message: self.code.extract(&self.decisions[chosen]),
            crc_ok,
            trace,
            chosen_path_pm: self.pm[chosen],
        })
    }

    /// The list as it stood at the end of the last decode, slot order.
    pub fn final_paths(&self) -> Vec<DecoderPath> {
        (0..self.list_size)
            .map(|p| DecoderPath {
                decisions: self.decisions[p].clone(),
                pm: self.pm[p],
                info_pm: self.info_pm[p],
                alive: self.active[p],
            })
            .collect()
    }

    fn reset(&mut self, llrs: &[f64]) {
        let bits = self.stages as u32;
        for (j, v) in self.channel.iter_mut().enumerate() {
            *v = llrs[bit_reverse(j, bits)];
        }
        self.alpha.iter_mut().for_each(Pool::reset);
        self.beta.iter_mut().for_each(Pool::reset);
        self.active.iter_mut().for_each(|a| *a = false);
        self.free_slots = (1..self.list_size).rev().collect();
        self.active[0] = true;
        self.pm[0] = 0.0;
        self.info_pm[0] = 0.0;
        self.growth[0].clear();
        for d in 1..=self.stages {
            self.path_alpha[0][d] = self.alpha[d].take();
        }
        for d in 0..self.stages {
            self.path_beta[0][d] = self.beta[d].take();
            let id = self.path_beta[0][d];
            self.beta[d].arrays[id].fill(0);
        }
    }

    fn active_slots(&self) -> Vec<usize> {
        (0..self.list_size).filter(|&p| self.active[p]).collect()
    }

    fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    fn clone_path(&mut self, from: usize) -> usize {
        let to = self.free_slots.pop().expect("list overflow");
        for d in 1..=self.stages {
            let id = self.path_alpha[from][d];
            self.alpha[d].refs[id] += 1;
            self.path_alpha[to][d] = id;
        }
        for d in 0..self.stages {
            let id = self.path_beta[from][d];
            self.beta[d].refs[id] += 1;
            self.path_beta[to][d] = id;
        }
        let (src, dst) = two_mut(&mut self.decisions, from, to);
        dst.copy_from_slice(src);
        let (src, dst) = two_mut(&mut self.growth, from, to);
        dst.clone_from(src);
        self.pm[to] = self.pm[from];
        self.info_pm[to] = self.info_pm[from];
        self.active[to] = true;
        to
    }

    fn kill_path(&mut self, p: usize) {
        for d in 1..=self.stages {
            self.alpha[d].release(self.path_alpha[p][d]);
        }
        for d in 0..self.stages {
            self.beta[d].release(self.path_beta[p][d]);
        }
        self.active[p] = false;
        self.free_slots.push(p);
    }

    fn grow(&mut self, slots: &[usize], candidates: &[Candidate], i: usize) {
        for &p in slots {
            let info_before = self.info_pm[p];
            let zero = candidates.iter().find(|c| c.parent == p && c.bit == 0).copied();
            let one = candidates.iter().find(|c| c.parent == p && c.bit == 1).copied();
            let (zero, one) = (zero.expect("candidate"), one.expect("candidate"));
            let q = self.clone_path(p);
            for (slot, c) in [(p, zero), (q, one)] {
                self.pm[slot] = c.pm;
                self.info_pm[slot] = info_before + self.pm_delta(c);
                self.decisions[slot][i] = c.bit;
                self.growth[slot].push(c.bit);
            }
        }
        for p in self.active_slots() {
            let bit = self.decisions[p][i];
            self.propagate(p, i, bit);
        }
    }

    #[inline]
    fn pm_delta(&self, c: Candidate) -> f64 {
        pm_increment(0.0, c.bit, c.llr)
    }

    fn select(&mut self, kept: &[Candidate], dropped: &[Candidate], i: usize, flipped: bool) -> SclSnapshot {
        let l = self.list_size;
        let info_before = self.info_pm.clone();
        let mut kept_children = vec![0usize; l];
        for c in kept {
            kept_children[c.parent] += 1;
        }
        for p in self.active_slots() {
            if kept_children[p] == 0 {
                self.kill_path(p);
            }
        }
        let mut claimed = vec![false; l];
        let mut snap = SclSnapshot {
            info_index: i + 1,
            pm_reserved: Vec::with_capacity(l),
            pm_discarded: dropped.iter().map(|c| c.pm).collect(),
            decision_llrs_reserved: Vec::with_capacity(l),
            decisions_reserved: Vec::with_capacity(l),
            info_pm_reserved: Vec::with_capacity(l),
            reserved_paths: Vec::with_capacity(l),
            reserved_parents: Vec::with_capacity(l),
            flipped,
        };
        for &c in kept {
            let slot = if claimed[c.parent] {
                self.clone_path(c.parent)
            } else {
                claimed[c.parent] = true;
                c.parent
            };
            let info_pm = info_before[c.parent] + self.pm_delta(c);
            self.pm[slot] = c.pm;
            self.info_pm[slot] = info_pm;
            self.decisions[slot][i] = c.bit;
            snap.pm_reserved.push(c.pm);
            snap.decision_llrs_reserved.push(c.llr);
            snap.decisions_reserved.push(c.bit);
            snap.info_pm_reserved.push(info_pm);
            snap.reserved_paths.push(slot);
            snap.reserved_parents.push(c.parent);
        }
        for &slot in &snap.reserved_paths {
            self.propagate(slot, i, self.decisions[slot][i]);
        }
        snap
    }

    /// Decision LLR of leaf `i` for path `p`.
    fn leaf_llr(&mut self, p: usize, i: usize) -> f64 {
        let stages = self.stages;
        let mut d = if i == 0 { 0 } else { stages - 1 - i.trailing_zeros() as usize };
        if i > 0 {
            self.update_g(p, d);
            d += 1;
        }
        while d < stages {
            self.update_f(p, d);
            d += 1;
        }
        self.alpha[stages].arrays[self.path_alpha[p][stages]][0]
    }

    /// `alpha[d + 1] = f(alpha[d])` for path `p`.
    fn update_f(&mut self, p: usize, d: usize) {
        let dst_id = self.alpha[d + 1].unshare(self.path_alpha[p][d + 1], false);
        self.path_alpha[p][d + 1] = dst_id;
        let (lo, hi) = self.alpha.split_at_mut(d + 1);
        let src: &[f64] = if d == 0 { &self.channel } else { &lo[d].arrays[self.path_alpha[p][d]] };
        let dst = &mut hi[0].arrays[dst_id];
        let h = dst.len();
        let (a, b) = src.split_at(h);
        match self.f_mode {
            FMode::Exact => {
                for j in 0..h {
                    dst[j] = f_exact(a[j], b[j]);
                }
            }
            FMode::MinSum => {
                for j in 0..h {
                    dst[j] = f_min_sum(a[j], b[j]);
                }
            }
        }
    }

    /// `alpha[d + 1] = g(alpha[d], beta[d] left half)` for path `p`.
    fn update_g(&mut self, p: usize, d: usize) {
        let dst_id = self.alpha[d + 1].unshare(self.path_alpha[p][d + 1], false);
        self.path_alpha[p][d + 1] = dst_id;
        let (lo, hi) = self.alpha.split_at_mut(d + 1);
        let src: &[f64] = if d == 0 { &self.channel } else { &lo[d].arrays[self.path_alpha[p][d]] };
        let dst = &mut hi[0].arrays[dst_id];
        let left = &self.beta[d].arrays[self.path_beta[p][d]];
        let h = dst.len();
        let (a, b) = src.split_at(h);
        for j in 0..h {
            dst[j] = g(a[j], b[j], left[j]);
        }
    }

    /// Store decision `bit` of leaf `i` and fold completed subtrees upwards.
    fn propagate(&mut self, p: usize, i: usize, bit: u8) {
        let stages = self.stages;
        let leaf_parent = stages - 1;
        let id = self.beta[leaf_parent].unshare(self.path_beta[p][leaf_parent], true);
        self.path_beta[p][leaf_parent] = id;
        self.beta[leaf_parent].arrays[id][i & 1] = bit;

        let mut depth = stages;
        let mut idx = i;
        while idx & 1 == 1 && depth >= 2 {
            let pd = depth - 1;
            let size = 1usize << (stages - pd);
            let half = size / 2;
            let offset = ((idx >> 1) & 1) * size;
            let dst_id = self.beta[pd - 1].unshare(self.path_beta[p][pd - 1], true);
            self.path_beta[p][pd - 1] = dst_id;
            let (lo, hi) = self.beta.split_at_mut(pd);
            let src = &hi[0].arrays[self.path_beta[p][pd]];
            let dst = &mut lo[pd - 1].arrays[dst_id][offset..offset + size];
            for j in 0..half {
                dst[j] = src[j] ^ src[half + j];
                dst[half + j] = src[half + j];
            }
            depth = pd;
            idx >>= 1;
        }
    }
}
