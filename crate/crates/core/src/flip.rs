//! Flip metrics, flip plans and the CA-SCLF retry loop.
//!
//! A flip trial re-runs the list decoder and, at one chosen information
//! position, keeps the L discarded candidates instead of the L survivors.
//! Positions are ranked by one of several suspicion scores computed from the
//! trace of the initial decode, by the recurrent ranker, or (in simulation)
//! by a genie that knows the transmitted message.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::{BitVector, PolarCode};
use crate::decoder::{pm_increment, DecodeError, DecodeOutcome, SclDecoder, SclTrace};
use crate::lstm::{LstmError, LstmWeights};
use crate::math::log_sum_exp;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FlipError {
    #[error("trace has no selection snapshots")]
    EmptyTrace,
    #[error("trace lacks per-path information-bit history")]
    MissingHistory,
    #[error("T_max must be at least 1 to build a plan")]
    InvalidTmax,
    #[error("score/index length mismatch: {indices} indices, {scores} scores")]
    ScoreLength { indices: usize, scores: usize },
    #[error("position {0} is not a flippable information position")]
    NotFlippable(usize),
    #[error("strategy {0} needs recurrent weights")]
    MissingWeights(Strategy),
    #[error("strategy {0} needs the transmitted message")]
    MissingTruth(Strategy),
    #[error("the correct path survived every selection; there is no first error")]
    NoFirstError,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
}

/// How flip positions are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Sum over survivors of the product of per-bit decision confidences.
    PathConfidence,
    /// Ratio of discarded to reserved path probability mass.
    ExactRatio,
    /// Sum of discarded PMs minus sum of reserved PMs.
    Simplified,
    /// Recurrent ranker over the simplified metric sequence.
    Lstm,
    /// Oracle flip at the true first error (simulation only).
    Genie,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::PathConfidence, Strategy::ExactRatio, Strategy::Simplified, Strategy::Lstm, Strategy::Genie];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::PathConfidence => "path_confidence",
            Strategy::ExactRatio => "exact_ratio",
            Strategy::Simplified => "simplified",
            Strategy::Lstm => "lstm",
            Strategy::Genie => "genie",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown strategy '{s}'"))
    }
}

/// Sort direction that puts the most suspicious position first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Ascending,
    Descending,
}

impl Strategy {
    /// Orientation of the score each metric strategy produces.
    ///
    /// `PathConfidence` has no derived direction. The cumulative product
    /// shrinks along the block, so ascending order just lists the last
    /// positions first; descending order matches first-error labels far
    /// more often (see the labelled-failure test) and is used.
    pub fn orientation(self) -> Orientation {
        match self {
            Strategy::ExactRatio | Strategy::PathConfidence => Orientation::Descending,
            _ => Orientation::Ascending,
        }
    }
}

fn require_snapshots(trace: &SclTrace) -> Result<(), FlipError> {
    if trace.snapshots.is_empty() {
        Err(FlipError::EmptyTrace)
    } else {
        Ok(())
    }
}

/// `Σ e^{-PM_discarded} / Σ e^{-PM_reserved}` per snapshot.
pub fn metric_exact(trace: &SclTrace) -> Result<Vec<f64>, FlipError> {
    Ok(log_metric_exact(trace)?.into_iter().map(f64::exp).collect())
}

/// Natural log of [`metric_exact`], free of underflow.
pub fn log_metric_exact(trace: &SclTrace) -> Result<Vec<f64>, FlipError> {
    require_snapshots(trace)?;
    Ok(trace
        .snapshots
        .iter()
        .map(|s| {
            let num = log_sum_exp(s.pm_discarded.iter().map(|p| -p));
            let den = log_sum_exp(s.pm_reserved.iter().map(|p| -p));
            num - den
        })
        .collect())
}

/// `Σ PM_discarded - Σ PM_reserved` per snapshot; small means suspicious.
pub fn metric_simplified(trace: &SclTrace) -> Result<Vec<f64>, FlipError> {
    require_snapshots(trace)?;
    Ok(trace.snapshots.iter().map(|s| s.pm_discarded.iter().sum::<f64>() - s.pm_reserved.iter().sum::<f64>()).collect())
}

/// `Σ_paths Π_{j ≤ i, j ∈ A} (1 + e^{-(1-2û_j) L_j})^{-1}` per snapshot.
pub fn metric_path_confidence(trace: &SclTrace) -> Result<Vec<f64>, FlipError> {
    Ok(log_metric_path_confidence(trace)?.into_iter().map(f64::exp).collect())
}

/// Natural log of [`metric_path_confidence`].
///
/// The product along a path is `exp(-info_pm)`, where `info_pm` is the path
/// metric accumulated over information positions only.
pub fn log_metric_path_confidence(trace: &SclTrace) -> Result<Vec<f64>, FlipError> {
    require_snapshots(trace)?;
    trace
        .snapshots
        .iter()
        .map(|s| {
            if s.info_pm_reserved.len() != s.pm_reserved.len() || s.info_pm_reserved.is_empty() {
                return Err(FlipError::MissingHistory);
            }
            Ok(log_sum_exp(s.info_pm_reserved.iter().map(|p| -p)))
        })
        .collect()
}

/// The per-path confidence product from raw decision history; reference
/// form of [`metric_path_confidence`] for a single path.
pub fn confidence_product(decisions: &[u8], llrs: &[f64]) -> f64 {
    decisions.iter().zip(llrs).map(|(&b, &l)| (-pm_increment(0.0, b, l)).exp()).product()
}

/// Ranking scores of a metric strategy, aligned with `trace.flippable_indices()`.
pub fn ranking_scores(trace: &SclTrace, strategy: Strategy) -> Result<Vec<f64>, FlipError> {
    match strategy {
        Strategy::ExactRatio => log_metric_exact(trace),
        Strategy::PathConfidence => log_metric_path_confidence(trace),
        _ => metric_simplified(trace),
    }
}

/// Ordered flip positions, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipPlan {
    pub ordered_positions: Vec<usize>,
    pub strategy: Strategy,
    pub scores: Vec<f64>,
}

impl FlipPlan {
    pub fn len(&self) -> usize {
        self.ordered_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_positions.is_empty()
    }
}

/// Sort `indices` by suspicion under `strategy`'s orientation, ties by
/// ascending index, and keep the first `t_max`.
pub fn build_flip_plan(
    indices: &[usize],
    scores: &[f64],
    strategy: Strategy,
    code: &PolarCode,
    list_size: usize,
    t_max: usize,
) -> Result<FlipPlan, FlipError> {
    if t_max < 1 {
        return Err(FlipError::InvalidTmax);
    }
    if indices.len() != scores.len() {
        return Err(FlipError::ScoreLength { indices: indices.len(), scores: scores.len() });
    }
    let growth = list_size.trailing_zeros() as usize;
    if let Some(&bad) = indices.iter().find(|&&i| code.info_rank(i).is_none_or(|r| r < growth)) {
        return Err(FlipError::NotFlippable(bad));
    }
    let mut order: Vec<usize> = (0..indices.len()).collect();
    let orientation = strategy.orientation();
    order.sort_by(|&a, &b| {
        let by_score = match orientation {
            Orientation::Ascending => scores[a].total_cmp(&scores[b]),
            Orientation::Descending => scores[b].total_cmp(&scores[a]),
        };
        by_score.then(indices[a].cmp(&indices[b]))
    });
    order.truncate(t_max);
    Ok(FlipPlan {
        ordered_positions: order.iter().map(|&k| indices[k]).collect(),
        strategy,
        scores: order.iter().map(|&k| scores[k]).collect(),
    })
}

/// Mapping from flippable information positions to classifier buckets.
///
/// Buckets `0..S-1` are the critical-set members past the first log2(L)
/// information positions, in ascending order; bucket `S-1` collects every
/// other flippable position.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketMap {
    flippable: Vec<usize>,
    cs_buckets: Vec<usize>,
    ncs: Vec<usize>,
}

impl BucketMap {
    pub fn new(code: &PolarCode, list_size: usize) -> Self {
        let growth = (list_size.trailing_zeros() as usize).min(code.k_info());
        let flippable = code.info_set()[growth..].to_vec();
        let cs: Vec<usize> =
            code.critical_set().iter().copied().filter(|i| flippable.binary_search(i).is_ok()).collect();
        let ncs = flippable.iter().copied().filter(|i| cs.binary_search(i).is_err()).collect();
        Self { flippable, cs_buckets: cs, ncs }
    }

    /// S, the classifier output width.
    pub fn num_buckets(&self) -> usize {
        self.cs_buckets.len() + 1
    }

    pub fn ncs_bucket(&self) -> usize {
        self.cs_buckets.len()
    }

    pub fn flippable(&self) -> &[usize] {
        &self.flippable
    }

    pub fn cs_buckets(&self) -> &[usize] {
        &self.cs_buckets
    }

    pub fn ncs_positions(&self) -> &[usize] {
        &self.ncs
    }

    pub fn bucket_of(&self, index: usize) -> Result<usize, FlipError> {
        if self.flippable.binary_search(&index).is_err() {
            return Err(FlipError::NotFlippable(index));
        }
        Ok(self.cs_buckets.binary_search(&index).unwrap_or(self.ncs_bucket()))
    }
}

/// First information position at which no survivor agrees with the
/// transmitted message, or `None` if the correct path survived throughout.
pub fn first_error_index(
    trace: &SclTrace,
    true_message: &BitVector,
    code: &PolarCode,
) -> Result<Option<usize>, FlipError> {
    let truth_at = |index: usize| -> u8 {
        let rank = code.info_rank(index).expect("trace positions are information positions");
        true_message.get(rank)
    };
    let mut true_slot = if trace.first_split_indices.is_empty() {
        Some(0)
    } else {
        if trace.growth_decisions.is_empty() {
            return Err(FlipError::MissingHistory);
        }
        let wanted: Vec<u8> = trace.first_split_indices.iter().map(|&i| truth_at(i)).collect();
        trace.growth_decisions.iter().position(|d| *d == wanted)
    };
    for snap in &trace.snapshots {
        let Some(slot) = true_slot else { break };
        let bit = truth_at(snap.info_index);
        let survivor = (0..snap.reserved_paths.len())
            .find(|&r| snap.reserved_parents[r] == slot && snap.decisions_reserved[r] == bit);
        match survivor {
            Some(r) => true_slot = Some(snap.reserved_paths[r]),
            None => return Ok(Some(snap.info_index)),
        }
    }
    Ok(None)
}

/// Classifier bucket of the first error; errors when there is none.
pub fn label_first_error(trace: &SclTrace, true_message: &BitVector, code: &PolarCode) -> Result<usize, FlipError> {
    let index = first_error_index(trace, true_message, code)?.ok_or(FlipError::NoFirstError)?;
    BucketMap::new(code, trace.list_size).bucket_of(index)
}

/// Optional inputs some strategies need.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlipContext<'a> {
    pub weights: Option<&'a LstmWeights>,
    /// Transmitted K-bit message; only the genie uses it.
    pub truth: Option<&'a BitVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SclfResult {
    pub outcome: DecodeOutcome,
    /// Extra decoding trials run after the initial pass.
    pub attempts_used: usize,
    /// Trial that passed the CRC; 0 is the initial pass.
    pub success_trial: Option<usize>,
    pub plan: Option<FlipPlan>,
    /// Outcome of the initial pass when a flip trial was attempted.
    pub initial: Option<DecodeOutcome>,
}

/// Flip plan for a failed initial decode.
pub fn plan_for(
    code: &PolarCode,
    initial: &DecodeOutcome,
    t_max: usize,
    strategy: Strategy,
    ctx: &FlipContext<'_>,
) -> Result<FlipPlan, FlipError> {
    let trace = &initial.trace;
    let list_size = trace.list_size;
    match strategy {
        Strategy::Genie => {
            let truth = ctx.truth.ok_or(FlipError::MissingTruth(strategy))?;
            let positions: Vec<usize> = first_error_index(trace, truth, code)?.into_iter().collect();
            Ok(FlipPlan { scores: vec![1.0; positions.len()], ordered_positions: positions, strategy })
        }
        Strategy::Lstm => {
            let weights = ctx.weights.ok_or(FlipError::MissingWeights(strategy))?;
            let simplified = metric_simplified(trace)?;
            let dist = weights.rank(&weights.normalize(&simplified))?;
            Ok(expand_buckets(code, list_size, &trace.flippable_indices(), &simplified, &dist.probs, t_max))
        }
        _ => {
            let scores = ranking_scores(trace, strategy)?;
            build_flip_plan(&trace.flippable_indices(), &scores, strategy, code, list_size, t_max)
        }
    }
}

/// Turn bucket probabilities into positions: buckets by descending
/// probability, each critical-set bucket contributing its position and the
/// catch-all bucket its positions in ascending simplified-metric order.
pub fn expand_buckets(
    code: &PolarCode,
    list_size: usize,
    indices: &[usize],
    simplified: &[f64],
    probs: &[f64],
    t_max: usize,
) -> FlipPlan {
    let map = BucketMap::new(code, list_size);
    let mut buckets: Vec<usize> = (0..probs.len()).collect();
    buckets.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));

    let mut ncs: Vec<(usize, f64)> = indices
        .iter()
        .zip(simplified)
        .filter(|(i, _)| map.ncs_positions().binary_search(i).is_ok())
        .map(|(&i, &s)| (i, s))
        .collect();
    ncs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut positions = Vec::new();
    let mut scores = Vec::new();
    for b in buckets {
        if positions.len() >= t_max {
            break;
        }
        if b == map.ncs_bucket() {
            for &(i, _) in &ncs {
                positions.push(i);
                scores.push(probs[b]);
            }
        } else if let Some(&i) = map.cs_buckets().get(b) {
            positions.push(i);
            scores.push(probs[b]);
        }
    }
    positions.truncate(t_max);
    scores.truncate(t_max);
    FlipPlan { ordered_positions: positions, strategy: Strategy::Lstm, scores }
}

/// Full CA-SCLF: initial CA-SCL, then up to `t_max` single-flip retries.
pub fn sclf_decode(
    code: &PolarCode,
    llrs: &[f64],
    list_size: usize,
    t_max: usize,
    strategy: Strategy,
    ctx: &FlipContext<'_>,
) -> Result<SclfResult, FlipError> {
    let mut decoder = SclDecoder::new(code, list_size)?;
    sclf_decode_with(&mut decoder, llrs, t_max, strategy, ctx)
}

/// [`sclf_decode`] reusing a decoder's buffers.
pub fn sclf_decode_with(
    decoder: &mut SclDecoder<'_>,
    llrs: &[f64],
    t_max: usize,
    strategy: Strategy,
    ctx: &FlipContext<'_>,
) -> Result<SclfResult, FlipError> {
    check_context(strategy, t_max, ctx)?;
    let initial = decoder.decode(llrs, None)?;
    sclf_continue(decoder, llrs, initial, t_max, strategy, ctx)
}

fn check_context(strategy: Strategy, t_max: usize, ctx: &FlipContext<'_>) -> Result<(), FlipError> {
    if t_max == 0 {
        return Ok(());
    }
    match strategy {
        Strategy::Lstm if ctx.weights.is_none() => Err(FlipError::MissingWeights(strategy)),
        Strategy::Genie if ctx.truth.is_none() => Err(FlipError::MissingTruth(strategy)),
        _ => Ok(()),
    }
}

/// Flip stage of CA-SCLF given an already computed initial decode.
pub fn sclf_continue(
    decoder: &mut SclDecoder<'_>,
    llrs: &[f64],
    initial: DecodeOutcome,
    t_max: usize,
    strategy: Strategy,
    ctx: &FlipContext<'_>,
) -> Result<SclfResult, FlipError> {
    check_context(strategy, t_max, ctx)?;
    if initial.crc_ok || t_max == 0 || initial.trace.snapshots.is_empty() {
        let success_trial = initial.crc_ok.then_some(0);
        return Ok(SclfResult { outcome: initial, attempts_used: 0, success_trial, plan: None, initial: None });
    }
    let plan = plan_for(decoder.code(), &initial, t_max, strategy, ctx)?;
    let mut best: Option<DecodeOutcome> = None;
    let mut attempts = 0;
    for &position in plan.ordered_positions.iter().take(t_max) {
        attempts += 1;
        let trial = decoder.decode(llrs, Some(position))?;
        if trial.crc_ok {
            return Ok(SclfResult {
                outcome: trial,
                attempts_used: attempts,
                success_trial: Some(attempts),
                plan: Some(plan),
                initial: Some(initial),
            });
        }
        if best.as_ref().is_none_or(|b| trial.chosen_path_pm < b.chosen_path_pm) {
            best = Some(trial);
        }
    }
    let outcome = match best {
        Some(b) if b.chosen_path_pm < initial.chosen_path_pm => b,
        _ => initial.clone(),
    };
    Ok(SclfResult { outcome, attempts_used: attempts, success_trial: None, plan: Some(plan), initial: Some(initial) })
}

/// One-line per-frame diagnostic record.
pub fn diagnostic_line(
    frame: u64,
    strategy: Strategy,
    result: &SclfResult,
    first_error_bucket: Option<usize>,
) -> String {
    let trial = result.success_trial.map_or_else(|| "-".to_string(), |t| t.to_string());
    let bucket = first_error_bucket.map_or_else(|| "-".to_string(), |b| b.to_string());
    format!(
        "frame={frame} strategy={strategy} attempts_used={} success_trial={trial} first_error_bucket={bucket}",
        result.attempts_used
    )
}
