//! Monte-Carlo sweeps, dataset generation and result files.
//!
//! Every frame draws its payload and noise from a generator derived from
//! `(master_seed, Eb/N0, frame index)` only, so results do not depend on how
//! frames are spread over worker threads. Frames are simulated in batches;
//! early stopping is decided by scanning completed frames in index order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ebn0_to_sigma, frame_rng, frame_seed, transmit_with, LlrVector};
use crate::code::{BitVector, CodeError, CrcSpec, PolarCode};
use crate::decoder::{DecodeError, FMode, SclDecoder};
use crate::flip::{
    diagnostic_line, label_first_error, metric_simplified, sclf_continue, BucketMap, FlipContext, FlipError, Strategy,
};
use crate::lstm::{Fingerprint, LstmError, LstmWeights};
use crate::math::mix64;

#[derive(Error, Debug)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Flip(#[from] FlipError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeConfig {
    pub n_bits: usize,
    /// Information bits including the CRC.
    pub k_info: usize,
    /// `None` disables the CRC.
    pub crc: Option<CrcSpec>,
    pub design_snr_db: f64,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self { n_bits: 512, k_info: 256, crc: Some(CrcSpec::crc24a()), design_snr_db: 2.0 }
    }
}

impl CodeConfig {
    pub fn build(&self) -> Result<PolarCode, CodeError> {
        PolarCode::construct(self.n_bits, self.k_info, self.crc, self.design_snr_db)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub code: CodeConfig,
    pub list_size: usize,
    /// 0 runs plain CA-SCL.
    pub t_max: usize,
    pub strategy: Strategy,
    pub ebn0_db: Vec<f64>,
    pub frames_per_point: u64,
    /// Stop a point once this many block errors were seen.
    pub target_block_errors: Option<u64>,
    pub master_seed: u64,
    pub weights_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub f_mode: FMode,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    pub batch_size: usize,
    /// Write one diagnostic line per frame next to the results.
    pub diagnostics: bool,
    /// Feature scale for datasets; `None` uses the mean |metric| of the samples.
    pub normalization: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            code: CodeConfig::default(),
            list_size: 8,
            t_max: 0,
            strategy: Strategy::Simplified,
            ebn0_db: vec![1.5],
            frames_per_point: 10_000,
            target_block_errors: Some(200),
            master_seed: 1,
            weights_path: None,
            output_dir: PathBuf::from("results"),
            f_mode: FMode::Exact,
            threads: None,
            batch_size: 256,
            diagnostics: false,
            normalization: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.frames_per_point == 0 {
            return bad("frames_per_point must be at least 1".into());
        }
        if self.ebn0_db.is_empty() {
            return bad("ebn0_db is empty".into());
        }
        if let Some(v) = self.ebn0_db.iter().find(|v| !v.is_finite()) {
            return bad(format!("Eb/N0 value {v} is not finite"));
        }
        if !self.list_size.is_power_of_two() {
            return bad(format!("list size {} is not a power of two", self.list_size));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.target_block_errors == Some(0) {
            return bad("target_block_errors must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.t_max > 0 && self.strategy == Strategy::Lstm && self.weights_path.is_none() {
            return bad("strategy lstm needs weights_path".into());
        }
        if matches!(self.normalization, Some(c) if !(c.is_finite() && c > 0.0)) {
            return bad("normalization must be positive".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.to_path_buf(), source })
    }

    /// Loads and checks the weight file when the strategy needs one.
    pub fn load_weights(&self, code: &PolarCode) -> Result<Option<LstmWeights>, HarnessError> {
        match (&self.weights_path, self.strategy) {
            (Some(path), Strategy::Lstm) => Ok(Some(LstmWeights::load(path, code, self.list_size)?)),
            _ => Ok(None),
        }
    }
}

/// Aggregate over the frames of one Eb/N0 point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub strategy: Strategy,
    #[serde(rename = "L")]
    pub list_size: usize,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    pub ebn0_db: f64,
    pub frames: u64,
    pub block_errors: u64,
    pub bler: f64,
    pub mean_extra_attempts: f64,
    /// CRC failed.
    pub detected_errors: u64,
    /// CRC passed on a wrong message.
    pub undetected_errors: u64,
    pub extra_attempts: u64,
    /// 95% Wilson interval for the BLER.
    pub bler_low: f64,
    pub bler_high: f64,
    pub wall_seconds: f64,
}

impl PointResult {
    /// Equality of everything except timing.
    pub fn same_counts(&self, other: &PointResult) -> bool {
        PointResult { wall_seconds: 0.0, ..self.clone() } == PointResult { wall_seconds: 0.0, ..other.clone() }
    }
}

pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let low = if successes == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let high = if successes == trials { 1.0 } else { (centre + half).clamp(p, 1.0) };
    (low, high)
}

/// Seed of the frame stream at one Eb/N0 point.
pub fn point_seed(master_seed: u64, ebn0_db: f64) -> u64 {
    frame_seed(master_seed, ebn0_db.to_bits())
}

/// Transmitted K-bit message and received LLRs of one frame.
pub fn frame_input(
    code: &PolarCode,
    seed: u64,
    frame_index: u64,
    sigma: f64,
) -> Result<(BitVector, LlrVector), CodeError> {
    let mut rng = frame_rng(seed, frame_index);
    let payload = BitVector::new((0..code.payload_len()).map(|_| rng.random_range(0..2u8)).collect())?;
    let message = code.crc_attach(&payload)?;
    let llrs = transmit_with(&code.encode(&message)?, sigma, &mut rng);
    Ok((message, llrs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub index: u64,
    pub block_error: bool,
    pub crc_ok: bool,
    pub extra_attempts: usize,
    pub diagnostic: Option<String>,
}

/// Everything a worker needs to simulate frames of one point.
pub struct PointContext<'a> {
    pub config: &'a ExperimentConfig,
    pub code: &'a PolarCode,
    pub weights: Option<&'a LstmWeights>,
    pub ebn0_db: f64,
    sigma: f64,
    seed: u64,
}

impl<'a> PointContext<'a> {
    pub fn new(
        config: &'a ExperimentConfig,
        code: &'a PolarCode,
        weights: Option<&'a LstmWeights>,
        ebn0_db: f64,
    ) -> Result<Self, HarnessError> {
        let sigma = ebn0_to_sigma(ebn0_db, code.rate())?;
        SclDecoder::new(code, config.list_size)?;
        Ok(Self { config, code, weights, ebn0_db, sigma, seed: point_seed(config.master_seed, ebn0_db) })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn decoder(&self) -> SclDecoder<'a> {
        SclDecoder::new(self.code, self.config.list_size)
            .expect("list size checked on construction")
            .with_f_mode(self.config.f_mode)
    }

    pub fn input(&self, frame_index: u64) -> Result<(BitVector, LlrVector), HarnessError> {
        Ok(frame_input(self.code, self.seed, frame_index, self.sigma)?)
    }

    /// Simulate frame `frame_index` end to end.
    pub fn simulate(&self, decoder: &mut SclDecoder<'_>, frame_index: u64) -> Result<FrameOutcome, HarnessError> {
        let (message, llrs) = self.input(frame_index)?;
        let ctx = FlipContext { weights: self.weights, truth: Some(&message) };
        let initial = decoder.decode(&llrs, None)?;
        let bucket = if self.config.diagnostics && !initial.crc_ok && !initial.trace.is_empty() {
            label_first_error(&initial.trace, &message, self.code).ok()
        } else {
            None
        };
        let result = sclf_continue(decoder, &llrs, initial, self.config.t_max, self.config.strategy, &ctx)?;
        let crc_ok = result.outcome.crc_ok;
        let diagnostic =
            self.config.diagnostics.then(|| diagnostic_line(frame_index, self.config.strategy, &result, bucket));
        Ok(FrameOutcome {
            index: frame_index,
            block_error: !crc_ok || result.outcome.message != message,
            crc_ok,
            extra_attempts: result.attempts_used,
            diagnostic,
        })
    }
}

/// Simulate frames `range` in parallel; results come back in index order.
fn simulate_batch(point: &PointContext<'_>, range: std::ops::Range<u64>) -> Result<Vec<FrameOutcome>, HarnessError> {
    range.into_par_iter().map_init(|| point.decoder(), |dec, i| point.simulate(dec, i)).collect()
}

/// Run one Eb/N0 point; also returns the per-frame diagnostics if enabled.
pub fn run_point(point: &PointContext<'_>) -> Result<(PointResult, Vec<String>), HarnessError> {
    let config = point.config;
    let start = Instant::now();
    let mut frames = 0u64;
    let mut errors = 0u64;
    let mut detected = 0u64;
    let mut attempts = 0u64;
    let mut diagnostics = Vec::new();
    let batch = config.batch_size as u64;
    'outer: while frames < config.frames_per_point {
        let end = (frames + batch).min(config.frames_per_point);
        for f in simulate_batch(point, frames..end)? {
            frames += 1;
            errors += u64::from(f.block_error);
            detected += u64::from(!f.crc_ok);
            attempts += f.extra_attempts as u64;
            diagnostics.extend(f.diagnostic);
            if config.target_block_errors.is_some_and(|t| errors >= t) {
                break 'outer;
            }
        }
    }
    let (bler_low, bler_high) = wilson_interval(errors, frames);
    let result = PointResult {
        strategy: config.strategy,
        list_size: config.list_size,
        t_max: config.t_max,
        ebn0_db: point.ebn0_db,
        frames,
        block_errors: errors,
        bler: errors as f64 / frames as f64,
        mean_extra_attempts: attempts as f64 / frames as f64,
        detected_errors: detected,
        undetected_errors: errors - detected,
        extra_attempts: attempts,
        bler_low,
        bler_high,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((result, diagnostics))
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Run every Eb/N0 point of `config` without touching the filesystem
/// (weights aside).
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<PointResult>, HarnessError> {
    Ok(sweep_with_diagnostics(config)?.into_iter().map(|(r, _)| r).collect())
}

fn sweep_with_diagnostics(config: &ExperimentConfig) -> Result<Vec<(PointResult, Vec<String>)>, HarnessError> {
    config.validate()?;
    let code = config.code.build()?;
    let weights = config.load_weights(&code)?;
    with_pool(config.threads, || {
        config.ebn0_db.iter().map(|&e| run_point(&PointContext::new(config, &code, weights.as_ref(), e)?)).collect()
    })?
}

/// Run the sweep and write `code.json`, `config.json`, `results.json`,
/// `results.csv`, `results.dat` (and `diagnostics.log`) to `output_dir`.
pub fn run_sweep_to_dir(config: &ExperimentConfig) -> Result<Vec<PointResult>, HarnessError> {
    let runs = sweep_with_diagnostics(config)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("code.json"), &config.code.build()?.description())?;
    write_json(&dir.join("config.json"), config)?;
    let results: Vec<PointResult> = runs.iter().map(|(r, _)| r.clone()).collect();
    write_json(&dir.join("results.json"), &results)?;
    report(&results, dir)?;
    if config.diagnostics {
        let path = dir.join("diagnostics.log");
        let mut text = String::new();
        for (r, lines) in &runs {
            for l in lines {
                text.push_str(&format!("ebn0_db={} {l}\n", r.ebn0_db));
            }
        }
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(results)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| HarnessError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Read results written by a sweep, either `results.json` or a results CSV.
pub fn read_results(path: &Path) -> Result<Vec<PointResult>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if path.extension().is_some_and(|e| e == "csv") {
        parse_results_csv(&text).map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })
    } else {
        serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.to_path_buf(), source })
    }
}

/// Column order of `results.csv`.
pub const CSV_COLUMNS: [&str; 14] = [
    "strategy",
    "L",
    "T_max",
    "ebn0_db",
    "frames",
    "block_errors",
    "bler",
    "mean_extra_attempts",
    "detected_errors",
    "undetected_errors",
    "extra_attempts",
    "bler_low",
    "bler_high",
    "wall_seconds",
];

/// CSV text for `results`; the header is written even when empty.
pub fn results_csv(results: &[PointResult]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in results {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn parse_results_csv(text: &str) -> Result<Vec<PointResult>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

/// Gnuplot table: one block per (strategy, L, T_max) separated by two
/// blank lines, columns `ebn0_db bler mean_extra_attempts bler_low bler_high`.
pub fn results_dat(results: &[PointResult]) -> String {
    let mut groups: BTreeMap<(String, usize, usize), Vec<&PointResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.strategy.name().to_string(), r.list_size, r.t_max)).or_default().push(r);
    }
    let mut out = String::new();
    for (i, ((s, l, t), mut rows)) in groups.into_iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!(
            "# strategy={s} L={l} T_max={t}\n# ebn0_db bler mean_extra_attempts bler_low bler_high\n"
        ));
        rows.sort_by(|a, b| a.ebn0_db.total_cmp(&b.ebn0_db));
        for r in rows {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                r.ebn0_db, r.bler, r.mean_extra_attempts, r.bler_low, r.bler_high
            ));
        }
    }
    out
}

/// Write `results.csv` and `results.dat` into `dir`.
pub fn report(results: &[PointResult], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("results.csv");
    fs::write(&csv_path, results_csv(results)).map_err(io_err(&csv_path))?;
    let dat_path = dir.join("results.dat");
    fs::write(&dat_path, results_dat(results)).map_err(io_err(&dat_path))
}

/// One training record: scaled metrics and the first-error bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub frame: u64,
    pub ebn0_db: f64,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub fingerprint: Fingerprint,
    pub normalization: f64,
    pub feature_len: usize,
    pub num_buckets: usize,
    pub ncs_bucket: usize,
    pub train_count: usize,
    pub validation_count: usize,
    /// Samples per bucket over both splits.
    pub label_histogram: Vec<usize>,
    pub frames_per_point: u64,
    pub ebn0_db: Vec<f64>,
    pub master_seed: u64,
}

/// Frames go to the validation split when this returns true (about 1 in 6).
pub fn is_validation_frame(master_seed: u64, ebn0_db: f64, frame: u64) -> bool {
    mix64(point_seed(master_seed, ebn0_db) ^ frame).is_multiple_of(6)
}

/// Raw (unscaled) samples from the frames whose initial CA-SCL decode fails
/// the CRC. Frames where the correct path survived to the end get the
/// catch-all bucket.
pub fn collect_samples(config: &ExperimentConfig, code: &PolarCode) -> Result<Vec<Sample>, HarnessError> {
    let map = BucketMap::new(code, config.list_size);
    let mut samples = Vec::new();
    for &ebn0 in &config.ebn0_db {
        let point = PointContext::new(config, code, None, ebn0)?;
        let batch = config.batch_size as u64;
        let mut start = 0;
        while start < config.frames_per_point {
            let end = (start + batch).min(config.frames_per_point);
            let found: Vec<Option<Sample>> = (start..end)
                .into_par_iter()
                .map_init(
                    || point.decoder(),
                    |dec, frame| -> Result<Option<Sample>, HarnessError> {
                        let (message, llrs) = point.input(frame)?;
                        let out = dec.decode(&llrs, None)?;
                        if out.crc_ok || out.trace.is_empty() {
                            return Ok(None);
                        }
                        let label = match label_first_error(&out.trace, &message, code) {
                            Ok(b) => b,
                            Err(FlipError::NoFirstError) => map.ncs_bucket(),
                            Err(e) => return Err(e.into()),
                        };
                        let features = metric_simplified(&out.trace)?;
                        Ok(Some(Sample { frame, ebn0_db: ebn0, features, label }))
                    },
                )
                .collect::<Result<_, _>>()?;
            samples.extend(found.into_iter().flatten());
            start = end;
        }
    }
    Ok(samples)
}

/// Mean absolute feature value, the default scale.
pub fn mean_abs(samples: &[Sample]) -> f64 {
    let (sum, count) = samples.iter().flat_map(|s| &s.features).fold((0.0, 0usize), |(s, c), v| (s + v.abs(), c + 1));
    if count == 0 || sum == 0.0 {
        1.0
    } else {
        sum / count as f64
    }
}

/// One CSV line: features divided by `scale`, then the label.
pub fn sample_line(sample: &Sample, scale: f64) -> String {
    let mut line = String::with_capacity(sample.features.len() * 12);
    for v in &sample.features {
        line.push_str(&format!("{},", v / scale));
    }
    line.push_str(&sample.label.to_string());
    line
}

/// Generate `train.csv`, `validation.csv` and `meta.json` in `out_dir`.
/// Returns the metadata, whose counts sum to the number of samples written.
pub fn generate_dataset(config: &ExperimentConfig, out_dir: &Path) -> Result<DatasetMeta, HarnessError> {
    config.validate()?;
    let code = config.code.build()?;
    let samples = with_pool(config.threads, || collect_samples(config, &code))??;
    let scale = config.normalization.unwrap_or_else(|| mean_abs(&samples));
    let map = BucketMap::new(&code, config.list_size);

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let train_path = out_dir.join("train.csv");
    let val_path = out_dir.join("validation.csv");
    let mut train = BufWriter::new(fs::File::create(&train_path).map_err(io_err(&train_path))?);
    let mut val = BufWriter::new(fs::File::create(&val_path).map_err(io_err(&val_path))?);
    let mut histogram = vec![0usize; map.num_buckets()];
    let (mut n_train, mut n_val) = (0, 0);
    for s in &samples {
        histogram[s.label] += 1;
        let line = sample_line(s, scale);
        if is_validation_frame(config.master_seed, s.ebn0_db, s.frame) {
            n_val += 1;
            writeln!(val, "{line}").map_err(io_err(&val_path))?;
        } else {
            n_train += 1;
            writeln!(train, "{line}").map_err(io_err(&train_path))?;
        }
    }
    train.flush().map_err(io_err(&train_path))?;
    val.flush().map_err(io_err(&val_path))?;

    let fingerprint = Fingerprint::of(&code, config.list_size);
    let meta = DatasetMeta {
        feature_len: fingerprint.sequence_len(),
        fingerprint,
        normalization: scale,
        num_buckets: map.num_buckets(),
        ncs_bucket: map.ncs_bucket(),
        train_count: n_train,
        validation_count: n_val,
        label_histogram: histogram,
        frames_per_point: config.frames_per_point,
        ebn0_db: config.ebn0_db.clone(),
        master_seed: config.master_seed,
    };
    write_json(&out_dir.join("meta.json"), &meta)?;
    write_json(&out_dir.join("code.json"), &code.description())?;
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            code: CodeConfig { n_bits: 64, k_info: 32, crc: Some(CrcSpec::crc8()), design_snr_db: 2.0 },
            list_size: 4,
            ebn0_db: vec![1.0, 3.0],
            frames_per_point: 300,
            target_block_errors: None,
            threads: Some(1),
            batch_size: 64,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(small().validate().is_ok());
        assert!(ExperimentConfig { frames_per_point: 0, ..small() }.validate().is_err());
        assert!(ExperimentConfig { ebn0_db: vec![], ..small() }.validate().is_err());
        assert!(ExperimentConfig { list_size: 3, ..small() }.validate().is_err());
        assert!(ExperimentConfig { strategy: Strategy::Lstm, t_max: 2, ..small() }.validate().is_err());
        assert!(ExperimentConfig { normalization: Some(-1.0), ..small() }.validate().is_err());
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"list_size": 4, "ebn0_db": [1.0]}"#).unwrap();
        assert_eq!(c.list_size, 4);
        assert_eq!(c.code, CodeConfig::default());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"lsit_size": 4}"#).is_err());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn counts_are_consistent() {
        let results = run_sweep(&ExperimentConfig { t_max: 4, ..small() }).unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert_eq!(r.frames, 300);
            assert_eq!(r.block_errors, r.detected_errors + r.undetected_errors);
            assert!(r.mean_extra_attempts <= 4.0);
            assert!(r.bler_low <= r.bler && r.bler <= r.bler_high);
        }
        assert!(results[0].bler >= results[1].bler);
    }

    #[test]
    fn early_stop_is_exact() {
        let c = ExperimentConfig { target_block_errors: Some(5), ebn0_db: vec![0.0], ..small() };
        let r = &run_sweep(&c).unwrap()[0];
        assert_eq!(r.block_errors, 5);
        assert!(r.frames < 300);
    }

    #[test]
    fn empty_report_is_header_only() {
        let text = results_csv(&[]);
        assert_eq!(text.trim_end(), CSV_COLUMNS.join(","));
        assert!(parse_results_csv(&text).unwrap().is_empty());
        assert!(results_dat(&[]).is_empty());
    }
}
