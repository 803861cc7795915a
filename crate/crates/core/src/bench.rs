//! Synthetic ratio-ascent laboratory and run aggregation.
//!
//! The laboratory strips away networks and environments: each sample is a
//! free ratio variable starting at 1 with a fixed advantage drawn once
//! from a standard normal, and every step moves each ratio by plain
//! gradient ascent on the chosen per-sample objective. What remains is the
//! geometry of the objectives themselves: where their stationary points
//! sit and how fast each sample travels.
//!
//! Observed dynamics, pinned by the unit tests below:
//!
//! * the quadratic-penalty objective and the distance parabola both drive
//!   every ratio to 1 + sign(A)*eps, the former at a per-sample rate
//!   proportional to |A|, the latter at one shared rate;
//! * the clipped objective moves ratios at rate lr*|A| until they cross
//!   the band edge and then freezes them: every point past the edge is
//!   stationary, so ratios settle at most lr*max|A| beyond 1 +/- eps
//!   rather than running away.
//!
//! The "surrogate" tracked per step is the linear objective mean(r*A) that
//! all three shapes are chaperoning.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::objectives::{self, ObjectiveKind};
use crate::rng::Rng;

pub const DEFAULT_NUM_SAMPLES: usize = 1024;
pub const DEFAULT_EPS: f64 = 0.2;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_NUM_STEPS: usize = 10_000;

/// Smallest ratio the ascent will produce; keeps ratios positive.
pub const RATIO_FLOOR: f64 = 1e-6;

/// One synthetic optimization problem: fixed advantages, free ratios.
#[derive(Debug, Clone)]
pub struct SyntheticBatch {
    pub advantages: Vec<f64>,
    /// Initialized to 1 for every sample.
    pub ratios: Vec<f64>,
    pub eps: f64,
    pub learning_rate: f64,
    pub num_steps: usize,
}

impl SyntheticBatch {
    /// Standard-normal advantages from the given seed, defaults elsewhere.
    pub fn standard_normal(seed: u64) -> Self {
        SyntheticBatch::standard_normal_with_size(seed, DEFAULT_NUM_SAMPLES)
    }

    /// Same as [`SyntheticBatch::standard_normal`] with an explicit sample count.
    pub fn standard_normal_with_size(seed: u64, num_samples: usize) -> Self {
        let mut rng = Rng::new(seed);
        let advantages = (0..num_samples).map(|_| rng.normal()).collect();
        SyntheticBatch::with_advantages(
            advantages,
            DEFAULT_EPS,
            DEFAULT_LEARNING_RATE,
            DEFAULT_NUM_STEPS,
        )
    }

    pub fn with_advantages(
        advantages: Vec<f64>,
        eps: f64,
        learning_rate: f64,
        num_steps: usize,
    ) -> Self {
        let ratios = vec![1.0; advantages.len()];
        SyntheticBatch { advantages, ratios, eps, learning_rate, num_steps }
    }

    fn validate(&self, kind: ObjectiveKind) -> Result<()> {
        kind.validate_eps(self.eps)?;
        if self.advantages.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if self.ratios.len() != self.advantages.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ratios vs {} advantages",
                self.ratios.len(),
                self.advantages.len()
            )));
        }
        if !(self.learning_rate > 0.0) || self.num_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} and step count {} must be positive",
                self.learning_rate, self.num_steps
            )));
        }
        if self.ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidConfig("ratios must start positive".into()));
        }
        Ok(())
    }
}

/// Batch statistics after one ascent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRecord {
    pub step: usize,
    /// mean(r * A), the linear surrogate.
    pub mean_surrogate: f64,
    /// mean |r - 1|.
    pub mean_ratio_dev: f64,
    /// max |r - 1| at this step.
    pub max_ratio_dev: f64,
}

/// Full trajectory of one (objective, batch) run.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub kind: ObjectiveKind,
    /// Records for steps 0 (initial state) through num_steps inclusive.
    pub records: Vec<BenchRecord>,
    pub final_ratios: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// One gradient-ascent step over all ratios in place, with the positivity
/// floor applied. `eps` must already be validated for `kind`.
pub fn ratio_ascent_step(
    kind: ObjectiveKind,
    ratios: &mut [f64],
    advantages: &[f64],
    eps: f64,
    learning_rate: f64,
) {
    for (r, &a) in ratios.iter_mut().zip(advantages) {
        let g = objectives::grad_raw(kind, *r, a, eps);
        *r = (*r + learning_rate * g).max(RATIO_FLOOR);
    }
}

fn record_at(step: usize, ratios: &[f64], advantages: &[f64]) -> BenchRecord {
    let n = ratios.len() as f64;
    let mut surrogate = 0.0;
    let mut dev_sum = 0.0;
    let mut dev_max: f64 = 0.0;
    for (&r, &a) in ratios.iter().zip(advantages) {
        surrogate += r * a;
        let d = (r - 1.0).abs();
        dev_sum += d;
        dev_max = dev_max.max(d);
    }
    BenchRecord {
        step,
        mean_surrogate: surrogate / n,
        mean_ratio_dev: dev_sum / n,
        max_ratio_dev: dev_max,
    }
}

/// Runs gradient ascent on the batch's ratios under the given objective
/// and logs batch statistics at every step.
pub fn run_ratio_bench(batch: &SyntheticBatch, kind: ObjectiveKind) -> Result<BenchRun> {
    batch.validate(kind)?;
    let mut ratios = batch.ratios.clone();
    let mut records = Vec::with_capacity(batch.num_steps + 1);
    records.push(record_at(0, &ratios, &batch.advantages));
    for step in 1..=batch.num_steps {
        ratio_ascent_step(kind, &mut ratios, &batch.advantages, batch.eps, batch.learning_rate);
        records.push(record_at(step, &ratios, &batch.advantages));
    }
    Ok(BenchRun { kind, records, final_ratios: ratios, advantages: batch.advantages.clone() })
}

/// Writes a trajectory as CSV with a fixed header. Formatting uses the
/// shortest round-trip representation, so identical runs produce
/// byte-identical files.
pub fn write_bench_csv(path: &Path, records: &[BenchRecord]) -> Result<()> {
    let mut out = Vec::with_capacity(records.len() * 48 + 64);
    writeln!(out, "step,mean_surrogate,mean_ratio_dev,max_ratio_dev")?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.step, r.mean_surrogate, r.mean_ratio_dev, r.max_ratio_dev)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Linear rescaling of a score against reference bounds: 0 at `min_ref`,
/// 1 at `max_ref`, unclamped beyond them.
pub fn normalized_score(score: f64, min_ref: f64, max_ref: f64) -> Result<f64> {
    if !(max_ref > min_ref) {
        return Err(Error::InvalidConfig(format!(
            "reference range [{min_ref}, {max_ref}] is degenerate"
        )));
    }
    Ok((score - min_ref) / (max_ref - min_ref))
}

/// Per-run tail means of `mean_episode_return`, plus their cross-run mean
/// and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAggregate {
    pub per_run: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Reads training metrics CSVs and averages `mean_episode_return` over the
/// final `last_fraction` of each file's records. Rows whose return parses
/// as NaN (phases without a finished episode) are skipped; a run whose
/// window holds no usable row is an error.
pub fn aggregate_runs(paths: &[std::path::PathBuf], last_fraction: f64) -> Result<RunAggregate> {
    if paths.is_empty() {
        return Err(Error::InvalidConfig("no metrics files given".into()));
    }
    if !(last_fraction > 0.0 && last_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("last fraction {last_fraction} not in (0, 1]")));
    }
    let mut per_run = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidConfig(format!("{} is empty", path.display())))?;
        let col = header
            .split(',')
            .position(|name| name == "mean_episode_return")
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{} has no mean_episode_return column",
                    path.display()
                ))
            })?;
        let returns: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split(',').nth(col).map(|v| v.parse::<f64>()).transpose().ok().flatten()
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("{}: bad row {line:?}", path.display()))
                    })
            })
            .collect::<Result<_>>()?;
        if returns.is_empty() {
            return Err(Error::InvalidConfig(format!("{} has no data rows", path.display())));
        }
        let take = ((returns.len() as f64 * last_fraction).ceil() as usize).clamp(1, returns.len());
        let tail = &returns[returns.len() - take..];
        let usable: Vec<f64> = tail.iter().copied().filter(|v| !v.is_nan()).collect();
        if usable.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "{}: no finished episodes in the final window",
                path.display()
            )));
        }
        per_run.push(usable.iter().sum::<f64>() / usable.len() as f64);
    }
    let mean = per_run.iter().sum::<f64>() / per_run.len() as f64;
    let var = per_run.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / per_run.len() as f64;
    Ok(RunAggregate { per_run, mean, std: var.sqrt() })
}
