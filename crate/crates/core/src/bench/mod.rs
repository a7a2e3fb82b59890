//! Benchmark helpers: expression parsing, ground-truth checks and sweeps.

pub mod parse;
pub mod sweep;
pub mod truth;

pub use parse::{parse_expression, Expr};
pub use sweep::{aggregate, apply_setting, read_results, run_sweep, write_summary, SweepOutcome, SweepRow, SweepSpec, SummaryRow};
pub use truth::{match_detail, numeric_ground_truth_match, synthesize, GroundTruthSpec, MatchDetail};

use crate::dataset::DataMatrix;
use crate::engine::{run, RunConfig, RunReport};
use crate::error::Result;
use crate::rng::stream;

/// Knobs of the ground-truth match check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchSettings {
    pub r2_threshold: f64,
    pub size_factor: f64,
    pub n_probe: usize,
}

impl Default for MatchSettings {
    fn default() -> Self {
        MatchSettings {
            r2_threshold: truth::DEFAULT_R2_THRESHOLD,
            size_factor: truth::DEFAULT_SIZE_FACTOR,
            n_probe: truth::DEFAULT_PROBES,
        }
    }
}

/// Runs one search and, when a ground-truth formula is given, fills in
/// `truth_match` using default match settings.
pub fn run_with_truth(config: RunConfig, train: &DataMatrix, test: Option<&DataMatrix>, truth: Option<&str>) -> Result<RunReport> {
    run_with_truth_using(config, train, test, truth, &MatchSettings::default())
}

/// As [`run_with_truth`] with explicit match settings.
pub fn run_with_truth_using(
    config: RunConfig,
    train: &DataMatrix,
    test: Option<&DataMatrix>,
    truth: Option<&str>,
    settings: &MatchSettings,
) -> Result<RunReport> {
    // Parse the truth first so a bad formula fails before the search.
    if let Some(t) = truth {
        GroundTruthSpec::from_data(t, train)?;
    }
    let seed = config.seed;
    let mut report = run(config, train, test)?;
    if let Some(t) = truth {
        report.truth_match = Some(judge_truth(&report.best_expression, t, train, settings, seed)?);
    }
    Ok(report)
}

/// Match check of `expression` against `truth`, probing the training data's
/// feature ranges with a stream derived from `seed`.
pub fn judge_truth(expression: &str, truth: &str, train: &DataMatrix, settings: &MatchSettings, seed: u64) -> Result<bool> {
    let mut spec = GroundTruthSpec::from_data(truth, train)?;
    spec.r2_threshold = settings.r2_threshold;
    spec.size_factor = settings.size_factor;
    spec.n_probe = settings.n_probe;
    numeric_ground_truth_match(expression, &spec, &mut stream(seed, &[0x7257]))
}
