//! Argument handling and command execution for the `gomea` binary.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::builder::TypedValueParser as _;
use clap::{CommandFactory, Parser};
use gomea::bench::sweep::{aggregate, read_results, run_sweep, write_summary, SweepSpec};
use gomea::bench::{judge_truth, GroundTruthSpec, MatchSettings};
use gomea::{CoeffMutConfig, DataMatrix, Gomea, RunConfig};

/// Symbolic regression with GP-GOMEA and coefficient mutation.
#[derive(Parser, Debug, Clone)]
#[command(name = "gomea", version)]
pub struct Cli {
    /// Training data CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out data CSV, same columns as --data.
    #[arg(long, conflicts_with = "split")]
    pub test_data: Option<PathBuf>,
    /// Fraction of --data held out for testing (seeded by --seed).
    #[arg(long)]
    pub split: Option<f64>,
    /// Name of the target column.
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, default_value_t = 4, value_parser = clap::builder::PossibleValuesParser::new(["4", "6"]).map(|s| s.parse::<usize>().unwrap()))]
    pub depth: usize,
    #[arg(long, default_value_t = 1000)]
    pub pop: usize,
    /// Evaluation budget.
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: u64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value = "never", value_parser = ["never", "after1", "afterfos", "between", "within"])]
    pub strategy: String,
    /// Per-constant mutation probability.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub prob: f64,
    #[arg(long = "mut", default_value = "temp", value_parser = ["es", "temp"])]
    pub mut_type: String,
    /// Initial temperature of temperature-based mutation.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub gamma: f64,
    /// Lower bound on ES step sizes.
    #[arg(long, default_value_t = 1e-16, allow_negative_numbers = true)]
    pub epsilon: f64,
    /// Temperature decay factor, or `none`.
    #[arg(long, allow_negative_numbers = true)]
    pub decay: Option<String>,
    /// Stalled generations before decaying, or `none`.
    #[arg(long, allow_negative_numbers = true)]
    pub patience: Option<String>,
    /// Run the sweep described in this file instead of a single run.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Known formula of the data; the report then says whether it was found.
    #[arg(long)]
    pub truth: Option<String>,
    /// R² a candidate must reach to count as the truth.
    #[arg(long, default_value_t = 0.999)]
    pub match_r2: f64,
    /// Allowed candidate size relative to the truth.
    #[arg(long, default_value_t = 2.0)]
    pub match_size_factor: f64,
    /// Print the last generation's linkage tree.
    #[arg(long)]
    pub dump_fos: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn usage_error(message: impl std::fmt::Display) -> clap::Error {
    Cli::command().error(ErrorKind::ValueValidation, message)
}

impl Cli {
    /// Validated run configuration described by the flags.
    pub fn to_config(&self) -> Result<RunConfig, clap::Error> {
        let mut config = RunConfig {
            population_size: self.pop,
            depth: self.depth,
            budget: self.budget,
            batch_size: self.batch,
            seed: self.seed,
            threads: self.threads,
            coeffmut: CoeffMutConfig {
                probability: self.prob,
                tau: self.tau,
                gamma: self.gamma,
                epsilon: self.epsilon,
                ..CoeffMutConfig::default()
            },
            ..RunConfig::default()
        };
        let settings = [
            ("strategy", Some(&self.strategy)),
            ("mut", Some(&self.mut_type)),
            ("decay", self.decay.as_ref()),
            ("patience", self.patience.as_ref()),
        ];
        for (key, value) in settings {
            if let Some(v) = value {
                gomea::bench::apply_setting(&mut config, key, v).map_err(usage_error)?;
            }
        }
        config.validate().map_err(usage_error)?;
        if let Some(f) = self.split {
            if !(f > 0.0 && f < 1.0) {
                return Err(usage_error(format!("--split must lie in (0, 1), got {f}")));
            }
        }
        if !(self.match_r2 > 0.0 && self.match_r2 <= 1.0) {
            return Err(usage_error(format!("--match-r2 must lie in (0, 1], got {}", self.match_r2)));
        }
        if !(self.match_size_factor > 0.0) {
            return Err(usage_error("--match-size-factor must be positive"));
        }
        Ok(config)
    }

    pub fn match_settings(&self) -> MatchSettings {
        MatchSettings {
            r2_threshold: self.match_r2,
            size_factor: self.match_size_factor,
            ..MatchSettings::default()
        }
    }
}

/// Parses command-line arguments (program name first) into a validated
/// configuration.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)?.to_config()
}

/// Summary printed after a single run.
#[derive(Debug)]
pub struct RunSummary {
    pub report: gomea::RunReport,
    pub fos: Option<String>,
}

pub fn run_single(cli: &Cli) -> Result<RunSummary, Box<dyn std::error::Error>> {
    let config = cli.to_config()?;
    let data_path = cli.data.as_ref().ok_or("--data is required")?;
    let data = DataMatrix::load_csv(data_path, &cli.target)?;
    let (train, test) = match (&cli.test_data, cli.split) {
        (Some(path), _) => (data, Some(DataMatrix::load_csv(path, &cli.target)?)),
        (None, Some(frac)) => {
            let (train, test) = data.split(frac, cli.seed)?;
            (train, Some(test))
        }
        (None, None) => (data, None),
    };
    if train.coefficient_scale() == 0.0 {
        eprintln!("warning: every feature value is zero, so random constants start at zero");
    }
    if let Some(t) = &cli.truth {
        GroundTruthSpec::from_data(t, &train)?;
    }

    let seed = config.seed;
    let mut engine = Gomea::new(config, &train)?;
    engine.run_to_completion();
    let fos = cli.dump_fos.then(|| engine.last_fos().map(|f| f.to_nested_string())).flatten();
    let mut report = engine.report(test.as_ref());
    if let Some(t) = &cli.truth {
        report.truth_match = Some(judge_truth(&report.best_expression, t, &train, &cli.match_settings(), seed)?);
    }

    std::fs::create_dir_all(&cli.out)?;
    report.write_json(cli.out.join("report.json"))?;
    report.write_generation_csv(cli.out.join("generations.csv"))?;
    if let Some(f) = &fos {
        std::fs::write(cli.out.join("fos.txt"), format!("{f}\n"))?;
    }
    Ok(RunSummary { report, fos })
}

/// Runs a sweep file; results and a per-configuration summary go to `out`.
pub fn run_sweep_file(spec_path: &Path, out: &Path) -> Result<String, Box<dyn std::error::Error>> {
    let spec = SweepSpec::from_file(spec_path)?;
    std::fs::create_dir_all(out)?;
    let results = out.join("results.csv");
    let outcome = run_sweep(&spec, &results)?;
    let (keys, rows) = read_results(&results)?;
    write_summary(&keys, &aggregate(&rows), out.join("summary.csv"))?;
    Ok(format!(
        "{} runs planned, {} already done, {} executed, {} failed; results in {}",
        outcome.planned,
        outcome.skipped,
        outcome.executed,
        outcome.failed,
        results.display()
    ))
}
