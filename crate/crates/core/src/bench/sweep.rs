//! Multi-seed hyper-parameter sweeps with an append-only, resumable results
//! file.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use crate::bench::{run_with_truth_using, MatchSettings};
use crate::dataset::DataMatrix;
use crate::engine::RunConfig;
use crate::error::{Error, Result};

/// Flags that may vary over a sweep grid.
pub const GRID_KEYS: [&str; 7] = ["prob", "mut", "tau", "decay", "patience", "strategy", "depth"];

const RESULT_COLUMNS: [&str; 10] = [
    "train_mse",
    "test_mse",
    "test_r2",
    "evaluations",
    "generations",
    "wall_time_s",
    "truth_match",
    "expression",
    "error",
    "truth",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("--{key}: cannot parse `{value}`")))
}

fn is_unset(value: &str) -> bool {
    matches!(value.trim().to_ascii_lowercase().as_str(), "none" | "inf" | "infinite" | "off" | "")
}

/// Sets one run flag (named as on the command line, without dashes).
pub fn apply_setting(config: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let cm = &mut config.coeffmut;
    match key {
        "pop" => config.population_size = parse_num(key, value)?,
        "depth" => config.depth = parse_num(key, value)?,
        "budget" => config.budget = parse_num(key, value)?,
        "batch" => config.batch_size = parse_num(key, value)?,
        "seed" => config.seed = parse_num(key, value)?,
        "threads" => config.threads = parse_num(key, value)?,
        "strategy" => cm.strategy = value.parse()?,
        "prob" => cm.probability = parse_num(key, value)?,
        "mut" => cm.mut_type = value.parse()?,
        "tau" => cm.tau = parse_num(key, value)?,
        "gamma" => cm.gamma = parse_num(key, value)?,
        "epsilon" => cm.epsilon = parse_num(key, value)?,
        "decay" => cm.decay = if is_unset(value) { None } else { Some(parse_num(key, value)?) },
        "patience" => cm.patience = if is_unset(value) { None } else { Some(parse_num(key, value)?) },
        other => return Err(Error::config(format!("unknown setting `{other}`"))),
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    /// Name written to the results file.
    pub name: String,
    pub train: PathBuf,
    pub test: Option<PathBuf>,
    pub truth: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Varied flags in file order, each with its value list.
    pub grid: Vec<(String, Vec<String>)>,
    pub seeds: Vec<u64>,
    pub datasets: Vec<DatasetSpec>,
    /// Settings shared by all runs.
    pub base: RunConfig,
    pub target: String,
    /// Concurrent runs; each run itself is single-threaded.
    pub workers: usize,
    /// Seeded train/test split fraction for datasets without a test file.
    pub split: Option<f64>,
    pub matching: MatchSettings,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            grid: Vec::new(),
            seeds: vec![0],
            datasets: Vec::new(),
            base: RunConfig::default(),
            target: "y".to_string(),
            workers: 1,
            split: None,
            matching: MatchSettings::default(),
        }
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect()
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for item in split_list(value) {
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: u64 = parse_num("seeds", lo)?;
            let hi: u64 = parse_num("seeds", hi)?;
            seeds.extend(lo..hi);
        } else {
            seeds.push(parse_num("seeds", &item)?);
        }
    }
    Ok(seeds)
}

impl SweepSpec {
    /// Parses the `key = v1, v2, ...` format. Relative paths resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<SweepSpec> {
        let mut spec = SweepSpec::default();
        let mut trains = Vec::new();
        let mut tests = Vec::new();
        let mut truths = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("sweep file line {}: expected `key = values`", lineno + 1)))?;
            let key = key.trim().trim_start_matches("--");
            let values = split_list(value);
            match key {
                "seeds" => spec.seeds = parse_seeds(value)?,
                "datasets" | "data" => trains = values,
                "test_datasets" | "test-data" => tests = values,
                "truths" | "truth" => truths = values,
                "target" => spec.target = value.trim().to_string(),
                "workers" => spec.workers = parse_num(key, value)?,
                "split" => spec.split = Some(parse_num(key, value)?),
                "match_r2" | "match-r2" => spec.matching.r2_threshold = parse_num(key, value)?,
                "match_size_factor" | "match-size-factor" => spec.matching.size_factor = parse_num(key, value)?,
                "n_probe" | "n-probe" => spec.matching.n_probe = parse_num(key, value)?,
                k if GRID_KEYS.contains(&k) => {
                    let mut probe = spec.base.clone();
                    for v in &values {
                        apply_setting(&mut probe, k, v)?;
                        probe.validate()?;
                    }
                    spec.grid.retain(|(existing, _)| existing != k);
                    spec.grid.push((k.to_string(), values));
                }
                k => {
                    if values.len() != 1 {
                        return Err(Error::config(format!("sweep file: `{k}` cannot vary; give a single value")));
                    }
                    apply_setting(&mut spec.base, k, &values[0])?;
                }
            }
        }
        if trains.is_empty() {
            return Err(Error::config("sweep file lists no datasets"));
        }
        if !tests.is_empty() && tests.len() != trains.len() {
            return Err(Error::config("test_datasets must pair one-to-one with datasets"));
        }
        if !truths.is_empty() && truths.len() != trains.len() {
            return Err(Error::config("truths must pair one-to-one with datasets"));
        }
        if spec.seeds.is_empty() {
            return Err(Error::config("sweep file lists no seeds"));
        }
        spec.base.validate()?;
        spec.datasets = trains
            .iter()
            .enumerate()
            .map(|(i, name)| DatasetSpec {
                name: name.clone(),
                train: base_dir.join(name),
                test: tests.get(i).map(|t| base_dir.join(t)),
                truth: truths.get(i).cloned(),
            })
            .collect();
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<SweepSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        SweepSpec::parse(&text, dir)
    }

    pub fn grid_keys(&self) -> Vec<String> {
        self.grid.iter().map(|(k, _)| k.clone()).collect()
    }

    /// Cartesian product of the grid, first key varying slowest.
    pub fn grid_points(&self) -> Vec<Vec<String>> {
        self.grid.iter().fold(vec![Vec::new()], |acc, (_, values)| {
            acc.iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v.clone());
                        p
                    })
                })
                .collect()
        })
    }

    pub fn run_count(&self) -> usize {
        self.grid_points().len() * self.seeds.len() * self.datasets.len()
    }

    fn config_for(&self, point: &[String], seed: u64) -> Result<RunConfig> {
        let mut cfg = self.base.clone();
        for ((key, _), value) in self.grid.iter().zip(point) {
            apply_setting(&mut cfg, key, value)?;
        }
        cfg.seed = seed;
        cfg.threads = 1;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One line of the results file.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub dataset: String,
    pub seed: u64,
    /// Values of the grid keys, in header order.
    pub settings: Vec<String>,
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub test_r2: Option<f64>,
    pub evaluations: Option<u64>,
    pub generations: Option<u64>,
    pub wall_time_s: f64,
    pub truth_match: Option<bool>,
    pub expression: String,
    pub error: String,
    pub truth: String,
}

impl SweepRow {
    fn key(&self) -> (String, u64, Vec<String>) {
        (self.dataset.clone(), self.seed, self.settings.clone())
    }

    fn to_record(&self) -> Vec<String> {
        fn num(v: Option<f64>) -> String {
            v.map(|x| format!("{x:?}")).unwrap_or_default()
        }
        let mut r = vec![self.dataset.clone(), self.seed.to_string()];
        r.extend(self.settings.iter().cloned());
        r.push(num(self.train_mse));
        r.push(num(self.test_mse));
        r.push(num(self.test_r2));
        r.push(self.evaluations.map(|v| v.to_string()).unwrap_or_default());
        r.push(self.generations.map(|v| v.to_string()).unwrap_or_default());
        r.push(format!("{:?}", self.wall_time_s));
        r.push(self.truth_match.map(|b| b.to_string()).unwrap_or_default());
        r.push(self.expression.clone());
        r.push(self.error.clone());
        r.push(self.truth.clone());
        r
    }

    fn from_record(record: &csv::StringRecord, n_settings: usize) -> Result<SweepRow> {
        let field = |i: usize| record.get(i).unwrap_or("");
        let opt_f64 = |i: usize| -> Result<Option<f64>> {
            let s = field(i);
            if s.is_empty() {
                Ok(None)
            } else {
                parse_num("results", s).map(Some)
            }
        };
        let opt_u64 = |i: usize| -> Result<Option<u64>> {
            let s = field(i);
            if s.is_empty() {
                Ok(None)
            } else {
                parse_num("results", s).map(Some)
            }
        };
        let base = 2 + n_settings;
        Ok(SweepRow {
            dataset: field(0).to_string(),
            seed: parse_num("results", field(1))?,
            settings: (2..base).map(|i| field(i).to_string()).collect(),
            train_mse: opt_f64(base)?,
            test_mse: opt_f64(base + 1)?,
            test_r2: opt_f64(base + 2)?,
            evaluations: opt_u64(base + 3)?,
            generations: opt_u64(base + 4)?,
            wall_time_s: opt_f64(base + 5)?.unwrap_or(0.0),
            truth_match: match field(base + 6) {
                "" => None,
                s => Some(s == "true"),
            },
            expression: field(base + 7).to_string(),
            error: field(base + 8).to_string(),
            truth: field(base + 9).to_string(),
        })
    }
}

fn header(grid_keys: &[String]) -> Vec<String> {
    let mut h = vec!["dataset".to_string(), "seed".to_string()];
    h.extend(grid_keys.iter().cloned());
    h.extend(RESULT_COLUMNS.iter().map(|s| s.to_string()));
    h
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a results file; returns its grid keys and rows.
pub fn read_results(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<SweepRow>)> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let n_settings = headers
        .len()
        .checked_sub(2 + RESULT_COLUMNS.len())
        .ok_or_else(|| Error::Load {
            path: path.to_path_buf(),
            message: "not a sweep results file".into(),
        })?;
    let keys: Vec<String> = headers.iter().skip(2).take(n_settings).map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(SweepRow::from_record(&record.map_err(csv_err(path))?, n_settings)?);
    }
    Ok((keys, rows))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepOutcome {
    pub planned: usize,
    pub skipped: usize,
    pub executed: usize,
    pub failed: usize,
}

struct LoadedDataset {
    train: DataMatrix,
    test: Option<DataMatrix>,
}

fn load_dataset(spec: &DatasetSpec, target: &str, split: Option<f64>, seed: u64) -> Result<LoadedDataset> {
    let train = DataMatrix::load_csv(&spec.train, target)?;
    match (&spec.test, split) {
        (Some(test), _) => Ok(LoadedDataset {
            train,
            test: Some(DataMatrix::load_csv(test, target)?),
        }),
        (None, Some(frac)) => {
            let (train, test) = train.split(frac, seed)?;
            Ok(LoadedDataset { train, test: Some(test) })
        }
        (None, None) => Ok(LoadedDataset { train, test: None }),
    }
}

/// Executes every (dataset, grid point, seed) combination not already present
/// in `results_path`, appending one row per run as it finishes.
pub fn run_sweep(spec: &SweepSpec, results_path: impl AsRef<Path>) -> Result<SweepOutcome> {
    let path = results_path.as_ref();
    let keys = spec.grid_keys();
    let mut done: HashSet<(String, u64, Vec<String>)> = HashSet::new();
    let resume = path.exists() && std::fs::metadata(path)?.len() > 0;
    if resume {
        let (existing_keys, rows) = read_results(path)?;
        if existing_keys != keys {
            return Err(Error::Load {
                path: path.to_path_buf(),
                message: format!("existing results use grid keys {existing_keys:?}, sweep uses {keys:?}"),
            });
        }
        done.extend(rows.iter().map(SweepRow::key));
    }

    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if !resume {
        writer.write_record(header(&keys)).map_err(csv_err(path))?;
        writer.flush()?;
    }

    let points = spec.grid_points();
    let mut plan = Vec::new();
    for (d, ds) in spec.datasets.iter().enumerate() {
        for point in &points {
            for &seed in &spec.seeds {
                if !done.contains(&(ds.name.clone(), seed, point.clone())) {
                    plan.push((d, point.clone(), seed));
                }
            }
        }
    }
    let mut outcome = SweepOutcome {
        planned: spec.run_count(),
        skipped: spec.run_count() - plan.len(),
        ..SweepOutcome::default()
    };

    // The split seed is fixed per dataset so every configuration sees the same partition.
    let loaded: Vec<std::result::Result<LoadedDataset, String>> = spec
        .datasets
        .iter()
        .map(|ds| load_dataset(ds, &spec.target, spec.split, 0).map_err(|e| e.to_string()))
        .collect();

    let writer = Mutex::new(writer);
    let run_one = |(d, point, seed): &(usize, Vec<String>, u64)| -> Result<bool> {
        let ds = &spec.datasets[*d];
        let start = Instant::now();
        let mut row = SweepRow {
            dataset: ds.name.clone(),
            seed: *seed,
            settings: point.clone(),
            train_mse: None,
            test_mse: None,
            test_r2: None,
            evaluations: None,
            generations: None,
            wall_time_s: 0.0,
            truth_match: None,
            expression: String::new(),
            error: String::new(),
            truth: ds.truth.clone().unwrap_or_default(),
        };
        let result = match &loaded[*d] {
            Err(e) => Err(e.clone()),
            Ok(data) => spec
                .config_for(point, *seed)
                .and_then(|cfg| run_with_truth_using(cfg, &data.train, data.test.as_ref(), ds.truth.as_deref(), &spec.matching))
                .map_err(|e| e.to_string()),
        };
        let ok = match result {
            Ok(report) => {
                row.train_mse = Some(report.best_train_mse_fullset);
                row.test_mse = report.test_mse;
                row.test_r2 = report.test_r2;
                row.evaluations = Some(report.evaluations_used);
                row.generations = Some(report.generations);
                row.truth_match = report.truth_match;
                row.expression = report.best_expression;
                true
            }
            Err(e) => {
                row.error = e;
                false
            }
        };
        row.wall_time_s = start.elapsed().as_secs_f64();
        let mut w = writer.lock().expect("results writer poisoned");
        w.write_record(row.to_record()).map_err(csv_err(path))?;
        w.flush()?;
        Ok(ok)
    };

    let results: Vec<Result<bool>> = if spec.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| plan.par_iter().map(run_one).collect())
    } else {
        plan.iter().map(run_one).collect()
    };
    for r in results {
        outcome.executed += 1;
        if !r? {
            outcome.failed += 1;
        }
    }
    Ok(outcome)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Medians over seeds for one (dataset, grid point).
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub settings: Vec<String>,
    pub runs: usize,
    pub failures: usize,
    pub median_train_mse: Option<f64>,
    pub median_test_mse: Option<f64>,
    pub median_test_r2: Option<f64>,
    pub solution_rate: Option<f64>,
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, Vec<String>), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.dataset.clone(), r.settings.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, settings), members)| {
            let ok: Vec<&&SweepRow> = members.iter().filter(|r| r.error.is_empty()).collect();
            let collect = |f: fn(&SweepRow) -> Option<f64>| {
                let mut v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                median(&mut v)
            };
            let median_train_mse = collect(|r| r.train_mse);
            let median_test_mse = collect(|r| r.test_mse);
            let median_test_r2 = collect(|r| r.test_r2);
            let judged: Vec<bool> = ok.iter().filter_map(|r| r.truth_match).collect();
            let solution_rate =
                (!judged.is_empty()).then(|| judged.iter().filter(|&&m| m).count() as f64 / judged.len() as f64);
            SummaryRow {
                dataset,
                settings,
                runs: members.len(),
                failures: members.len() - ok.len(),
                median_train_mse,
                median_test_mse,
                median_test_r2,
                solution_rate,
            }
        })
        .collect()
}

pub fn write_summary(grid_keys: &[String], summary: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut h = vec!["dataset".to_string()];
    h.extend(grid_keys.iter().cloned());
    h.extend(
        ["runs", "failures", "median_train_mse", "median_test_mse", "median_test_r2", "solution_rate"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&h).map_err(csv_err(path))?;
    let num = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for s in summary {
        let mut r = vec![s.dataset.clone()];
        r.extend(s.settings.iter().cloned());
        r.push(s.runs.to_string());
        r.push(s.failures.to_string());
        r.push(num(s.median_train_mse));
        r.push(num(s.median_test_mse));
        r.push(num(s.median_test_r2));
        r.push(num(s.solution_rate));
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush()?;
    Ok(())
}
