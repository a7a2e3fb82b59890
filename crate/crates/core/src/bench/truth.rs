//! Numeric stand-in for symbolic ground-truth recovery, and synthetic data
//! generation from known formulas.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bench::parse::{parse_expression, Expr};
use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::evaluator::linear_scale;

pub const DEFAULT_R2_THRESHOLD: f64 = 0.999;
pub const DEFAULT_SIZE_FACTOR: f64 = 2.0;
pub const DEFAULT_PROBES: usize = 1000;
/// Fraction of probes allowed to produce non-finite candidate output.
const MAX_NON_FINITE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthSpec {
    pub source: String,
    pub expr: Expr,
    pub feature_names: Vec<String>,
    /// One closed interval per feature.
    pub domain: Vec<(f64, f64)>,
    pub n_probe: usize,
    pub r2_threshold: f64,
    pub size_factor: f64,
}

impl GroundTruthSpec {
    pub fn new(source: &str, feature_names: Vec<String>, domain: Vec<(f64, f64)>) -> Result<Self> {
        if feature_names.len() != domain.len() {
            return Err(Error::config("one domain interval per feature is required"));
        }
        let expr = parse_expression(source, &feature_names)?;
        if let Some(j) = expr.max_feature() {
            if j >= domain.len() {
                return Err(Error::config(format!("ground truth uses feature x{} but only {} exist", j + 1, domain.len())));
            }
        }
        Ok(GroundTruthSpec {
            source: source.to_string(),
            expr,
            feature_names,
            domain,
            n_probe: DEFAULT_PROBES,
            r2_threshold: DEFAULT_R2_THRESHOLD,
            size_factor: DEFAULT_SIZE_FACTOR,
        })
    }

    /// Probe domain spanning each feature's observed range.
    pub fn from_data(source: &str, data: &DataMatrix) -> Result<Self> {
        let domain = (0..data.n_features())
            .map(|j| {
                let col = data.column(j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        GroundTruthSpec::new(source, data.feature_names().to_vec(), domain)
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.domain
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    }
}

/// Outcome details of a match check.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchDetail {
    pub r2: f64,
    pub candidate_size: usize,
    pub truth_size: usize,
    pub non_finite_fraction: f64,
    pub matched: bool,
}

/// `true` iff the candidate, after linear scaling onto the truth, reaches the
/// R² threshold on random probes and is at most `size_factor` times the
/// truth's size (both measured without outer affine wrappers).
pub fn numeric_ground_truth_match<R: Rng + ?Sized>(candidate: &str, truth: &GroundTruthSpec, rng: &mut R) -> Result<bool> {
    Ok(match_detail(candidate, truth, rng)?.matched)
}

pub fn match_detail<R: Rng + ?Sized>(candidate: &str, truth: &GroundTruthSpec, rng: &mut R) -> Result<MatchDetail> {
    let cand = parse_expression(candidate, &truth.feature_names)?;
    let candidate_size = cand.strip_affine().node_count();
    let truth_size = truth.expr.strip_affine().node_count();

    let mut cand_out = Vec::with_capacity(truth.n_probe);
    let mut truth_out = Vec::with_capacity(truth.n_probe);
    let mut non_finite = 0usize;
    for _ in 0..truth.n_probe {
        let x = truth.sample_point(rng);
        let t = truth.expr.eval(&x);
        if !t.is_finite() {
            continue;
        }
        let c = cand.eval(&x);
        if !c.is_finite() {
            non_finite += 1;
            continue;
        }
        cand_out.push(c);
        truth_out.push(t);
    }
    let probes = cand_out.len() + non_finite;
    let non_finite_fraction = if probes == 0 { 1.0 } else { non_finite as f64 / probes as f64 };
    if cand_out.is_empty() || non_finite_fraction > MAX_NON_FINITE {
        return Ok(MatchDetail {
            r2: f64::NEG_INFINITY,
            candidate_size,
            truth_size,
            non_finite_fraction,
            matched: false,
        });
    }

    let (a, b) = linear_scale(&cand_out, &truth_out);
    let mean = truth_out.iter().sum::<f64>() / truth_out.len() as f64;
    let ss_tot: f64 = truth_out.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = cand_out
        .iter()
        .zip(&truth_out)
        .map(|(c, t)| (t - (a + b * c)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    let matched = r2 >= truth.r2_threshold && (candidate_size as f64) <= truth.size_factor * truth_size as f64;
    Ok(MatchDetail {
        r2,
        candidate_size,
        truth_size,
        non_finite_fraction,
        matched,
    })
}

/// Samples `n` points uniformly from `domain` and labels them with `truth`.
/// With `snr = Some(s)`, adds Gaussian noise of standard deviation
/// `rms(y) / s`.
pub fn synthesize<R: Rng + ?Sized>(truth: &str, domain: &[(f64, f64)], n: usize, snr: Option<f64>, rng: &mut R) -> Result<DataMatrix> {
    let names: Vec<String> = (1..=domain.len()).map(|j| format!("x{j}")).collect();
    let spec = GroundTruthSpec::new(truth, names.clone(), domain.to_vec())?;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| spec.sample_point(rng)).collect();
    let mut y: Vec<f64> = rows.iter().map(|r| spec.expr.eval(r)).collect();
    if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::config(format!("`{truth}` is not finite at {:?}", rows[bad])));
    }
    if let Some(snr) = snr {
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let sd = rms / snr;
        for v in &mut y {
            let z: f64 = StandardNormal.sample(rng);
            *v += sd * z;
        }
    }
    let mut columns = vec![Vec::with_capacity(n); domain.len()];
    for row in &rows {
        for (col, &v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    DataMatrix::from_columns(columns, y, names)
}
