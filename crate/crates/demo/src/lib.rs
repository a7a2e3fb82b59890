//! WebAssembly entry points for the browser demo. Each export wraps a plain
//! Rust function and returns its result as a JSON string.

use gomea::bench::{judge_truth, parse_expression, synthesize, MatchSettings};
use gomea::coeffmut::{es_mutate, temp_mutate, CoeffMutConfig};
use gomea::evaluator::predict;
use gomea::expr::{Function, InitMode, InitParams, Template, Tree};
use gomea::linkage::{build_linkage_tree, pairwise_nmi, symbolize_population};
use gomea::rng::stream;
use gomea::{Gomea, RunConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const MAX_FEATURES: usize = 5;

#[derive(Clone, Debug)]
pub struct FitRequest {
    pub target: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub population: usize,
    pub budget: u64,
    pub strategy: String,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub evaluations: u64,
    pub elite_mse: f64,
    pub tau: f64,
}

#[derive(Debug, Serialize)]
pub struct FitResult {
    pub expression: String,
    pub scale_a: f64,
    pub scale_b: f64,
    pub train_mse: f64,
    pub truth_match: bool,
    pub generations: u64,
    pub evaluations: u64,
    pub curve: Vec<CurvePoint>,
    /// First feature, target and model output, sorted by the feature.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub prediction: Vec<f64>,
}

fn feature_names() -> Vec<String> {
    (1..=MAX_FEATURES).map(|j| format!("x{j}")).collect()
}

pub fn fit(req: &FitRequest) -> Result<FitResult, String> {
    if !(req.lo < req.hi) || !req.lo.is_finite() || !req.hi.is_finite() {
        return Err("the sampling interval must satisfy lo < hi".into());
    }
    if !(10..=5000).contains(&req.n) {
        return Err("use between 10 and 5000 points".into());
    }
    let parsed = parse_expression(&req.target, &feature_names()).map_err(|e| e.to_string())?;
    let n_features = parsed.max_feature().map_or(1, |j| j + 1);
    let domain = vec![(req.lo, req.hi); n_features];
    let data = synthesize(&req.target, &domain, req.n, None, &mut stream(req.seed, &[1])).map_err(|e| e.to_string())?;

    let mut coeffmut = CoeffMutConfig::best_found();
    coeffmut.strategy = req.strategy.parse().map_err(|e: gomea::Error| e.to_string())?;
    let config = RunConfig {
        population_size: req.population,
        depth: 4,
        budget: req.budget,
        seed: req.seed,
        coeffmut,
        ..RunConfig::default()
    };
    let mut engine = Gomea::new(config, &data).map_err(|e| e.to_string())?;
    engine.run_to_completion();
    let report = engine.report(None);
    let elite = engine.elite().expect("report sets the elite");
    let raw = predict(&elite.tree, &data.as_batch(u64::MAX));
    let truth_match = judge_truth(&report.best_expression, &req.target, &data, &MatchSettings::default(), req.seed)
        .map_err(|e| e.to_string())?;

    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    order.sort_by(|&a, &b| data.column(0)[a].total_cmp(&data.column(0)[b]));
    Ok(FitResult {
        curve: report
            .per_generation_stats
            .iter()
            .map(|s| CurvePoint {
                evaluations: s.evaluations,
                elite_mse: s.elite_mse,
                tau: s.tau,
            })
            .collect(),
        x: order.iter().map(|&i| data.column(0)[i]).collect(),
        y: order.iter().map(|&i| data.y()[i]).collect(),
        prediction: order.iter().map(|&i| report.scale_a + report.scale_b * raw[i]).collect(),
        expression: report.best_expression,
        scale_a: report.scale_a,
        scale_b: report.scale_b,
        train_mse: report.best_train_mse_fullset,
        truth_match,
        generations: report.generations,
        evaluations: report.evaluations_used,
    })
}

#[derive(Debug, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u32>,
    pub mean: f64,
    pub variance: f64,
    pub expected_variance: f64,
}

#[derive(Debug, Serialize)]
pub struct MutationComparison {
    pub es: Histogram,
    pub temperature: Histogram,
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize, expected_variance: f64) -> Histogram {
    let mut counts = vec![0u32; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let b = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
        counts[b.min(bins - 1)] += 1;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    Histogram {
        lo,
        hi,
        counts,
        mean,
        variance,
        expected_variance,
    }
}

/// Samples both mutation laws from the same coefficient `c`.
pub fn compare_mutations(c: f64, tau: f64, sigma: f64, draws: usize, bins: usize, seed: u64) -> Result<MutationComparison, String> {
    if !(1..=1_000_000).contains(&draws) || !(1..=400).contains(&bins) {
        return Err("draws must lie in 1..=1e6 and bins in 1..=400".into());
    }
    if !(c.is_finite() && tau > 0.0 && sigma > 0.0) {
        return Err("c must be finite, tau and sigma positive".into());
    }
    let cfg = CoeffMutConfig::default();
    let mut rng = stream(seed, &[2]);
    let es: Vec<f64> = (0..draws).map(|_| es_mutate(c, sigma, &mut rng, cfg.gamma, cfg.epsilon).0).collect();
    let temp: Vec<f64> = (0..draws).map(|_| temp_mutate(c, tau, &mut rng)).collect();
    let lo = es.iter().chain(&temp).copied().fold(f64::INFINITY, f64::min);
    let hi = es.iter().chain(&temp).copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MutationComparison {
        es: histogram(&es, lo, hi, bins, sigma * sigma),
        temperature: histogram(&temp, lo, hi, bins, (c * tau).powi(2)),
    })
}

#[derive(Debug, Serialize)]
pub struct LinkageView {
    pub slots: usize,
    pub nmi: Vec<Vec<f64>>,
    pub subsets: Vec<Vec<usize>>,
    pub nested: String,
    pub sample: Vec<String>,
}

/// Linkage tree of a random half-full, half-grown population.
pub fn linkage(depth: usize, population: usize, seed: u64) -> Result<LinkageView, String> {
    if !(1..=5).contains(&depth) || !(2..=5000).contains(&population) {
        return Err("depth must lie in 1..=5 and population in 2..=5000".into());
    }
    let template = Template::for_functions(depth, &Function::ALL).map_err(|e| e.to_string())?;
    let params = InitParams {
        functions: &Function::ALL,
        n_features: 2,
        coeff_scale: 1.0,
        gamma: 0.1,
        epsilon: 1e-16,
    };
    let mut rng = stream(seed, &[3]);
    let trees: Vec<Tree> = (0..population)
        .map(|i| {
            let mode = if i < population / 2 { InitMode::Full } else { InitMode::Grow };
            Tree::random(template, mode, &params, &mut rng)
        })
        .collect();
    let sim = pairwise_nmi(&symbolize_population(&trees));
    let fos = build_linkage_tree(&sim);
    let l = template.len();
    Ok(LinkageView {
        slots: l,
        nmi: (0..l).map(|i| (0..l).map(|j| sim.get(i, j)).collect()).collect(),
        subsets: fos.subsets().to_vec(),
        nested: fos.to_nested_string(),
        sample: trees.iter().take(5).map(Tree::to_expression_string).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = fit)]
#[allow(clippy::too_many_arguments)]
pub fn fit_json(target: &str, lo: f64, hi: f64, n: u32, population: u32, budget: u32, strategy: &str, seed: u32) -> Result<String, JsError> {
    to_js(fit(&FitRequest {
        target: target.to_string(),
        lo,
        hi,
        n: n as usize,
        population: population as usize,
        budget: budget as u64,
        strategy: strategy.to_string(),
        seed: seed as u64,
    }))
}

#[wasm_bindgen(js_name = compareMutations)]
pub fn compare_mutations_json(c: f64, tau: f64, sigma: f64, draws: u32, bins: u32, seed: u32) -> Result<String, JsError> {
    to_js(compare_mutations(c, tau, sigma, draws as usize, bins as usize, seed as u64))
}

#[wasm_bindgen(js_name = linkage)]
pub fn linkage_json(depth: u32, population: u32, seed: u32) -> Result<String, JsError> {
    to_js(linkage(depth as usize, population as usize, seed as u64))
}
