//! Tree execution, linear scaling, and budgeted fitness evaluation.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::expr::{Function, Node, Tree};

/// Fitness of anything that produced a non-finite prediction or error.
/// Ordered after every finite value.
pub const WORST_MSE: f64 = f64::INFINITY;

/// Batch stamp used for evaluations on the complete training set.
pub const FULL_TRAIN_STAMP: u64 = u64::MAX;

const PROTECT: f64 = 1e-12;
const MIN_VARIANCE: f64 = 1e-30;

/// Mean squared error after linear scaling, with the scaling coefficients and
/// the batch it was measured on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub mse: f64,
    pub scale_a: f64,
    pub scale_b: f64,
    pub stamp: u64,
}

impl Fitness {
    pub fn worst(stamp: u64) -> Fitness {
        Fitness {
            mse: WORST_MSE,
            scale_a: 0.0,
            scale_b: 0.0,
            stamp,
        }
    }

    pub fn is_worst(&self) -> bool {
        self.mse == WORST_MSE
    }
}

/// `true` iff `f1` is at least as good as `f2` (lower mse). Both must come
/// from the same batch.
pub fn is_better_or_equal(f1: &Fitness, f2: &Fitness) -> bool {
    assert_eq!(f1.stamp, f2.stamp, "fitness values from different batches are not comparable");
    f1.mse <= f2.mse
}

/// Evaluation counter shared by everything that evaluates during a run.
#[derive(Debug)]
pub struct EvalBudget {
    used: AtomicU64,
    limit: u64,
}

impl EvalBudget {
    pub fn new(limit: u64) -> EvalBudget {
        EvalBudget {
            used: AtomicU64::new(0),
            limit,
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn exhausted(&self) -> bool {
        self.used() >= self.limit
    }

    /// Unconditional charge of one evaluation.
    pub fn tick(&self) {
        self.used.fetch_add(1, Ordering::SeqCst);
    }

    /// Charges one evaluation only if the limit has not been reached yet.
    pub fn try_tick(&self) -> bool {
        self.used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < self.limit).then_some(u + 1))
            .is_ok()
    }
}

pub fn protected_div(num: f64, den: f64) -> f64 {
    let den = if den.abs() < PROTECT { PROTECT.copysign(den) } else { den };
    num / den
}

pub fn protected_log(x: f64) -> f64 {
    (x.abs() + PROTECT).ln()
}

pub fn protected_sqrt(x: f64) -> f64 {
    x.abs().sqrt()
}

#[inline]
fn apply_unary(f: Function, x: f64) -> f64 {
    match f {
        Function::Log => protected_log(x),
        Function::Sqrt => protected_sqrt(x),
        Function::Sin => x.sin(),
        Function::Cos => x.cos(),
        _ => unreachable!("{f:?} is not unary"),
    }
}

#[inline]
fn apply_binary(f: Function, a: f64, b: f64) -> f64 {
    match f {
        Function::Add => a + b,
        Function::Sub => a - b,
        Function::Mul => a * b,
        Function::Div => protected_div(a, b),
        _ => unreachable!("{f:?} is not binary"),
    }
}

/// Outputs of the active expression for every row of the batch. Non-finite
/// values are passed through.
pub fn predict(tree: &Tree, batch: &Batch) -> Vec<f64> {
    let n = batch.len();
    let mut stack: Vec<Vec<f64>> = Vec::with_capacity(8);
    let mut spare: Vec<Vec<f64>> = Vec::new();
    for slot in tree.postfix() {
        match *tree.node(slot) {
            Node::Feature(j) => {
                let mut buf = spare.pop().unwrap_or_default();
                buf.clear();
                buf.extend_from_slice(&batch.columns[j]);
                stack.push(buf);
            }
            Node::Constant { value, .. } => {
                let mut buf = spare.pop().unwrap_or_default();
                buf.clear();
                buf.resize(n, value);
                stack.push(buf);
            }
            Node::Function(f) if f.arity() == 1 => {
                let top = stack.last_mut().expect("operand");
                for x in top.iter_mut() {
                    *x = apply_unary(f, *x);
                }
            }
            Node::Function(f) => {
                let rhs = stack.pop().expect("right operand");
                let lhs = stack.last_mut().expect("left operand");
                for (x, &r) in lhs.iter_mut().zip(&rhs) {
                    *x = apply_binary(f, *x, r);
                }
                spare.push(rhs);
            }
        }
    }
    let out = stack.pop().expect("non-empty program");
    debug_assert!(stack.is_empty());
    out
}

/// Least-squares intercept `a` and slope `b` of `y ~ a + b * f`.
pub fn linear_scale(f: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(f.len(), y.len());
    assert!(!f.is_empty());
    let n = f.len() as f64;
    let f_mean = f.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&fi, &yi) in f.iter().zip(y) {
        let df = fi - f_mean;
        cov += df * (yi - y_mean);
        var += df * df;
    }
    if var < MIN_VARIANCE {
        return (y_mean, 0.0);
    }
    let b = cov / var;
    (y_mean - b * f_mean, b)
}

/// Mean squared error of `a + b * f` against `y`.
pub fn scaled_mse(f: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let sum: f64 = f
        .iter()
        .zip(y)
        .map(|(&fi, &yi)| {
            let r = yi - (a + b * fi);
            r * r
        })
        .sum();
    sum / f.len() as f64
}

/// Linearly scaled mse of `tree` on `batch`, without budget accounting.
pub fn score(tree: &Tree, batch: &Batch) -> Fitness {
    let f = predict(tree, batch);
    if f.iter().any(|v| !v.is_finite()) {
        return Fitness::worst(batch.stamp);
    }
    let (a, b) = linear_scale(&f, &batch.y);
    let mse = scaled_mse(&f, &batch.y, a, b);
    if !mse.is_finite() {
        return Fitness::worst(batch.stamp);
    }
    Fitness {
        mse,
        scale_a: a,
        scale_b: b,
        stamp: batch.stamp,
    }
}

/// Scores `tree` on `batch` and charges exactly one evaluation.
pub fn evaluate_fitness(tree: &Tree, batch: &Batch, budget: &EvalBudget) -> Fitness {
    budget.tick();
    score(tree, batch)
}

/// Like [`evaluate_fitness`], but refuses to evaluate once the budget is spent.
pub fn try_evaluate_fitness(tree: &Tree, batch: &Batch, budget: &EvalBudget) -> Option<Fitness> {
    budget.try_tick().then(|| score(tree, batch))
}

/// Coefficient of determination of `prediction` against `y`.
pub fn r2_score(prediction: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = prediction.iter().zip(y).map(|(p, v)| (v - p).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}
