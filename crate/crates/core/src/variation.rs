//! Gene-pool optimal mixing with coefficient mutation hooks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::coeffmut::{apply_coefficient_mutation, CoeffMutConfig, Strategy, TemperatureState};
use crate::dataset::Batch;
use crate::evaluator::{is_better_or_equal, try_evaluate_fitness, EvalBudget};
use crate::expr::Tree;
use crate::linkage::Fos;

/// Copies the donor's slots listed in `subset` into `offspring`, all at once.
pub fn inherit_nodes_by_subset(offspring: &mut Tree, donor: &Tree, subset: &[usize]) {
    for &slot in subset {
        offspring.set_node(slot, *donor.node(slot));
    }
}

/// `true` when every slot of `subset` either keeps its symbol or ends up an
/// intron in `after`, so the output cannot have changed.
pub fn no_meaningful_change(before: &Tree, after: &Tree, subset: &[usize]) -> bool {
    let mut mask: Option<Vec<bool>> = None;
    subset.iter().all(|&slot| {
        before.node(slot).same_symbol(after.node(slot)) || !mask.get_or_insert_with(|| after.active_mask())[slot]
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assessment {
    /// No meaningful change; kept without evaluation.
    Skipped,
    /// Evaluated, equal or better: kept.
    Accepted,
    /// Evaluated, worse: rolled back.
    Rejected,
    /// Evaluation needed but the budget is spent; rolled back.
    OutOfBudget,
}

/// Keeps `candidate` if the change is not meaningful or does not worsen the
/// fitness on `batch`; otherwise returns `incumbent` untouched.
pub fn assess_changes_and_return_best(
    mut candidate: Tree,
    incumbent: Tree,
    changed: &[usize],
    batch: &Batch,
    budget: &EvalBudget,
) -> (Tree, Assessment) {
    let incumbent_fitness = incumbent.fitness.expect("incumbent must carry a fitness");
    assert_eq!(incumbent_fitness.stamp, batch.stamp, "incumbent fitness is stale");
    if no_meaningful_change(&incumbent, &candidate, changed) {
        candidate.fitness = Some(incumbent_fitness);
        return (candidate, Assessment::Skipped);
    }
    let Some(fitness) = try_evaluate_fitness(&candidate, batch, budget) else {
        return (incumbent, Assessment::OutOfBudget);
    };
    candidate.fitness = Some(fitness);
    if is_better_or_equal(&fitness, &incumbent_fitness) {
        (candidate, Assessment::Accepted)
    } else {
        (incumbent, Assessment::Rejected)
    }
}

/// What one GOM call did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GomTrace {
    pub steps_attempted: usize,
    /// Evaluations caused by mixing steps (Within mutation included).
    pub mixing_evaluations: usize,
    /// Evaluations caused by whole-tree coefficient mutation.
    pub mutation_evaluations: usize,
    pub accepted_steps: usize,
    pub skipped_steps: usize,
    /// Offspring mse after each assessment, starting with the parent's.
    pub fitness_trajectory: Vec<f64>,
    pub budget_exhausted: bool,
}

impl GomTrace {
    pub fn evaluations_spent(&self) -> usize {
        self.mixing_evaluations + self.mutation_evaluations
    }

    fn record(&mut self, outcome: Assessment, tree: &Tree, from_mutation: bool) {
        match outcome {
            Assessment::Skipped => self.skipped_steps += 1,
            Assessment::Accepted => self.accepted_steps += 1,
            Assessment::Rejected => {}
            Assessment::OutOfBudget => {
                self.budget_exhausted = true;
                return;
            }
        }
        if matches!(outcome, Assessment::Accepted | Assessment::Rejected) {
            if from_mutation {
                self.mutation_evaluations += 1;
            } else {
                self.mixing_evaluations += 1;
            }
        }
        self.fitness_trajectory.push(tree.fitness.map_or(f64::NAN, |f| f.mse));
    }
}

/// Read-only state shared by every GOM call of a generation.
pub struct GomContext<'a> {
    pub population: &'a [Tree],
    pub fos: &'a Fos,
    pub batch: &'a Batch,
    pub budget: &'a EvalBudget,
    pub coeffmut: &'a CoeffMutConfig,
    pub temperature: &'a TemperatureState,
}

/// Mutates the whole offspring once and keeps the result if not worse.
fn mutate_and_assess<R: Rng + ?Sized>(offspring: Tree, ctx: &GomContext<'_>, rng: &mut R, trace: &mut GomTrace) -> Tree {
    let mut candidate = offspring.clone();
    let changed = apply_coefficient_mutation(&mut candidate, ctx.coeffmut, ctx.temperature, rng, None);
    let (kept, outcome) = assess_changes_and_return_best(candidate, offspring, &changed, ctx.batch, ctx.budget);
    trace.record(outcome, &kept, true);
    kept
}

/// Fresh uniformly random processing order of `len` FOS subsets.
pub fn shuffled_order<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
}

/// Produces one offspring from `parent` by mixing with random donors over the
/// FOS subsets in random order, with coefficient mutation inserted where the
/// configured strategy asks for it.
pub fn gom<R: Rng + ?Sized>(parent: &Tree, ctx: &GomContext<'_>, rng: &mut R) -> (Tree, GomTrace) {
    let parent_fitness = parent.fitness.expect("parent must be evaluated");
    assert_eq!(parent_fitness.stamp, ctx.batch.stamp, "parent fitness is stale");
    let strategy = ctx.coeffmut.strategy;
    let mut trace = GomTrace {
        fitness_trajectory: vec![parent_fitness.mse],
        ..GomTrace::default()
    };
    let mut offspring = parent.clone();

    for subset_index in shuffled_order(ctx.fos.len(), rng) {
        let subset = &ctx.fos.subsets()[subset_index];
        let donor = &ctx.population[rng.random_range(0..ctx.population.len())];
        let mut candidate = offspring.clone();
        inherit_nodes_by_subset(&mut candidate, donor, subset);
        if strategy == Strategy::Within {
            apply_coefficient_mutation(&mut candidate, ctx.coeffmut, ctx.temperature, rng, Some(subset));
        }
        trace.steps_attempted += 1;
        let (kept, outcome) = assess_changes_and_return_best(candidate, offspring, subset, ctx.batch, ctx.budget);
        offspring = kept;
        trace.record(outcome, &offspring, false);
        if trace.budget_exhausted {
            return (offspring, trace);
        }

        if strategy == Strategy::Between {
            offspring = mutate_and_assess(offspring, ctx, rng, &mut trace);
            if trace.budget_exhausted {
                return (offspring, trace);
            }
        }
    }

    let repeats = match strategy {
        Strategy::AfterOnce => 1,
        Strategy::AfterFosSize => ctx.fos.len(),
        _ => 0,
    };
    for _ in 0..repeats {
        offspring = mutate_and_assess(offspring, ctx, rng, &mut trace);
        if trace.budget_exhausted {
            break;
        }
    }
    (offspring, trace)
}
