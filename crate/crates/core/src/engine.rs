//! Generational loop: batch, re-stamp, linkage tree, GOM for every member,
//! generational replacement, elitist and temperature bookkeeping.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffmut::{CoeffMutConfig, TemperatureState};
use crate::dataset::{Batch, BatchSampler, DataMatrix};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_fitness, predict, r2_score, scaled_mse, EvalBudget, Fitness, FULL_TRAIN_STAMP};
use crate::expr::{Function, InitMode, InitParams, Template, Tree};
use crate::linkage::{linkage_tree_fos, Fos};
use crate::rng::{derive_seed, stream};
use crate::variation::{gom, GomContext, GomTrace};

const STREAM_INIT: u64 = 1;
const STREAM_GOM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub population_size: usize,
    pub depth: usize,
    pub budget: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub functions: Vec<Function>,
    pub coeffmut: CoeffMutConfig,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            population_size: 1000,
            depth: 4,
            budget: 1_000_000,
            batch_size: 256,
            seed: 0,
            functions: Function::ALL.to_vec(),
            coeffmut: CoeffMutConfig::default(),
            threads: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::config("--pop must be at least 2"));
        }
        if self.depth < 1 {
            return Err(Error::config("--depth must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("--batch must be at least 1"));
        }
        if self.threads < 1 {
            return Err(Error::config("--threads must be at least 1"));
        }
        if self.functions.is_empty() {
            return Err(Error::config("function set is empty"));
        }
        Template::for_functions(self.depth, &self.functions)?;
        self.coeffmut.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: u64,
    /// Best batch mse in the population after variation.
    pub best_mse: f64,
    /// Mean batch mse over members with a finite fitness.
    pub mean_mse: f64,
    /// Best-so-far mse on the full training set.
    pub elite_mse: f64,
    pub tau: f64,
    pub evaluations: u64,
}

/// Per-member audit data of the most recent generation.
#[derive(Clone, Debug, Default)]
pub struct GenerationAudit {
    pub parent_mse: Vec<f64>,
    pub offspring_mse: Vec<f64>,
    pub traces: Vec<GomTrace>,
    pub fos_len: usize,
    pub evaluations_before: u64,
    pub evaluations_after: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub best_expression: String,
    /// Final model is `scale_a + scale_b * best_expression`.
    pub scale_a: f64,
    pub scale_b: f64,
    pub best_train_mse_fullset: f64,
    pub test_mse: Option<f64>,
    pub test_r2: Option<f64>,
    pub evaluations_used: u64,
    pub generations: u64,
    pub per_generation_stats: Vec<GenerationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_match: Option<bool>,
    pub config: RunConfig,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut json = self.to_json()?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn write_generation_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        for row in &self.per_generation_stats {
            w.serialize(row).map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Half full, half grow; an odd extra member is grown.
pub fn initialize_population<R: rand::Rng + ?Sized>(
    config: &RunConfig,
    template: Template,
    data: &DataMatrix,
    rng: &mut R,
) -> Vec<Tree> {
    let params = InitParams {
        functions: &config.functions,
        n_features: data.n_features(),
        coeff_scale: data.coefficient_scale(),
        gamma: config.coeffmut.gamma,
        epsilon: config.coeffmut.epsilon,
    };
    let n_full = config.population_size / 2;
    (0..config.population_size)
        .map(|i| {
            let mode = if i < n_full { InitMode::Full } else { InitMode::Grow };
            Tree::random(template, mode, &params, rng)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Elite {
    pub tree: Tree,
    /// Fitness on the full training set.
    pub fitness: Fitness,
}

/// One GP-GOMEA run in progress.
pub struct Gomea<'a> {
    config: RunConfig,
    train: &'a DataMatrix,
    full: Batch,
    sampler: BatchSampler,
    budget: EvalBudget,
    population: Vec<Tree>,
    temperature: TemperatureState,
    elite: Option<Elite>,
    generation: u64,
    stats: Vec<GenerationStats>,
    last_fos: Option<Fos>,
    audit: Option<GenerationAudit>,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Gomea<'a> {
    pub fn new(config: RunConfig, train: &'a DataMatrix) -> Result<Gomea<'a>> {
        config.validate()?;
        let template = Template::for_functions(config.depth, &config.functions)?;
        let mut rng = stream(config.seed, &[STREAM_INIT]);
        let population = initialize_population(&config, template, train, &mut rng);
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::config(format!("cannot start thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Gomea {
            sampler: BatchSampler::new(config.batch_size, derive_seed(config.seed, &[3])),
            temperature: TemperatureState::new(&config.coeffmut),
            full: train.as_batch(FULL_TRAIN_STAMP),
            budget: EvalBudget::new(config.budget),
            config,
            train,
            population,
            elite: None,
            generation: 0,
            stats: Vec::new(),
            last_fos: None,
            audit: None,
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn population(&self) -> &[Tree] {
        &self.population
    }

    pub fn budget(&self) -> &EvalBudget {
        &self.budget
    }

    pub fn elite(&self) -> Option<&Elite> {
        self.elite.as_ref()
    }

    pub fn temperature(&self) -> TemperatureState {
        self.temperature
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn stats(&self) -> &[GenerationStats] {
        &self.stats
    }

    pub fn last_fos(&self) -> Option<&Fos> {
        self.last_fos.as_ref()
    }

    pub fn last_audit(&self) -> Option<&GenerationAudit> {
        self.audit.as_ref()
    }

    fn map_members<T: Send>(&self, f: impl Fn(usize, &Tree) -> T + Sync + Send) -> Vec<T> {
        match &self.pool {
            Some(pool) => pool.install(|| self.population.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()),
            None => self.population.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        }
    }

    /// Runs one generation; `None` once the budget is spent.
    pub fn run_generation(&mut self) -> Option<&GenerationStats> {
        if self.budget.exhausted() {
            return None;
        }
        let generation = self.generation;
        let evaluations_before = self.budget.used();

        let rows = self.sampler.resample(self.train.n_rows(), generation);
        let batch = self.train.gather(&rows, generation);

        // Fitness from the previous batch is not comparable; re-evaluate.
        let restamped = self.map_members(|_, t| evaluate_fitness(t, &batch, &self.budget));
        for (tree, fit) in self.population.iter_mut().zip(restamped) {
            tree.fitness = Some(fit);
        }
        let parent_mse: Vec<f64> = restamped_mse(&self.population);

        let fos = linkage_tree_fos(&self.population);
        let ctx = GomContext {
            population: &self.population,
            fos: &fos,
            batch: &batch,
            budget: &self.budget,
            coeffmut: &self.config.coeffmut,
            temperature: &self.temperature,
        };
        let seed = self.config.seed;
        let results = self.map_members(|i, parent| {
            let mut rng = stream(seed, &[STREAM_GOM, generation, i as u64]);
            gom(parent, &ctx, &mut rng)
        });
        let (offspring, traces): (Vec<Tree>, Vec<GomTrace>) = results.into_iter().unzip();
        self.population = offspring;
        let offspring_mse = restamped_mse(&self.population);

        let best_index = offspring_mse
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("population is not empty");
        let candidate = &self.population[best_index];
        let full_fitness = evaluate_fitness(candidate, &self.full, &self.budget);
        let improved = match &self.elite {
            Some(e) => full_fitness.mse < e.fitness.mse,
            None => true,
        };
        if improved {
            self.elite = Some(Elite {
                tree: candidate.clone(),
                fitness: full_fitness,
            });
        }
        self.temperature.update(improved, &self.config.coeffmut);

        let finite: Vec<f64> = offspring_mse.iter().copied().filter(|m| m.is_finite()).collect();
        let mean_mse = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        self.stats.push(GenerationStats {
            generation,
            best_mse: offspring_mse[best_index],
            mean_mse,
            elite_mse: self.elite.as_ref().map_or(f64::INFINITY, |e| e.fitness.mse),
            tau: self.temperature.tau,
            evaluations: self.budget.used(),
        });
        self.audit = Some(GenerationAudit {
            parent_mse,
            offspring_mse,
            traces,
            fos_len: fos.len(),
            evaluations_before,
            evaluations_after: self.budget.used(),
        });
        self.last_fos = Some(fos);
        self.generation += 1;
        self.stats.last()
    }

    /// Picks the elite from the initial population when no generation ran.
    fn ensure_elite(&mut self) {
        if self.elite.is_some() {
            return;
        }
        let fits = self.map_members(|_, t| evaluate_fitness(t, &self.full, &self.budget));
        let (i, fit) = fits
            .into_iter()
            .enumerate()
            .min_by(|a, b| a.1.mse.total_cmp(&b.1.mse))
            .expect("population is not empty");
        self.elite = Some(Elite {
            tree: self.population[i].clone(),
            fitness: fit,
        });
    }

    /// Runs generations until the budget is spent.
    pub fn run_to_completion(&mut self) {
        while self.run_generation().is_some() {}
    }

    pub fn report(&mut self, test: Option<&DataMatrix>) -> RunReport {
        self.ensure_elite();
        let elite = self.elite.as_ref().expect("elite exists");
        let (test_mse, test_r2) = match test {
            Some(test) => {
                let batch = test.as_batch(FULL_TRAIN_STAMP);
                let raw = predict(&elite.tree, &batch);
                let (a, b) = (elite.fitness.scale_a, elite.fitness.scale_b);
                let scaled: Vec<f64> = raw.iter().map(|f| a + b * f).collect();
                (Some(scaled_mse(&raw, test.y(), a, b)), Some(r2_score(&scaled, test.y())))
            }
            None => (None, None),
        };
        RunReport {
            best_expression: elite.tree.to_expression_string_with(self.train.feature_names()),
            scale_a: elite.fitness.scale_a,
            scale_b: elite.fitness.scale_b,
            best_train_mse_fullset: elite.fitness.mse,
            test_mse,
            test_r2,
            evaluations_used: self.budget.used(),
            generations: self.generation,
            per_generation_stats: self.stats.clone(),
            truth_match: None,
            config: self.config.clone(),
        }
    }
}

fn restamped_mse(population: &[Tree]) -> Vec<f64> {
    population
        .iter()
        .map(|t| t.fitness.map_or(f64::INFINITY, |f| f.mse))
        .collect()
}

/// Full run: evolve until the budget is spent and report the elite.
pub fn run(config: RunConfig, train: &DataMatrix, test: Option<&DataMatrix>) -> Result<RunReport> {
    let mut engine = Gomea::new(config, train)?;
    engine.run_to_completion();
    Ok(engine.report(test))
}
