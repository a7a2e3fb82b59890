//! Gaussian coefficient mutation: a self-adaptive (ES-like) rule with a
//! per-constant step size, and a temperature rule whose spread scales with
//! the coefficient magnitude. Also holds the temperature decay controller.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Node, Tree};

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-16;

/// When coefficient mutation happens relative to GOM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Never,
    /// Once after GOM finishes.
    #[serde(rename = "after1")]
    AfterOnce,
    /// FOS-size times after GOM finishes.
    #[serde(rename = "afterfos")]
    AfterFosSize,
    /// After every GOM step.
    Between,
    /// On the donated constants inside each GOM step, before evaluation.
    Within,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Never,
        Strategy::AfterOnce,
        Strategy::AfterFosSize,
        Strategy::Between,
        Strategy::Within,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Never => "never",
            Strategy::AfterOnce => "after1",
            Strategy::AfterFosSize => "afterfos",
            Strategy::Between => "between",
            Strategy::Within => "within",
        }
    }

    /// Upper bound on mutation-driven evaluations per offspring, beyond the
    /// one-per-step cost of mixing itself.
    pub fn extra_evaluations(self, fos_len: usize) -> usize {
        match self {
            Strategy::Never | Strategy::Within => 0,
            Strategy::AfterOnce => 1,
            Strategy::AfterFosSize | Strategy::Between => fos_len,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "never" | "none" => Strategy::Never,
            "after1" | "afteronce" | "once" => Strategy::AfterOnce,
            "afterfos" | "afterfossize" | "fos" => Strategy::AfterFosSize,
            "between" | "inbetween" => Strategy::Between,
            "within" => Strategy::Within,
            other => return Err(Error::config(format!("unknown strategy `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutationType {
    #[serde(rename = "es")]
    EsLike,
    #[serde(rename = "temp")]
    Temperature,
}

impl MutationType {
    pub fn as_str(self) -> &'static str {
        match self {
            MutationType::EsLike => "es",
            MutationType::Temperature => "temp",
        }
    }
}

impl fmt::Display for MutationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MutationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<MutationType> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "es" | "es-like" | "eslike" => MutationType::EsLike,
            "temp" | "temperature" => MutationType::Temperature,
            other => return Err(Error::config(format!("unknown mutation type `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffMutConfig {
    pub strategy: Strategy,
    /// Per-constant probability of being mutated when mutation is applied.
    pub probability: f64,
    pub mut_type: MutationType,
    /// Initial temperature.
    pub tau: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub decay: Option<f64>,
    pub patience: Option<u32>,
}

impl Default for CoeffMutConfig {
    fn default() -> Self {
        CoeffMutConfig {
            strategy: Strategy::Never,
            probability: 0.5,
            mut_type: MutationType::Temperature,
            tau: 0.1,
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
            decay: None,
            patience: None,
        }
    }
}

impl CoeffMutConfig {
    /// Between, p = 1, temperature 0.1 decayed by 0.1 after 5 stalled generations.
    pub fn best_found() -> Self {
        CoeffMutConfig {
            strategy: Strategy::Between,
            probability: 1.0,
            mut_type: MutationType::Temperature,
            tau: 0.1,
            decay: Some(0.1),
            patience: Some(5),
            ..CoeffMutConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::config(format!("--prob must lie in [0, 1], got {}", self.probability)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("--tau must be positive, got {}", self.tau)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("--gamma must be positive, got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("--epsilon must be positive, got {}", self.epsilon)));
        }
        if let Some(d) = self.decay {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::config(format!("--decay must lie in (0, 1), got {d}")));
            }
        }
        if self.patience == Some(0) {
            return Err(Error::config("--patience must be at least 1"));
        }
        Ok(())
    }
}

/// Global temperature plus the stall counter driving its decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureState {
    pub tau: f64,
    pub stall: u32,
}

impl TemperatureState {
    pub fn new(config: &CoeffMutConfig) -> Self {
        TemperatureState {
            tau: config.tau,
            stall: 0,
        }
    }

    /// Once per generation: reset on elitist improvement, otherwise count the
    /// stall and multiply the temperature by `decay` when `patience` is hit.
    pub fn update(&mut self, elitist_improved: bool, config: &CoeffMutConfig) {
        let (Some(decay), Some(patience)) = (config.decay, config.patience) else {
            return;
        };
        if elitist_improved {
            self.stall = 0;
            return;
        }
        self.stall += 1;
        if self.stall >= patience {
            self.tau *= decay;
            self.stall = 0;
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Initial step size `max(exp(N(0, gamma^2)), epsilon)`.
pub fn init_sigma<R: Rng + ?Sized>(rng: &mut R, gamma: f64, epsilon: f64) -> f64 {
    sigma_from_draw(normal(rng), gamma, epsilon)
}

/// `max(exp(gamma * z), epsilon)` for a standard normal draw `z`.
pub fn sigma_from_draw(z: f64, gamma: f64, epsilon: f64) -> f64 {
    (gamma * z).exp().max(epsilon)
}

/// Self-adaptive update: `c' ~ N(c, sigma^2)` and
/// `sigma' = max(sigma * exp(N(0, gamma^2)), epsilon)`.
pub fn es_mutate<R: Rng + ?Sized>(c: f64, sigma: f64, rng: &mut R, gamma: f64, epsilon: f64) -> (f64, f64) {
    let c_new = c + sigma * normal(rng);
    let sigma_new = (sigma * (gamma * normal(rng)).exp()).max(epsilon);
    (c_new, sigma_new)
}

/// Temperature update `c' ~ N(c, (c * tau)^2)`; zero is a fixed point.
pub fn temp_mutate<R: Rng + ?Sized>(c: f64, tau: f64, rng: &mut R) -> f64 {
    c + (c * tau).abs() * normal(rng)
}

/// Flips a `probability`-biased coin per eligible constant and mutates the
/// winners in place. Eligible constants are those in `restrict_to` when
/// given, otherwise every constant slot including introns. Returns the slots
/// that were mutated.
pub fn apply_coefficient_mutation<R: Rng + ?Sized>(
    tree: &mut Tree,
    config: &CoeffMutConfig,
    temp: &TemperatureState,
    rng: &mut R,
    restrict_to: Option<&[usize]>,
) -> Vec<usize> {
    let candidates: Vec<usize> = match restrict_to {
        Some(subset) => subset
            .iter()
            .copied()
            .filter(|&s| tree.node(s).is_constant())
            .collect(),
        None => tree.constant_slots(),
    };
    let mut mutated = Vec::new();
    for slot in candidates {
        if !rng.random_bool(config.probability) {
            continue;
        }
        if let Node::Constant { value, sigma } = tree.node_mut(slot) {
            match config.mut_type {
                MutationType::EsLike => {
                    let (c, s) = es_mutate(*value, *sigma, rng, config.gamma, config.epsilon);
                    *value = c;
                    *sigma = s;
                }
                MutationType::Temperature => {
                    *value = temp_mutate(*value, temp.tau, rng);
                }
            }
            mutated.push(slot);
        }
    }
    mutated
}
