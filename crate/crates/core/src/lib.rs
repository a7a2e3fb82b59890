//! Symbolic regression with GP-GOMEA and Gaussian coefficient mutation.
//!
//! Solutions are fixed-shape template trees ([`expr`]). Each generation the
//! population is modelled with a linkage tree ([`linkage`]) whose subsets
//! drive gene-pool optimal mixing ([`variation`]); coefficient mutation
//! ([`coeffmut`]) can be slotted into mixing at several points. [`engine`]
//! runs the generational loop under an evaluation budget and [`bench`]
//! holds the sweep harness and ground-truth recovery check.

pub mod bench;
pub mod coeffmut;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod expr;
pub mod linkage;
pub mod rng;
pub mod variation;

pub use coeffmut::{CoeffMutConfig, MutationType, Strategy, TemperatureState};
pub use dataset::{Batch, BatchSampler, DataMatrix};
pub use engine::{run, Gomea, RunConfig, RunReport};
pub use error::{Error, Result};
pub use evaluator::{EvalBudget, Fitness};
pub use expr::{Function, Node, Template, Tree};
pub use linkage::Fos;
