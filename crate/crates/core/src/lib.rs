//! Track-and-stop pure exploration (best arm, thresholding, top-M) for
//! logistic bandits.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below fix the precision.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Triangular solves and eliminations read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod confidence;
pub mod design;
pub mod envsim;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod instances;
pub mod linalg;
pub mod model;
pub mod problems;
pub mod sampler;
mod scalar;
pub mod verify;

pub use confidence::{BCheckMode, ThresholdConfig};
pub use design::{Allocation, DesignResult, FwConfig};
pub use envsim::{Instance, InstanceFile};
pub use error::{LogTsError, Result};
pub use estimation::{Pull, RunState, SolverConfig};
pub use experiment::{run_experiment, Algo, ExperimentConfig, InstanceSource, Summary, TrialRow};
pub use instances::{generate, Family, GeneratorConfig};
pub use model::{ArmSet, Parameter};
pub use problems::{Answer, ProblemSpec, TopmDirection};
pub use sampler::{run_log_ts, run_random_baseline, RunConfig, RunResult};
pub use scalar::Scalar;

pub type ArmSet64 = ArmSet<f64>;
pub type ArmSet32 = ArmSet<f32>;
pub type Parameter64 = Parameter<f64>;
pub type Parameter32 = Parameter<f32>;
pub type Allocation64 = Allocation<f64>;
pub type Allocation32 = Allocation<f32>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type ProblemSpec32 = ProblemSpec<f32>;
pub type Instance64 = Instance<f64>;
pub type Instance32 = Instance<f32>;
pub type RunConfig64 = RunConfig<f64>;
pub type RunConfig32 = RunConfig<f32>;
pub type RunResult64 = RunResult<f64>;
pub type RunResult32 = RunResult<f32>;
pub type GeneratorConfig64 = GeneratorConfig<f64>;
pub type GeneratorConfig32 = GeneratorConfig<f32>;
