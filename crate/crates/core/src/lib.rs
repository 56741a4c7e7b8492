//! Kernel schedule autotuning: broad exploration of sketch spaces with an
//! evolutionary explorer, then coordinate-descent exploitation of the best
//! candidate found.
//!
//! The modules build on each other bottom-up:
//!
//! - [`space`]: discrete annotation spaces, coordinates, neighborhoods.
//! - [`ir`]: workloads, loop nests, sketch rules and annotation.
//! - [`exec`]: native, schedule-parameterized kernels and a reference interpreter.
//! - [`measure`]: samples, backends, synthetic landscapes, rank-sum statistics.
//! - [`surrogate`]: boosted decision stumps used as a cost model.
//! - [`search`]: Droplet coordinate descent, baselines, explorer, combined pipeline.
//! - [`scheduler`]: trial-budget allocation across the layers of a model.
//! - [`log`]: the JSON Lines trial log.

pub mod error;
pub mod exec;
pub mod hash;
pub mod ir;
pub mod log;
pub mod measure;
pub mod scheduler;
pub mod search;
pub mod space;
pub mod surrogate;

pub use error::{Error, Result};
pub use ir::{Body, Sketch, Target, Workload};
pub use measure::{Backend, Landscape, LandscapeFamily, MeasureConfig, Sample, Status};
pub use scheduler::{Budgets, ModelReport, TuneTask};
pub use search::{SearchBudget, SearchReport, Strategy};
pub use space::{Coordinate, ParamDef, ParamKind, SearchSpace};
