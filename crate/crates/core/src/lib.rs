//! Time-unconditional diffusion on toy manifolds.
//!
//! Clean data sit on a low-dimensional coordinate subspace `M₀` of a
//! high-dimensional ambient space. This crate provides the forward-process
//! schedules, the shell geometry of the noisy manifolds and its
//! disjointness checks, the orthogonal time-space forward process and DDIM
//! sampler, a small MLP noise predictor that never sees the timestep, and
//! toy-scale evaluation metrics.

pub mod checkpoint;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod rng;
pub mod schedule;

pub use checkpoint::Checkpoint;
pub use dataset::SampleBatch;
pub use diffusion::{ClassChoice, NoisePredictor, OrthoTimeConfig, SampleOptions};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use geometry::{AmbientConfig, ShellBand};
pub use model::{DenoiserModel, TrainConfig};
pub use schedule::{ScheduleKind, ScheduleSpec};
