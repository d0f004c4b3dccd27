//! Gaussian-process emulators with hyper-parameters sampled by a parallel
//! annealed importance sampler, and mixture predictions over the samples.

pub mod aims;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod mixture;
pub mod prior;
pub mod testbed;
pub mod transform;

pub use aims::{fit, run, Mode, Objective, SamplerConfig, SamplerResult, StopReason};
pub use dataset::{load_dataset, Builtin, Dataset, DatasetRef};
pub use error::{Error, Result};
pub use gp::{GpFactorization, HyperParams, TrainingSet, NUGGET_LOWER, NUGGET_UPPER};
pub use mixture::{MixtureEmulator, Weighting};
pub use prior::{FlatPrior, LogNormalPrior, LogPrior, PriorSpec};
pub use testbed::Denominator;
pub use transform::{from_unconstrained, to_unconstrained, UnconstrainedVector};
