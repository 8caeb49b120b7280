//! Heterogeneous Newton boosting.
//!
//! Each boosting round draws a base-learner subclass at random (a histogram
//! decision tree of some depth, or a ridge regressor over random Fourier
//! features), fits it to the Newton targets `-g/h` weighted by `h`, and adds it
//! to the ensemble scaled by the learning rate.
//!
//! Besides the trainer, the crate ships a successive-halving tuner and a small
//! coordinate-descent model of the boosting iteration that can be used to check
//! the linear convergence bound on explicit hypothesis matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod booster;
pub mod data;
pub mod error;
pub mod losses;
pub mod rff;
pub mod rng;
pub mod synth;
pub mod theory;
pub mod tree;
pub mod tuner;

pub use booster::{
    train, BoostParams, Ensemble, Learner, MixturePmf, OutputKind, Subclass, TrainOutput,
};
pub use data::{Dataset, LabelColumn, SplitSpec, SubsampleSpec};
pub use error::{Error, Result};
pub use losses::{GradHess, LossFunction, MetricKind};
