//! Bayesian quickest change detection toolkit.
//!
//! * [`models`]: observation densities, score functions, log-MGFs and the
//!   large-kappa threshold/cost approximations.
//! * [`detectors`]: CUSUM, Shiryaev-Roberts and posterior recursions.
//! * [`simulator`]: episodes, eager and classic costs, Monte-Carlo threshold
//!   sweeps.
//! * [`actor_critic`]: logistic threshold policies and score-function
//!   gradients.
//! * [`qlearn`]: Q-learning with linear bases, scalar and Zap gains.
//! * [`diagnostics`]: batch-means covariance and histograms.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix `f64`.

// negated comparisons are used deliberately so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actor_critic;
pub mod detectors;
pub mod diagnostics;
pub mod error;
pub mod models;
pub mod numeric;
pub mod qlearn;
pub mod real;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use real::Real;

pub type DensitySpec = models::DensitySpec<f64>;
pub type ChangeTimeLaw = models::ChangeTimeLaw<f64>;
pub type ScoreFunction = models::ScoreFunction<f64>;
pub type TailRate = models::TailRate<f64>;
pub type DetectorKind = detectors::DetectorKind<f64>;
pub type Detector = detectors::Detector<f64>;
pub type ObservationModel = simulator::ObservationModel<f64>;
pub type ExperimentConfig = simulator::ExperimentConfig<f64>;
pub type SweepTable = simulator::SweepTable<f64>;
pub type LogisticPolicy = actor_critic::LogisticPolicy<f64>;
pub type Basis = qlearn::Basis<f64>;
pub type Matrix = numeric::Matrix<f64>;
