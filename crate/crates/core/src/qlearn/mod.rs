//! Q-learning over linear function classes for the stopping problem.
//!
//! Transitions from many episodes are strung into one stream; the scalar
//! gain gives plain Q-learning and the Zap gain inverts a running estimate
//! of the mean-flow Jacobian.

mod basis;
mod learner;
mod policy;
mod train;

pub use basis::{q_from_features, BinLayout, Basis, DEFAULT_B_Q};
pub use learner::{
    td_update, temporal_difference, zap_gain_update, zap_sample, GainKind, Learner, StepSizes, Transition,
};
pub use policy::{extract_policy, mean_flow, mean_flow_jacobian, ExtractedPolicy, JacobianEstimate, PolicyReport};
pub use train::{
    behavior_input, collect_transitions, draw_oblivious_threshold, epsilon_schedule, train, EpisodeTrace,
    ExplorationSchedule, QConfig, QTrace,
};

pub use crate::simulator::stage_cost;
