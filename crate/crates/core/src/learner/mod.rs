//! Policy-gradient training over option-graph traversals.

pub mod baseline;
pub mod estimator;
pub mod imitation;
pub mod metrics;
pub mod rollout;
pub mod safety;
pub mod selfplay;
pub mod toy;
pub mod trace;

pub use baseline::{solve_optimal_baseline, BaselineMode, BaselineSample, BaselineSolve, OnlineBaseline};
pub use estimator::{estimate_gradient, update_online_baseline, BaselineState, GradientEstimate};
pub use imitation::{agreement, cross_entropy, imitation_init, DemoSample, ImitationConfig};
pub use metrics::{write_metrics_csv, OutcomeStats, RoundMetrics};
pub use rollout::{run_episode, Driver, EnvConfig, EpisodeResult};
pub use safety::{safety_bound, two_point_variance, SafetyDiagnostics};
pub use selfplay::{evaluate, self_play_train, EvalPolicy, TrainConfig};
pub use toy::ToyEnv;
pub use trace::{CreditMode, EpisodeTrace, TraceStep};
