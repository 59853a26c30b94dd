//! Safe multi-agent policy-gradient lab for the double-merge scenario.
//!
//! The crate is layered bottom-up:
//!
//! - [`net`]: tiny softmax policy networks with manual backpropagation.
//! - [`sim`]: seeded kinematic world, ego-centric sensing, rewards and a
//!   scripted expert driver.
//! - [`planner`]: the non-learned, hard-constrained trajectory planner that
//!   turns [`options::Desires`] into a short trajectory.
//! - [`options`]: the option graph, a DAG of small policies whose traversal
//!   yields Desires.
//! - [`learner`]: the policy-gradient estimator, baselines, enumeration
//!   oracles, imitation and A/B self-play.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod learner;
pub mod net;
pub mod options;
pub mod pipeline;
pub mod planner;
pub mod seeds;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
