//! The double-merge world: geometry, vehicles, sensing, rewards.

pub mod expert;
pub mod geometry;
pub mod log;
pub mod reward;
pub mod sense;
pub mod world;

pub use geometry::{RoadGeometry, Side, TAU};
pub use reward::{episode_return, RewardConfig};
pub use sense::{sense, AgnosticState, SensedVehicle, SensingConfig};
pub use world::{init_scene, step, Outcome, SceneParams, VehicleState, WorldState};
