//! The non-learned trajectory layer: Desires in, a safe short trajectory out.
//!
//! Trajectories are `K` points spaced `TAU` apart in an ego-anchored frame:
//! `x` is the lateral position in lane units (road-relative, so lane
//! positions can be compared directly), `y` the longitudinal offset in meters
//! from where the ego vehicle stood when planning. Euclidean distances
//! convert `x` to meters with the lane width.

pub mod cases;
mod constraints;
mod cost;
mod lattice;
pub mod scene;

use serde::{Deserialize, Serialize};

pub use constraints::{feasible, Feasibility, HardConstraintConfig, RoadSegment, Roadway, Violation};
pub use cost::{
    cost_giveway, cost_lateral, cost_offset, cost_smoothness, cost_speed, cost_takeway, intersection_indices, total_cost, CostBreakdown,
    CostParams, CostWeights,
};
pub use lattice::{brute_force_plan, plan, LatticeConfig, PlanOutcome, PlannerConfig};

pub use crate::sim::geometry::TAU;
use crate::sim::sense::AgnosticState;

/// Number of points in a trajectory.
pub const K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    /// Lateral position (lane units).
    pub x: f64,
    /// Longitudinal offset (m).
    pub y: f64,
}

impl Point {
    pub fn dist_m(&self, other: &Point, lane_width: f64) -> f64 {
        self.dist_sq_m(other, lane_width).sqrt()
    }

    pub fn dist_sq_m(&self, other: &Point, lane_width: f64) -> f64 {
        let dx = (self.x - other.x) * lane_width;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    /// Ego position at planning time (point 0).
    pub origin: Point,
    /// Points `1..=K`, at times `TAU * i`.
    pub points: Vec<Point>,
}

impl TrajectoryPlan {
    pub fn is_finite(&self) -> bool {
        self.origin.x.is_finite() && self.origin.y.is_finite() && self.points.iter().all(|p| p.x.is_finite() && p.y.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrajectory {
    pub vehicle: usize,
    pub points: Vec<Point>,
}

/// Constant-velocity, constant-heading extrapolation of every sensed vehicle.
pub fn predict_others(state: &AgnosticState) -> Vec<PredictedTrajectory> {
    let w = state.lane_width;
    state
        .vehicles
        .iter()
        .map(|v| {
            let vy = v.long_speed();
            let vx = v.lateral_rate(w);
            let points = (1..=K)
                .map(|j| {
                    let t = TAU * j as f64;
                    Point {
                        x: v.lateral + vx * t,
                        y: v.rel_long + vy * t,
                    }
                })
                .collect();
            PredictedTrajectory { vehicle: v.id, points }
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::sim::geometry::Side;
    use crate::sim::sense::SensedVehicle;

    pub(crate) fn bare_state(vehicles: Vec<SensedVehicle>) -> AgnosticState {
        AgnosticState {
            ego_speed: 16.0,
            ego_heading: 0.0,
            ego_accel: 0.0,
            ego_lateral: 2.0,
            dist_to_merge: -20.0,
            merge_length: 100.0,
            lanes_per_side: 2,
            lane_width: 3.5,
            own_side: Side::Left,
            target_side: Some(Side::Left),
            vehicles,
        }
    }

    #[test]
    fn stationary_vehicle_prediction_is_constant() {
        let s = bare_state(vec![SensedVehicle {
            id: 4,
            lateral: 3.0,
            rel_long: 12.0,
            speed: 0.0,
            heading: 0.0,
        }]);
        let p = predict_others(&s);
        assert_eq!(p.len(), 1);
        assert!(p[0].points.iter().all(|q| *q == Point { x: 3.0, y: 12.0 }));
    }

    #[test]
    fn straight_line_prediction() {
        let s = bare_state(vec![SensedVehicle {
            id: 1,
            lateral: 0.0,
            rel_long: 20.0,
            speed: 10.0,
            heading: 0.0,
        }]);
        let p = predict_others(&s);
        for (j, q) in p[0].points.iter().enumerate() {
            let j = (j + 1) as f64;
            assert_eq!(q.x, 0.0);
            assert!((q.y - (20.0 + 10.0 * 0.1 * j)).abs() < 1e-12);
        }
    }
}
