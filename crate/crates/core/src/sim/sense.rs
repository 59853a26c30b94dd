use serde::{Deserialize, Serialize};

use super::geometry::{RoadGeometry, Side};
use super::world::{Outcome, WorldState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingConfig {
    /// Other vehicles farther than this (m) are invisible.
    pub range: f64,
    /// The target side is revealed only this close (m) to the merge area.
    pub assignment_range: f64,
    /// Cap on the number of vehicles kept in a snapshot.
    pub max_vehicles: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            range: 100.0,
            assignment_range: 300.0,
            max_vehicles: 8,
        }
    }
}

/// Another vehicle as seen from the ego vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensedVehicle {
    pub id: usize,
    /// Lateral position in lane units (lanes are road-relative).
    pub lateral: f64,
    /// Longitudinal offset from the ego vehicle (m, positive ahead).
    pub rel_long: f64,
    pub speed: f64,
    pub heading: f64,
}

impl SensedVehicle {
    pub fn long_speed(&self) -> f64 {
        self.speed * self.heading.cos()
    }

    pub fn lateral_rate(&self, lane_width: f64) -> f64 {
        self.speed * self.heading.sin() / lane_width
    }
}

/// Ego-centric sensing snapshot. Contains no absolute longitudinal
/// coordinates; everything is relative to the ego vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgnosticState {
    pub ego_speed: f64,
    pub ego_heading: f64,
    pub ego_accel: f64,
    pub ego_lateral: f64,
    /// Distance to the start of the merge area (m); negative once inside.
    pub dist_to_merge: f64,
    pub merge_length: f64,
    pub lanes_per_side: usize,
    pub lane_width: f64,
    pub own_side: Side,
    pub target_side: Option<Side>,
    /// Sorted by longitudinal distance to the ego merge point, nearest first.
    pub vehicles: Vec<SensedVehicle>,
}

impl AgnosticState {
    pub fn ego_long_speed(&self) -> f64 {
        self.ego_speed * self.ego_heading.cos()
    }

    pub fn in_merge_area(&self) -> bool {
        self.dist_to_merge <= 0.0
    }

    pub fn dist_to_merge_end(&self) -> f64 {
        self.dist_to_merge + self.merge_length
    }

    /// Road geometry in the ego frame: the merge area starts at
    /// `dist_to_merge`.
    pub fn road(&self) -> RoadGeometry {
        RoadGeometry {
            lanes_per_side: self.lanes_per_side,
            lane_width: self.lane_width,
            approach_length: self.dist_to_merge.max(0.0) + 1.0,
            merge_length: self.merge_length,
            merge_start: self.dist_to_merge,
        }
    }

    /// Longitudinal point the ordering of sensed vehicles is keyed on.
    pub fn merge_point(&self) -> f64 {
        self.dist_to_merge.max(0.0)
    }
}

pub fn sense(world: &WorldState, agent: usize, cfg: &SensingConfig) -> Result<AgnosticState> {
    let ego = world.vehicles.get(agent).ok_or(Error::UnknownAgent(agent))?;
    if world.outcomes[agent] != Outcome::Running {
        return Err(Error::AgentNotRunning(agent));
    }
    let geo = &world.geometry;
    let w = geo.lane_width;
    let dist_to_merge = geo.merge_start - ego.y;
    let target_side = (dist_to_merge <= cfg.assignment_range).then_some(ego.target);
    let merge_point = dist_to_merge.max(0.0);
    let mut vehicles: Vec<SensedVehicle> = world
        .running()
        .filter(|&j| j != agent)
        .map(|j| &world.vehicles[j])
        .filter(|o| ((o.lateral - ego.lateral) * w).hypot(o.y - ego.y) <= cfg.range)
        .map(|o| SensedVehicle {
            id: o.id,
            lateral: o.lateral,
            rel_long: o.y - ego.y,
            speed: o.speed,
            heading: o.heading,
        })
        .collect();
    vehicles.sort_by(|a, b| {
        let ka = (a.rel_long - merge_point).abs();
        let kb = (b.rel_long - merge_point).abs();
        ka.total_cmp(&kb).then(a.id.cmp(&b.id))
    });
    vehicles.truncate(cfg.max_vehicles);
    Ok(AgnosticState {
        ego_speed: ego.speed,
        ego_heading: ego.heading,
        ego_accel: ego.accel,
        ego_lateral: ego.lateral,
        dist_to_merge,
        merge_length: geo.merge_length,
        lanes_per_side: geo.lanes_per_side,
        lane_width: w,
        own_side: ego.side,
        target_side,
        vehicles,
    })
}
