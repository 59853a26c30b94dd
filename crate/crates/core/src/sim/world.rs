use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{RoadGeometry, Side, TAU};
use super::reward::RewardConfig;
use crate::error::{Error, Result};
use crate::planner::TrajectoryPlan;
use crate::seeds;

/// Vehicles closer than this (m, center to center) have collided.
pub const DEFAULT_COLLISION_DISTANCE: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: usize,
    /// Longitudinal position (m).
    pub y: f64,
    /// Lateral position (lane units).
    pub lateral: f64,
    /// Ground speed (m/s).
    pub speed: f64,
    /// Angle of the velocity from the road direction (rad, positive right).
    pub heading: f64,
    /// Longitudinal acceleration over the last step (m/s^2).
    pub accel: f64,
    pub side: Side,
    pub target: Side,
}

impl VehicleState {
    pub fn long_speed(&self) -> f64 {
        self.speed * self.heading.cos()
    }

    /// Lateral rate in lanes/s.
    pub fn lateral_rate(&self, lane_width: f64) -> f64 {
        self.speed * self.heading.sin() / lane_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Running,
    MergedOk,
    WrongSide,
    Accident,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Running
    }
}

/// Knobs of the randomized initial placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneParams {
    pub agents_per_side: usize,
    /// Longitudinal gap range between consecutive vehicles on one road (m).
    pub min_gap: f64,
    pub max_gap: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Probability that a vehicle's target side is the other road.
    pub switch_probability: f64,
    /// Steps after which running agents are scored as wrong-side.
    pub horizon: usize,
    pub collision_distance: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            agents_per_side: 4,
            min_gap: 14.0,
            max_gap: 30.0,
            min_speed: 14.0,
            max_speed: 18.0,
            switch_probability: 0.5,
            horizon: 400,
            collision_distance: DEFAULT_COLLISION_DISTANCE,
        }
    }
}

impl SceneParams {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.agents_per_side == 0 {
            return Err(("agents_per_side", "must be >= 1".into()));
        }
        if !(self.min_gap > 0.0 && self.max_gap >= self.min_gap) {
            return Err(("min_gap", "need 0 < min_gap <= max_gap".into()));
        }
        if !(self.min_speed >= 0.0 && self.max_speed >= self.min_speed) {
            return Err(("min_speed", "need 0 <= min_speed <= max_speed".into()));
        }
        if !(0.0..=1.0).contains(&self.switch_probability) {
            return Err(("switch_probability", "must be in [0, 1]".into()));
        }
        if self.horizon == 0 {
            return Err(("horizon", "must be >= 1".into()));
        }
        if !(self.collision_distance > 0.0) {
            return Err(("collision_distance", "must be > 0".into()));
        }
        if self.min_gap <= self.collision_distance {
            return Err(("min_gap", "must exceed collision_distance".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub geometry: RoadGeometry,
    pub vehicles: Vec<VehicleState>,
    pub outcomes: Vec<Outcome>,
    pub step: usize,
    pub horizon: usize,
    pub collision_distance: f64,
}

/// Initial positions and speeds sit on a 1/64 grid so that rigid
/// translations of a fresh scene are exact in floating point.
fn quantize(v: f64) -> f64 {
    (v * 64.0).round() / 64.0
}

/// Minimum lead (m) between the front-most starting vehicle and the merge area.
const MIN_START_LEAD: f64 = 100.0;

pub fn init_scene(seed: u64, params: &SceneParams, geometry: &RoadGeometry) -> Result<WorldState> {
    geometry.validate()?;
    params.check().map_err(|(k, m)| Error::Scene(format!("{k} {m}")))?;
    let span = (params.agents_per_side - 1) as f64 * params.max_gap;
    if span > geometry.approach_length - MIN_START_LEAD {
        return Err(Error::Scene(format!(
            "approach of {} m cannot hold {} agents per side at up to {} m gaps",
            geometry.approach_length, params.agents_per_side, params.max_gap
        )));
    }
    let mut rng = seeds::stream(seed, "scene", 0);
    let mut vehicles = Vec::with_capacity(2 * params.agents_per_side);
    for side in [Side::Left, Side::Right] {
        let (lo, _) = geometry.side_lanes(side);
        let mut y = geometry.merge_start - geometry.approach_length;
        for k in 0..params.agents_per_side {
            if k > 0 {
                y += quantize(rng.gen_range(params.min_gap..=params.max_gap));
            }
            let lane = lo + rng.gen_range(0..geometry.lanes_per_side) as f64;
            let speed = quantize(rng.gen_range(params.min_speed..=params.max_speed));
            let target = if rng.gen_bool(params.switch_probability) {
                side.other()
            } else {
                side
            };
            vehicles.push(VehicleState {
                id: vehicles.len(),
                y,
                lateral: lane,
                speed,
                heading: 0.0,
                accel: 0.0,
                side,
                target,
            });
        }
    }
    let n = vehicles.len();
    Ok(WorldState {
        geometry: geometry.clone(),
        vehicles,
        outcomes: vec![Outcome::Running; n],
        step: 0,
        horizon: params.horizon,
        collision_distance: params.collision_distance,
    })
}

pub fn distance_m(a: &VehicleState, b: &VehicleState, lane_width: f64) -> f64 {
    ((a.lateral - b.lateral) * lane_width).hypot(a.y - b.y)
}

impl WorldState {
    pub fn time(&self) -> f64 {
        self.step as f64 * TAU
    }

    pub fn running(&self) -> impl Iterator<Item = usize> + '_ {
        self.outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Outcome::Running)
            .map(|(i, _)| i)
    }

    pub fn is_done(&self) -> bool {
        self.outcomes.iter().all(|o| o.is_terminal())
    }

    /// Shifts every vehicle and the road itself longitudinally.
    pub fn translated(&self, dy: f64) -> WorldState {
        let mut w = self.clone();
        w.geometry.merge_start += dy;
        for v in w.vehicles.iter_mut() {
            v.y += dy;
        }
        w
    }
}

/// Advances the world by one step of `TAU`: each running agent moves to the
/// first point of its plan. Returns the new world and one immediate reward
/// per vehicle (0 for agents that were already terminal).
pub fn step(world: &WorldState, plans: &[Option<TrajectoryPlan>], rewards_cfg: &RewardConfig) -> Result<(WorldState, Vec<f64>)> {
    if plans.len() != world.vehicles.len() {
        return Err(Error::Contract(format!(
            "{} plans for {} vehicles",
            plans.len(),
            world.vehicles.len()
        )));
    }
    let geo = &world.geometry;
    let w = geo.lane_width;
    let mut next = world.clone();
    let mut rewards = vec![0.0; world.vehicles.len()];
    let running: Vec<usize> = world.running().collect();

    for &i in &running {
        let plan = plans[i]
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("running agent {i} has no plan")))?;
        if !plan.is_finite() {
            return Err(Error::NonFinite(format!("plan of agent {i}")));
        }
        let first = plan
            .points
            .first()
            .ok_or_else(|| Error::Contract(format!("empty plan for agent {i}")))?;
        let old = &world.vehicles[i];
        let v = &mut next.vehicles[i];
        let long = first.y / TAU;
        let lat_rate = (first.x - old.lateral) / TAU;
        v.y = old.y + first.y;
        v.lateral = first.x;
        v.speed = long.hypot(lat_rate * w);
        v.heading = if v.speed > 0.0 { (lat_rate * w).atan2(long) } else { 0.0 };
        v.accel = (long - old.long_speed()) / TAU;
        rewards[i] = rewards_cfg.comfort_penalty(v.accel - old.accel, lat_rate - old.lateral_rate(w));
    }

    // collisions among agents that were running this step
    let mut crashed = vec![false; world.vehicles.len()];
    for (a_pos, &a) in running.iter().enumerate() {
        for &b in &running[a_pos + 1..] {
            if distance_m(&next.vehicles[a], &next.vehicles[b], w) < world.collision_distance {
                crashed[a] = true;
                crashed[b] = true;
            }
        }
    }
    next.step = world.step + 1;
    for &i in &running {
        if crashed[i] {
            next.outcomes[i] = Outcome::Accident;
            rewards[i] = -rewards_cfg.accident_penalty;
            continue;
        }
        let v = &next.vehicles[i];
        if v.y >= geo.merge_end() {
            if geo.side_of(v.lateral) == Some(v.target) {
                next.outcomes[i] = Outcome::MergedOk;
                rewards[i] += rewards_cfg.merged_reward;
            } else {
                next.outcomes[i] = Outcome::WrongSide;
                rewards[i] -= rewards_cfg.wrong_side_penalty;
            }
        } else if next.step >= world.horizon {
            next.outcomes[i] = Outcome::WrongSide;
            rewards[i] -= rewards_cfg.wrong_side_penalty;
        }
    }
    Ok((next, rewards))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{Point, TrajectoryPlan};

    fn hold_plan(v: &VehicleState) -> TrajectoryPlan {
        TrajectoryPlan {
            origin: Point { x: v.lateral, y: 0.0 },
            points: vec![Point { x: v.lateral, y: 0.0 }; 10],
        }
    }

    #[test]
    fn same_seed_same_world() {
        let g = RoadGeometry::default();
        let p = SceneParams::default();
        assert_eq!(init_scene(11, &p, &g).unwrap(), init_scene(11, &p, &g).unwrap());
        assert_ne!(init_scene(11, &p, &g).unwrap(), init_scene(12, &p, &g).unwrap());
    }

    #[test]
    fn one_agent_per_side() {
        let p = SceneParams {
            agents_per_side: 1,
            ..Default::default()
        };
        let w = init_scene(3, &p, &RoadGeometry::default()).unwrap();
        assert_eq!(w.vehicles.len(), 2);
        assert_eq!(w.vehicles[0].side, Side::Left);
        assert_eq!(w.vehicles[1].side, Side::Right);
    }

    #[test]
    fn too_short_approach_is_rejected() {
        let g = RoadGeometry {
            approach_length: 120.0,
            ..Default::default()
        };
        assert!(matches!(init_scene(1, &SceneParams::default(), &g), Err(Error::Scene(_))));
    }

    #[test]
    fn holding_still_advances_time_only() {
        let mut w = init_scene(5, &SceneParams::default(), &RoadGeometry::default()).unwrap();
        for v in w.vehicles.iter_mut() {
            v.speed = 0.0;
        }
        let plans: Vec<_> = w.vehicles.iter().map(|v| Some(hold_plan(v))).collect();
        let (next, rewards) = step(&w, &plans, &RewardConfig::default()).unwrap();
        assert!((next.time() - 0.1).abs() < 1e-15);
        for (a, b) in w.vehicles.iter().zip(&next.vehicles) {
            assert_eq!((a.y, a.lateral), (b.y, b.lateral));
        }
        assert!(rewards.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn overlap_is_an_accident_for_both() {
        let p = SceneParams {
            agents_per_side: 1,
            ..Default::default()
        };
        let mut w = init_scene(5, &p, &RoadGeometry::default()).unwrap();
        w.vehicles[0].y = 0.0;
        w.vehicles[0].lateral = 2.0;
        w.vehicles[1].y = 0.0;
        w.vehicles[1].lateral = 3.0;
        let mut plans: Vec<_> = w.vehicles.iter().map(|v| Some(hold_plan(v))).collect();
        // drive agent 1 onto agent 0
        plans[1].as_mut().unwrap().points[0] = Point { x: 2.2, y: 0.5 };
        let cfg = RewardConfig::default();
        let (next, rewards) = step(&w, &plans, &cfg).unwrap();
        assert_eq!(next.outcomes, vec![Outcome::Accident, Outcome::Accident]);
        assert_eq!(rewards, vec![-cfg.accident_penalty; 2]);
    }

    #[test]
    fn leaving_on_target_side_is_a_merge() {
        let p = SceneParams {
            agents_per_side: 1,
            ..Default::default()
        };
        let mut w = init_scene(5, &p, &RoadGeometry::default()).unwrap();
        let end = w.geometry.merge_end();
        w.vehicles[0].y = end - 1.0;
        w.vehicles[0].lateral = 1.0;
        w.vehicles[0].target = Side::Left;
        w.vehicles[1].y = end - 1.0;
        w.vehicles[1].lateral = 3.0;
        w.vehicles[1].target = Side::Left;
        let plans: Vec<_> = w
            .vehicles
            .iter()
            .map(|v| {
                let mut p = hold_plan(v);
                p.points[0].y = 1.6;
                Some(p)
            })
            .collect();
        let (next, rewards) = step(&w, &plans, &RewardConfig::default()).unwrap();
        assert_eq!(next.outcomes, vec![Outcome::MergedOk, Outcome::WrongSide]);
        assert!(rewards[0] > 0.9);
        assert!(rewards[1] < -0.4);
    }

    #[test]
    fn non_finite_plan_is_rejected() {
        let w = init_scene(5, &SceneParams::default(), &RoadGeometry::default()).unwrap();
        let mut plans: Vec<_> = w.vehicles.iter().map(|v| Some(hold_plan(v))).collect();
        plans[2].as_mut().unwrap().points[0].y = f64::NAN;
        assert!(matches!(step(&w, &plans, &RewardConfig::default()), Err(Error::NonFinite(_))));
    }
}
