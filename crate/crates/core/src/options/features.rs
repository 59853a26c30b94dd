//! Fixed-size input encodings of the node policies.
//!
//! High-level and speed nodes see `ego | active option | neighbours`:
//!
//! | range   | content                                                   |
//! |---------|-----------------------------------------------------------|
//! | 0..14   | ego block, see [`ego_block`]                               |
//! | 14..22  | active option one-hot: prepare, merge, left, stay, right, go, stay, push |
//! | 22..42  | first 4 sensed vehicles x (present, rel long, rel lat, rel speed, lat rate), zero padded |
//!
//! Vehicle-label nodes see `ego | upstream | target offset | vehicle | prior label`:
//!
//! | range   | content                                                   |
//! |---------|-----------------------------------------------------------|
//! | 0..14   | ego block                                                 |
//! | 14..25  | upstream one-hot: the 8 option entries, then decelerate, same, accelerate |
//! | 25      | (desired lateral - ego lateral) / 2                       |
//! | 26..33  | vehicle block, see [`vehicle_block`]                       |
//! | 33..37  | label of the previous vehicle in the chain: g, t, o, none |

use super::desires::Label;
use super::path::{Commitment, LateralChoice, Maneuver, SpeedChoice};
use crate::sim::geometry::Side;
use crate::sim::sense::{AgnosticState, SensedVehicle};

pub const EGO_DIM: usize = 14;
pub const OPTION_DIM: usize = 8;
pub const NEIGHBORS: usize = 4;
pub const NEIGHBOR_DIM: usize = 5;
pub const HIGH_DIM: usize = EGO_DIM + OPTION_DIM + NEIGHBORS * NEIGHBOR_DIM;
pub const UPSTREAM_DIM: usize = OPTION_DIM + 3;
pub const VEHICLE_DIM: usize = 7;
pub const CHAIN_DIM: usize = EGO_DIM + UPSTREAM_DIM + 1 + VEHICLE_DIM + 4;

/// Decisions taken so far in the current traversal (or persisting from the
/// last high-level decision).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActiveOption {
    pub maneuver: Option<Maneuver>,
    pub lateral: Option<LateralChoice>,
    pub commitment: Option<Commitment>,
    pub speed: Option<SpeedChoice>,
}

impl ActiveOption {
    fn write(&self, out: &mut [f64], with_speed: bool) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if let Some(m) = self.maneuver {
            out[m.index()] = 1.0;
        }
        if let Some(l) = self.lateral {
            out[2 + l.index()] = 1.0;
        }
        if let Some(c) = self.commitment {
            out[5 + c.index()] = 1.0;
        }
        if with_speed {
            if let Some(s) = self.speed {
                out[8 + s.index()] = 1.0;
            }
        }
    }
}

fn side_sign(s: Option<Side>) -> f64 {
    s.map_or(0.0, |s| s.sign())
}

fn lane_gap(state: &AgnosticState, lane: f64) -> (f64, f64) {
    let mut ahead = 1.0f64;
    let mut behind = -1.0f64;
    for v in &state.vehicles {
        if (v.lateral - lane).abs() < 0.75 {
            let d = (v.rel_long / 50.0).clamp(-1.0, 1.0);
            if v.rel_long >= 0.0 {
                ahead = ahead.min(d);
            } else {
                behind = behind.max(d);
            }
        }
    }
    (ahead, behind)
}

/// Lane one step toward the target side, or the ego lane when already there
/// or when the target is unknown.
pub fn lane_toward_target(state: &AgnosticState) -> f64 {
    let road = state.road();
    let lane = state.ego_lateral.round();
    match state.target_side {
        Some(t) if road.side_of(state.ego_lateral) != Some(t) => (lane + t.sign()).clamp(1.0, road.lane_count() as f64),
        _ => lane,
    }
}

/// Ego block:
/// speed / v_max, lateral relative to the barrier, distance to the merge area
/// and to its end, in-merge flag, target known, target sign, own side sign,
/// on-target flag, signed lateral distance to the target side, gap ahead in
/// the own lane, its closing speed, nearest vehicles ahead and behind in the
/// lane toward the target.
pub fn ego_block(state: &AgnosticState, v_max: f64, out: &mut [f64]) {
    let road = state.road();
    let lps = state.lanes_per_side as f64;
    let barrier = road.barrier();
    let on_target = state.target_side.is_some() && road.side_of(state.ego_lateral) == state.target_side;
    let to_target = match state.target_side {
        Some(t) => {
            let (lo, hi) = road.side_lanes(t);
            let near = state.ego_lateral.clamp(lo, hi);
            (near - state.ego_lateral) / 2.0
        }
        None => 0.0,
    };
    let mut lead_gap = 1.0f64;
    let mut lead_closing = 0.0;
    for v in &state.vehicles {
        if (v.lateral - state.ego_lateral).abs() < 0.75 && v.rel_long > 0.0 && v.rel_long / 50.0 < lead_gap {
            lead_gap = v.rel_long / 50.0;
            lead_closing = (state.ego_long_speed() - v.long_speed()) / 10.0;
        }
    }
    let (ahead, behind) = lane_gap(state, lane_toward_target(state));
    out[0] = state.ego_speed / v_max;
    out[1] = (state.ego_lateral - barrier) / lps;
    out[2] = (state.dist_to_merge / 300.0).clamp(-1.0, 1.5);
    out[3] = (state.dist_to_merge_end() / 400.0).clamp(-0.5, 1.5);
    out[4] = if state.in_merge_area() { 1.0 } else { 0.0 };
    out[5] = if state.target_side.is_some() { 1.0 } else { 0.0 };
    out[6] = side_sign(state.target_side);
    out[7] = state.own_side.sign();
    out[8] = if on_target { 1.0 } else { 0.0 };
    out[9] = to_target;
    out[10] = lead_gap;
    out[11] = lead_closing;
    out[12] = ahead;
    out[13] = behind;
}

fn neighbor(state: &AgnosticState, v: &SensedVehicle, out: &mut [f64]) {
    out[0] = 1.0;
    out[1] = v.rel_long / 50.0;
    out[2] = (v.lateral - state.ego_lateral) / 2.0;
    out[3] = (v.long_speed() - state.ego_long_speed()) / 10.0;
    out[4] = v.lateral_rate(state.lane_width);
}

/// Shared prefix of every high-level feature vector; the option block is
/// filled in per node by [`set_option`].
pub fn high_features(state: &AgnosticState, option: &ActiveOption, v_max: f64) -> Vec<f64> {
    let mut out = vec![0.0; HIGH_DIM];
    ego_block(state, v_max, &mut out[..EGO_DIM]);
    option.write(&mut out[EGO_DIM..EGO_DIM + OPTION_DIM], false);
    for (k, v) in state.vehicles.iter().take(NEIGHBORS).enumerate() {
        let at = EGO_DIM + OPTION_DIM + k * NEIGHBOR_DIM;
        neighbor(state, v, &mut out[at..at + NEIGHBOR_DIM]);
    }
    out
}

pub fn set_option(features: &mut [f64], option: &ActiveOption) {
    option.write(&mut features[EGO_DIM..EGO_DIM + OPTION_DIM], false);
}

/// Vehicle block: rel long / 50, rel lateral / 2, closing speed / 10, lateral
/// rate, arrival-time difference at the merge point / 5, same-lane flag,
/// in-desired-lane flag.
pub fn vehicle_block(state: &AgnosticState, v: &SensedVehicle, desired_lateral: f64, out: &mut [f64]) {
    let mp = state.merge_point();
    let t_ego = mp / state.ego_long_speed().max(1.0);
    let t_other = (mp - v.rel_long).max(0.0) / v.long_speed().max(1.0);
    out[0] = v.rel_long / 50.0;
    out[1] = (v.lateral - state.ego_lateral) / 2.0;
    out[2] = (v.long_speed() - state.ego_long_speed()) / 10.0;
    out[3] = v.lateral_rate(state.lane_width);
    out[4] = ((t_other - t_ego) / 5.0).clamp(-2.0, 2.0);
    out[5] = if (v.lateral - state.ego_lateral).abs() < 0.5 { 1.0 } else { 0.0 };
    out[6] = if (v.lateral - desired_lateral).abs() < 0.75 { 1.0 } else { 0.0 };
}

/// Per-traversal prefix of the chain encoding (ego, upstream, target offset).
pub fn chain_prefix(state: &AgnosticState, upstream: &ActiveOption, desired_lateral: f64, v_max: f64) -> Vec<f64> {
    let mut out = vec![0.0; CHAIN_DIM];
    ego_block(state, v_max, &mut out[..EGO_DIM]);
    upstream.write(&mut out[EGO_DIM..EGO_DIM + UPSTREAM_DIM], true);
    out[EGO_DIM + UPSTREAM_DIM] = (desired_lateral - state.ego_lateral) / 2.0;
    out
}

/// Completes `prefix` for one vehicle of the chain.
pub fn chain_features(prefix: &mut [f64], state: &AgnosticState, v: &SensedVehicle, desired_lateral: f64, prior: Option<Label>) {
    let at = EGO_DIM + UPSTREAM_DIM + 1;
    vehicle_block(state, v, desired_lateral, &mut prefix[at..at + VEHICLE_DIM]);
    let p = &mut prefix[at + VEHICLE_DIM..];
    p.iter_mut().for_each(|x| *x = 0.0);
    p[prior.map_or(3, |l| l.index())] = 1.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::tests::bare_state;

    #[test]
    fn dims_and_padding() {
        let s = bare_state(vec![]);
        let f = high_features(&s, &ActiveOption::default(), 25.0);
        assert_eq!(f.len(), 42);
        assert!(f[EGO_DIM..].iter().all(|x| *x == 0.0));
        assert!(f.iter().all(|x| x.is_finite()));
        assert_eq!(CHAIN_DIM, 37);
    }

    #[test]
    fn option_one_hot() {
        let s = bare_state(vec![]);
        let opt = ActiveOption {
            maneuver: Some(Maneuver::Merge),
            lateral: Some(LateralChoice::Right),
            commitment: Some(Commitment::Push),
            speed: None,
        };
        let f = high_features(&s, &opt, 25.0);
        let block = &f[EGO_DIM..EGO_DIM + OPTION_DIM];
        assert_eq!(block, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }
}
