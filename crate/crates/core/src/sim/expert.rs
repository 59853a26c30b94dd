//! Scripted driver used for demonstrations and as background traffic.
//!
//! The expert acts in the option space itself: for every snapshot it names
//! the child it would pick at each node of the graph, so its choices can be
//! replayed through [`crate::options::traverse`] and imitated node by node.

use serde::{Deserialize, Serialize};

use super::sense::{AgnosticState, SensedVehicle};
use crate::options::{Commitment, Label, LateralChoice, Maneuver, OptionPath, SpeedChoice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    pub cruise_speed: f64,
    /// Cruise band half-width (m/s) before the speed is corrected.
    pub speed_tolerance: f64,
    /// Following distance `standstill + headway * v` (m).
    pub standstill: f64,
    pub headway: f64,
    /// Minimum longitudinal clearance for a lane change (m), plus
    /// `gap_time` seconds per m/s of closing speed.
    pub gap_clearance: f64,
    pub gap_time: f64,
    /// Remaining merge-area length (m) below which a blocked merge pushes.
    pub push_distance: f64,
    /// Longitudinal range (m) inside which vehicles get g / t labels.
    pub label_range: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            cruise_speed: 16.0,
            speed_tolerance: 1.0,
            standstill: 4.0,
            headway: 1.2,
            gap_clearance: 6.0,
            gap_time: 1.0,
            push_distance: 40.0,
            label_range: 40.0,
        }
    }
}

impl ExpertConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        for (k, v) in [
            ("cruise_speed", self.cruise_speed),
            ("speed_tolerance", self.speed_tolerance),
            ("standstill", self.standstill),
            ("headway", self.headway),
            ("gap_clearance", self.gap_clearance),
            ("gap_time", self.gap_time),
            ("push_distance", self.push_distance),
            ("label_range", self.label_range),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((k, "must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

fn in_lane(v: &SensedVehicle, lane: f64, w: f64) -> bool {
    let d = v.lateral - lane;
    d.abs() < 0.9 || (d.abs() < 1.6 && v.lateral_rate(w) * -d.signum() > 0.2)
}

/// True when `lane` has room for the ego vehicle to move in.
pub fn gap_ok(state: &AgnosticState, lane: f64, cfg: &ExpertConfig) -> bool {
    let v = state.ego_long_speed();
    state.vehicles.iter().filter(|o| in_lane(o, lane, state.lane_width)).all(|o| {
        if o.rel_long >= 0.0 {
            o.rel_long > cfg.gap_clearance + cfg.gap_time * (v - o.long_speed()).max(0.0)
        } else {
            -o.rel_long > cfg.gap_clearance + cfg.gap_time * (o.long_speed() - v).max(0.0)
        }
    })
}

fn leader<'a>(state: &'a AgnosticState, lane: f64) -> Option<&'a SensedVehicle> {
    state
        .vehicles
        .iter()
        .filter(|o| o.rel_long > 0.0 && (o.lateral - lane).abs() < 0.9)
        .min_by(|a, b| a.rel_long.total_cmp(&b.rel_long))
}

fn maneuver(state: &AgnosticState) -> Maneuver {
    if state.in_merge_area() {
        Maneuver::Merge
    } else {
        Maneuver::Prepare
    }
}

fn lateral_choice(state: &AgnosticState, man: Maneuver) -> LateralChoice {
    let Some(target) = state.target_side else {
        return LateralChoice::Stay;
    };
    let road = state.road();
    let lane = state.ego_lateral.round();
    match man {
        Maneuver::Prepare => {
            if target == state.own_side {
                return LateralChoice::Stay;
            }
            let (lo, hi) = road.side_lanes(state.own_side);
            let inner = if target.sign() > 0.0 { hi } else { lo };
            if lane == inner {
                LateralChoice::Stay
            } else {
                LateralChoice::toward(target)
            }
        }
        Maneuver::Merge => {
            if road.side_of(lane) == Some(target) {
                LateralChoice::Stay
            } else {
                LateralChoice::toward(target)
            }
        }
    }
}

/// The expert's choice at every node for this snapshot.
pub fn expert_path(state: &AgnosticState, cfg: &ExpertConfig) -> OptionPath {
    let man = maneuver(state);
    let lateral = lateral_choice(state, man);
    let lane = state.ego_lateral.round();
    let dir = match lateral {
        LateralChoice::Left => -1.0,
        LateralChoice::Right => 1.0,
        LateralChoice::Stay => 0.0,
    };
    let next_lane = lane + dir;
    let commitment = (lateral != LateralChoice::Stay).then(|| {
        if gap_ok(state, next_lane, cfg) {
            Commitment::Go
        } else if state.in_merge_area() && state.dist_to_merge_end() < cfg.push_distance {
            Commitment::Push
        } else {
            Commitment::Stay
        }
    });
    let blocked = matches!(commitment, Some(Commitment::Stay) | Some(Commitment::Push));
    let desired_lane = if commitment == Some(Commitment::Go) { next_lane } else { lane };

    let v = state.ego_long_speed();
    let mut speed = if v < cfg.cruise_speed - cfg.speed_tolerance {
        SpeedChoice::Accelerate
    } else if v > cfg.cruise_speed + cfg.speed_tolerance {
        SpeedChoice::Decelerate
    } else {
        SpeedChoice::Same
    };
    if blocked && state.in_merge_area() {
        // open a gap: drop back behind a blocker that is ahead, otherwise
        // pull ahead of it
        let blocker = state
            .vehicles
            .iter()
            .filter(|o| in_lane(o, next_lane, state.lane_width))
            .min_by(|a, b| a.rel_long.abs().total_cmp(&b.rel_long.abs()));
        if let Some(b) = blocker {
            speed = if b.rel_long > 0.0 {
                SpeedChoice::Decelerate
            } else if v < cfg.cruise_speed + 4.0 {
                SpeedChoice::Accelerate
            } else {
                SpeedChoice::Same
            };
        }
    }
    for l in [lane, desired_lane] {
        if let Some(lead) = leader(state, l) {
            let want = cfg.standstill + cfg.headway * v;
            if lead.rel_long < want && (v > lead.long_speed() - 0.5 || lead.rel_long < 0.7 * want) {
                speed = SpeedChoice::Decelerate;
            } else if lead.rel_long < want && speed == SpeedChoice::Accelerate {
                speed = SpeedChoice::Same;
            }
        }
    }

    let labels = state
        .vehicles
        .iter()
        .map(|o| {
            let relevant = o.rel_long.abs() < cfg.label_range
                && ((o.lateral - state.ego_lateral).abs() < 1.25 || (o.lateral - desired_lane).abs() < 1.25);
            if !relevant {
                Label::Offset
            } else if o.rel_long > 0.0 {
                Label::GiveWay
            } else {
                Label::TakeWay
            }
        })
        .collect();
    OptionPath {
        maneuver: man,
        lateral,
        commitment,
        speed,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::tests::bare_state;
    use crate::sim::geometry::Side;

    fn car(id: usize, lateral: f64, rel_long: f64, speed: f64) -> SensedVehicle {
        SensedVehicle {
            id,
            lateral,
            rel_long,
            speed,
            heading: 0.0,
        }
    }

    #[test]
    fn changes_toward_target_when_clear() {
        let mut s = bare_state(vec![]);
        s.target_side = Some(Side::Right);
        let p = expert_path(&s, &ExpertConfig::default());
        assert_eq!(p.maneuver, Maneuver::Merge);
        assert_eq!(p.lateral, LateralChoice::Right);
        assert_eq!(p.commitment, Some(Commitment::Go));
    }

    #[test]
    fn waits_when_blocked() {
        let mut s = bare_state(vec![car(1, 3.0, 1.0, 16.0)]);
        s.target_side = Some(Side::Right);
        let p = expert_path(&s, &ExpertConfig::default());
        assert_eq!(p.commitment, Some(Commitment::Stay));
        assert_eq!(p.speed, SpeedChoice::Decelerate);
        assert_eq!(p.labels, vec![Label::GiveWay]);
        s.dist_to_merge = -70.0;
        assert_eq!(expert_path(&s, &ExpertConfig::default()).commitment, Some(Commitment::Push));
    }

    #[test]
    fn keeps_distance_to_leader() {
        let s = bare_state(vec![car(1, 2.0, 10.0, 12.0)]);
        assert_eq!(expert_path(&s, &ExpertConfig::default()).speed, SpeedChoice::Decelerate);
    }

    #[test]
    fn prepares_on_inner_lane() {
        let mut s = bare_state(vec![]);
        s.dist_to_merge = 150.0;
        s.ego_lateral = 1.0;
        s.target_side = Some(Side::Right);
        let p = expert_path(&s, &ExpertConfig::default());
        assert_eq!((p.maneuver, p.lateral), (Maneuver::Prepare, LateralChoice::Right));
        s.ego_lateral = 2.0;
        assert_eq!(expert_path(&s, &ExpertConfig::default()).lateral, LateralChoice::Stay);
    }
}
