use serde::{Deserialize, Serialize};

use super::cost::bbox_gap;
use super::{Point, PredictedTrajectory, TrajectoryPlan, TAU};
use crate::sim::sense::AgnosticState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardConstraintConfig {
    /// Minimum distance (m) between a plan point and a predicted point.
    pub min_separation: f64,
    /// Only pairs with `|i - j| <= window` are checked.
    pub window: usize,
    /// Following-distance check between laterally overlapping vehicles: at
    /// every index the rear one must be able to stop behind the front one if
    /// both brake at `brake_decel` after `reaction_time`.
    pub headway: bool,
    /// Lateral distance (m) below which two vehicles overlap.
    pub lateral_overlap: f64,
    pub brake_decel: f64,
    pub reaction_time: f64,
}

impl Default for HardConstraintConfig {
    fn default() -> Self {
        Self {
            min_separation: 2.5,
            window: 2,
            headway: true,
            lateral_overlap: 3.0,
            brake_decel: 3.0,
            reaction_time: 0.2,
        }
    }
}

impl HardConstraintConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.min_separation > 0.0 && self.min_separation.is_finite()) {
            return Err(("min_separation", "must be > 0".into()));
        }
        if !(self.lateral_overlap >= 0.0 && self.lateral_overlap.is_finite()) {
            return Err(("lateral_overlap", "must be >= 0".into()));
        }
        if !(self.brake_decel > 0.0 && self.brake_decel.is_finite()) {
            return Err(("brake_decel", "must be > 0".into()));
        }
        if !(self.reaction_time >= 0.0 && self.reaction_time.is_finite()) {
            return Err(("reaction_time", "must be >= 0".into()));
        }
        Ok(())
    }

    /// Gap (m) the rear vehicle needs to the front one.
    pub fn required_gap(&self, v_rear: f64, v_front: f64) -> f64 {
        self.min_separation + ((v_rear * v_rear - v_front * v_front) / (2.0 * self.brake_decel)).max(0.0) + v_rear * self.reaction_time
    }

    /// Largest gap any pair of vehicles below `v_max` can need.
    pub fn headway_reach(&self, v_max: f64) -> f64 {
        if self.headway {
            self.required_gap(v_max, 0.0)
        } else {
            self.min_separation
        }
    }
}

/// One longitudinal stretch of drivable road, `[y_start, y_end)`, with the
/// lateral range admissible for vehicle centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub y_start: f64,
    pub y_end: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

/// Rectilinear road polygon in the ego frame, given as stacked segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roadway {
    pub segments: Vec<RoadSegment>,
}

const LATERAL_EPS: f64 = 1e-9;

impl Roadway {
    /// Own-road lanes until the merge area, the joined road after it.
    pub fn from_state(state: &AgnosticState) -> Self {
        let road = state.road();
        let (lo, hi) = road.side_lanes(state.own_side);
        let full = (1.0, road.lane_count() as f64);
        Roadway {
            segments: vec![
                RoadSegment {
                    y_start: f64::NEG_INFINITY,
                    y_end: state.dist_to_merge,
                    lat_min: lo,
                    lat_max: hi,
                },
                RoadSegment {
                    y_start: state.dist_to_merge,
                    y_end: f64::INFINITY,
                    lat_min: full.0,
                    lat_max: full.1,
                },
            ],
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.segments.iter().any(|s| {
            p.y >= s.y_start && p.y < s.y_end && p.x >= s.lat_min - LATERAL_EPS && p.x <= s.lat_max + LATERAL_EPS
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    OffRoad { index: usize },
    Separation { index: usize, vehicle: usize, other_index: usize, distance: f64 },
    Headway { index: usize, vehicle: usize, gap: f64, required: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Returns the trajectory predictions that could possibly violate the
/// constraints from points anywhere inside `reach`, given the largest
/// distance `radius` at which a constraint can bind.
pub(crate) fn relevant<'a>(
    reach: &[Point],
    predictions: &'a [PredictedTrajectory],
    radius: f64,
    lane_width: f64,
) -> Vec<&'a PredictedTrajectory> {
    predictions
        .iter()
        .filter(|p| bbox_gap(reach, &p.points, lane_width) < radius)
        .collect()
}

pub(crate) fn point_separation_ok(
    index: usize,
    p: &Point,
    others: &[&PredictedTrajectory],
    constraints: &HardConstraintConfig,
    lane_width: f64,
) -> bool {
    let lo = index.saturating_sub(constraints.window).max(1);
    for other in others {
        let hi = (index + constraints.window).min(other.points.len());
        for j in lo..=hi {
            if p.dist_m(&other.points[j - 1], lane_width) < constraints.min_separation {
                return false;
            }
        }
    }
    true
}

fn predicted_speed(other: &PredictedTrajectory, j: usize) -> f64 {
    let pts = &other.points;
    match pts.len() {
        0 | 1 => 0.0,
        _ if j >= 2 => (pts[j - 1].y - pts[j - 2].y) / TAU,
        _ => (pts[1].y - pts[0].y) / TAU,
    }
}

/// The headway condition at plan index `index` (1-based). On violation
/// returns `(gap, required)`. A vehicle behind that already shares the ego
/// lane at the start of the plan keeps its own distance and is not checked.
pub(crate) fn headway_gap(
    index: usize,
    origin: &Point,
    p: &Point,
    prev: &Point,
    other: &PredictedTrajectory,
    constraints: &HardConstraintConfig,
    lane_width: f64,
) -> Option<(f64, f64)> {
    let q = other.points.get(index - 1)?;
    if ((p.x - q.x) * lane_width).abs() >= constraints.lateral_overlap {
        return None;
    }
    let v_ego = (p.y - prev.y) / TAU;
    let v_other = predicted_speed(other, index);
    let (gap, required) = if q.y >= p.y {
        (q.y - p.y, constraints.required_gap(v_ego, v_other))
    } else {
        let start = other.points.first()?;
        if ((origin.x - start.x) * lane_width).abs() < constraints.lateral_overlap {
            return None;
        }
        (p.y - q.y, constraints.required_gap(v_other, v_ego))
    };
    (gap < required).then_some((gap, required))
}

pub(crate) fn headway_ok(
    index: usize,
    origin: &Point,
    p: &Point,
    prev: &Point,
    others: &[&PredictedTrajectory],
    constraints: &HardConstraintConfig,
    lane_width: f64,
) -> bool {
    !constraints.headway || others.iter().all(|o| headway_gap(index, origin, p, prev, o, constraints, lane_width).is_none())
}

/// Hard functional-safety check: every point on the roadway, no pair
/// `(i, j)` with `|i - j| <= window` closer than the minimum separation and,
/// when enabled, the headway condition at every index.
/// Indices in the report are 1-based.
pub fn feasible(
    plan: &TrajectoryPlan,
    predictions: &[PredictedTrajectory],
    roadway: &Roadway,
    constraints: &HardConstraintConfig,
    lane_width: f64,
) -> Feasibility {
    let mut violations = Vec::new();
    for (i0, p) in plan.points.iter().enumerate() {
        let i = i0 + 1;
        if !roadway.contains(p) {
            violations.push(Violation::OffRoad { index: i });
        }
        let prev = if i0 == 0 { plan.origin } else { plan.points[i0 - 1] };
        if constraints.headway {
            for other in predictions {
                if let Some((gap, required)) = headway_gap(i, &plan.origin, p, &prev, other, constraints, lane_width) {
                    violations.push(Violation::Headway {
                        index: i,
                        vehicle: other.vehicle,
                        gap,
                        required,
                    });
                }
            }
        }
        for other in predictions {
            for (j0, q) in other.points.iter().enumerate() {
                let j = j0 + 1;
                if i.abs_diff(j) > constraints.window {
                    continue;
                }
                let d = p.dist_m(q, lane_width);
                if d < constraints.min_separation {
                    violations.push(Violation::Separation {
                        index: i,
                        vehicle: other.vehicle,
                        other_index: j,
                        distance: d,
                    });
                }
            }
        }
    }
    Feasibility {
        ok: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::tests::bare_state;

    fn lane_plan(x: f64, spacing: f64) -> TrajectoryPlan {
        TrajectoryPlan {
            origin: Point { x, y: 0.0 },
            points: (1..=10).map(|i| Point { x, y: spacing * i as f64 }).collect(),
        }
    }

    #[test]
    fn empty_road_in_lane_is_feasible() {
        let s = bare_state(vec![]);
        let f = feasible(&lane_plan(2.0, 1.6), &[], &Roadway::from_state(&s), &HardConstraintConfig::default(), 3.5);
        assert!(f.ok);
    }

    #[test]
    fn off_road_point_is_reported() {
        let mut s = bare_state(vec![]);
        s.dist_to_merge = 50.0;
        let mut p = lane_plan(2.0, 1.6);
        p.points[3].x = 3.0; // across the barrier before the merge area
        let f = feasible(&p, &[], &Roadway::from_state(&s), &HardConstraintConfig::default(), 3.5);
        assert!(!f.ok);
        assert_eq!(f.violations, vec![Violation::OffRoad { index: 4 }]);
    }

    #[test]
    fn close_pass_violates_separation() {
        let s = bare_state(vec![]);
        let plan = lane_plan(2.0, 1.6);
        // predicted point 5 lies 1 m beside plan point 5
        let mut pts: Vec<Point> = (1..=10).map(|j| Point { x: 4.0, y: 30.0 + j as f64 }).collect();
        pts[4] = Point {
            x: 2.0 + 1.0 / 3.5,
            y: plan.points[4].y,
        };
        let other = PredictedTrajectory { vehicle: 7, points: pts };
        let f = feasible(&plan, &[other], &Roadway::from_state(&s), &HardConstraintConfig::default(), 3.5);
        assert!(!f.ok);
        assert!(f.violations.iter().any(|v| matches!(
            v,
            Violation::Separation {
                index: 5,
                vehicle: 7,
                other_index: 5,
                ..
            }
        )));
    }
}
