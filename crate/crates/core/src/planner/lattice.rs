use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::constraints::{feasible, headway_ok, point_separation_ok, relevant, HardConstraintConfig, Roadway};
use super::cost::{bbox_gap, cost_giveway, cost_takeway, total_cost, CostBreakdown, CostParams, CostWeights};
use super::{predict_others, Point, PredictedTrajectory, TrajectoryPlan, K, TAU};
use crate::options::{Desires, Label};
use crate::sim::sense::AgnosticState;

/// Piecewise-constant controls: in every stage one longitudinal
/// acceleration (m/s^2) and one lateral rate (lanes/s) are held for
/// `stage_steps[s]` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub accelerations: Vec<f64>,
    pub lateral_rates: Vec<f64>,
    pub stage_steps: Vec<usize>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            accelerations: vec![-3.0, -1.0, 0.0, 1.0, 3.0],
            lateral_rates: vec![-1.0, 0.0, 1.0],
            stage_steps: vec![5, 5],
        }
    }
}

impl LatticeConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.accelerations.is_empty() || self.accelerations.iter().any(|a| !a.is_finite()) {
            return Err(("accelerations", "must be a non-empty list of finite values".into()));
        }
        if self.lateral_rates.is_empty() || self.lateral_rates.iter().any(|a| !a.is_finite()) {
            return Err(("lateral_rates", "must be a non-empty list of finite values".into()));
        }
        if self.stage_steps.iter().sum::<usize>() != K || self.stage_steps.contains(&0) {
            return Err(("stage_steps", format!("must be positive and sum to {K}")));
        }
        Ok(())
    }

    pub fn controls_per_stage(&self) -> usize {
        self.accelerations.len() * self.lateral_rates.len()
    }

    pub fn candidate_count(&self) -> usize {
        self.controls_per_stage().pow(self.stage_steps.len() as u32)
    }

    fn control(&self, c: usize) -> (f64, f64) {
        let n = self.lateral_rates.len();
        (self.accelerations[c / n], self.lateral_rates[c % n])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub weights: CostWeights,
    pub costs: CostParams,
    pub constraints: HardConstraintConfig,
    pub lattice: LatticeConfig,
    pub v_max: f64,
    /// Deceleration of the in-lane fallback used when nothing is feasible.
    pub fallback_decel: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            costs: CostParams::default(),
            constraints: HardConstraintConfig::default(),
            lattice: LatticeConfig::default(),
            v_max: 25.0,
            fallback_decel: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub plan: TrajectoryPlan,
    pub breakdown: CostBreakdown,
    /// True when no lattice candidate was feasible.
    pub fallback: bool,
    /// Complete feasible candidates scored after state merging.
    pub scored: usize,
}

fn snap(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

struct Kinematics {
    x: f64,
    y: f64,
    v: f64,
}

fn advance(k: &mut Kinematics, accel: f64, rate: f64, v_max: f64) -> Point {
    k.v = (k.v + accel * TAU).clamp(0.0, v_max);
    k.y += k.v * TAU;
    k.x = snap(k.x + rate * TAU);
    Point { x: k.x, y: k.y }
}

fn rollout(origin: Point, v0: f64, controls: &[usize], cfg: &PlannerConfig) -> TrajectoryPlan {
    let mut k = Kinematics {
        x: origin.x,
        y: origin.y,
        v: v0,
    };
    let mut points = Vec::with_capacity(K);
    for (stage, &c) in controls.iter().enumerate() {
        let (a, u) = cfg.lattice.control(c);
        for _ in 0..cfg.lattice.stage_steps[stage] {
            points.push(advance(&mut k, a, u, cfg.v_max));
        }
    }
    TrajectoryPlan { origin, points }
}

fn braking_plan(origin: Point, v0: f64, toward: Option<(f64, f64)>, cfg: &PlannerConfig) -> TrajectoryPlan {
    let mut k = Kinematics {
        x: origin.x,
        y: origin.y,
        v: v0,
    };
    let points = (0..K)
        .map(|_| {
            let mut p = advance(&mut k, -cfg.fallback_decel, 0.0, cfg.v_max);
            if let Some((rate, center)) = toward {
                let step = rate * TAU;
                let x = if (center - k.x).abs() <= step { center } else { k.x + step * (center - k.x).signum() };
                k.x = snap(x);
                p.x = k.x;
            }
            p
        })
        .collect();
    TrajectoryPlan { origin, points }
}

fn min_separation(plan: &TrajectoryPlan, predictions: &[PredictedTrajectory], window: usize, w: f64) -> f64 {
    let mut m = f64::INFINITY;
    for (i, p) in plan.points.iter().enumerate() {
        for other in predictions {
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(other.points.len());
            for q in other.points.get(lo..hi).unwrap_or(&[]) {
                m = m.min(p.dist_m(q, w));
            }
        }
    }
    m
}

/// The same trajectories with every vehicle held at its current lateral
/// position.
fn lateral_hold(predictions: &[PredictedTrajectory]) -> Vec<PredictedTrajectory> {
    predictions
        .iter()
        .map(|p| {
            let x0 = match p.points.as_slice() {
                [a, b, ..] => 2.0 * a.x - b.x,
                [a] => a.x,
                [] => 0.0,
            };
            PredictedTrajectory {
                vehicle: p.vehicle,
                points: p.points.iter().map(|q| Point { x: x0, y: q.y }).collect(),
            }
        })
        .collect()
}

/// Braking at `fallback_decel`: either holding the lateral position or
/// recentering on one of the two nearest lane centers, whichever keeps more
/// distance to the other vehicles (holding on ties). Distance is the worse of
/// the constant-velocity predictions and the same vehicles holding their
/// lateral position.
fn fallback_plan(origin: Point, v0: f64, predictions: &[PredictedTrajectory], cfg: &PlannerConfig, w: f64) -> TrajectoryPlan {
    let hold = braking_plan(origin, v0, None, cfg);
    let max_rate = cfg.lattice.lateral_rates.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if max_rate == 0.0 || origin.x == origin.x.round() {
        return hold;
    }
    let window = cfg.constraints.window;
    let held = lateral_hold(predictions);
    let sep = |plan: &TrajectoryPlan| min_separation(plan, predictions, window, w).min(min_separation(plan, &held, window, w));
    let mut best_sep = sep(&hold);
    let mut best = hold;
    for center in [origin.x.floor(), origin.x.ceil()] {
        let plan = braking_plan(origin, v0, Some((max_rate, center)), cfg);
        let s = sep(&plan);
        if s > best_sep {
            best_sep = s;
            best = plan;
        }
    }
    best
}

/// Bounding box of every point any lattice candidate can reach.
fn reach_envelope(origin: Point, v0: f64, cfg: &PlannerConfig) -> [Point; 2] {
    let horizon = TAU * K as f64;
    let max_rate = cfg.lattice.lateral_rates.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let max_acc = cfg.lattice.accelerations.iter().fold(0.0f64, |m, a| m.max(*a));
    let v_top = (v0 + max_acc * horizon).min(cfg.v_max).max(v0);
    [
        Point {
            x: origin.x - max_rate * horizon - 1e-6,
            y: origin.y,
        },
        Point {
            x: origin.x + max_rate * horizon + 1e-6,
            y: origin.y + v_top * horizon + 1e-6,
        },
    ]
}

#[derive(Clone)]
struct Partial {
    points: Vec<Point>,
    kin_v: f64,
    /// Separable part of the cost (speed, lateral, smoothness) so far.
    cost: f64,
    /// Per cost-relevant vehicle: earliest intersection and squared closest
    /// approach.
    first_hit: Vec<Option<(usize, usize)>>,
    min_dist: Vec<f64>,
}

impl Partial {
    fn key(&self) -> Vec<u64> {
        let n = self.points.len();
        let last = self.points[n - 1];
        let prev = if n >= 2 { self.points[n - 2] } else { last };
        let mut key = vec![
            self.kin_v.to_bits(),
            last.x.to_bits(),
            last.y.to_bits(),
            prev.x.to_bits(),
            prev.y.to_bits(),
        ];
        for (h, d) in self.first_hit.iter().zip(&self.min_dist) {
            key.push(match h {
                Some((i, j)) => ((*i as u64) << 32) | *j as u64,
                None => u64::MAX,
            });
            key.push(d.to_bits());
        }
        key
    }
}

/// Minimum-cost feasible trajectory over the control lattice.
///
/// Forward dynamic programming over stages. Partial trajectories whose
/// continuation cost is provably identical (same kinematic state, same last
/// two points, same per-vehicle intersection summary) are merged, keeping the
/// cheaper one. Survivors are scored with [`total_cost`], so the result
/// matches [`brute_force_plan`] exactly.
pub fn plan(desires: &Desires, state: &AgnosticState, cfg: &PlannerConfig) -> PlanOutcome {
    let predictions = predict_others(state);
    plan_with_predictions(desires, state, &predictions, cfg)
}

pub(crate) fn plan_with_predictions(
    desires: &Desires,
    state: &AgnosticState,
    predictions: &[PredictedTrajectory],
    cfg: &PlannerConfig,
) -> PlanOutcome {
    let w = state.lane_width;
    let origin = Point {
        x: state.ego_lateral,
        y: 0.0,
    };
    let v0 = state.ego_long_speed().max(0.0);
    let roadway = Roadway::from_state(state);
    let envelope = reach_envelope(origin, v0, cfg);
    let guard = relevant(&envelope, predictions, cfg.constraints.min_separation, w);
    let headway_guard = relevant(&envelope, predictions, cfg.constraints.headway_reach(cfg.v_max), w);
    let tracked: Vec<(usize, &PredictedTrajectory)> = predictions
        .iter()
        .enumerate()
        .filter(|(_, p)| bbox_gap(&envelope, &p.points, w) < cfg.costs.intersection_threshold)
        .collect();
    let thr = cfg.costs.intersection_threshold;
    // squared-distance prefilter, loose enough that the exact test decides
    let thr_sq_loose = thr * thr * (1.0 + 1e-9);

    let mut layer = vec![Partial {
        points: Vec::with_capacity(K),
        kin_v: v0,
        cost: 0.0,
        first_hit: vec![None; tracked.len()],
        min_dist: vec![f64::INFINITY; tracked.len()],
    }];

    let stages = cfg.lattice.stage_steps.len();
    let mut buf = [origin; K];
    for (stage, &steps) in cfg.lattice.stage_steps.iter().enumerate() {
        let final_stage = stage + 1 == stages;
        let mut next: Vec<Partial> = Vec::with_capacity(layer.len() * cfg.lattice.controls_per_stage());
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for part in &layer {
            let base = part.points.len();
            let start = part.points.last().copied().unwrap_or(origin);
            'control: for c in 0..cfg.lattice.controls_per_stage() {
                let (a, u) = cfg.lattice.control(c);
                let mut k = Kinematics {
                    x: start.x,
                    y: start.y,
                    v: part.kin_v,
                };
                for n in 0..steps {
                    let p = advance(&mut k, a, u, cfg.v_max);
                    let prev = if n > 0 { buf[n - 1] } else { start };
                    let i = base + n + 1;
                    if !roadway.contains(&p)
                        || !point_separation_ok(i, &p, &guard, &cfg.constraints, w)
                        || !headway_ok(i, &origin, &p, &prev, &headway_guard, &cfg.constraints, w)
                    {
                        continue 'control;
                    }
                    buf[n] = p;
                }
                let mut points = Vec::with_capacity(K);
                points.extend_from_slice(&part.points);
                points.extend_from_slice(&buf[..steps]);
                let mut child = Partial {
                    points,
                    kin_v: k.v,
                    cost: part.cost,
                    first_hit: part.first_hit.clone(),
                    min_dist: part.min_dist.clone(),
                };
                for n in base..base + steps {
                    let p = child.points[n];
                    let i = n + 1;
                    if n >= 1 {
                        let prev1 = child.points[n - 1];
                        let prev2 = if n >= 2 { child.points[n - 2] } else { origin };
                        let e = desires.speed - p.dist_m(&prev1, w) / TAU;
                        child.cost += cfg.weights.speed * e * e;
                        let dx = (p.x - 2.0 * prev1.x + prev2.x) * w;
                        let dy = p.y - 2.0 * prev1.y + prev2.y;
                        child.cost += cfg.weights.smoothness * (dx * dx + dy * dy);
                    }
                    child.cost += cfg.weights.lateral * (p.x - desires.lateral).abs();
                    for (t, (_, other)) in tracked.iter().enumerate() {
                        for (j0, q) in other.points.iter().enumerate() {
                            let d_sq = p.dist_sq_m(q, w);
                            if d_sq < child.min_dist[t] {
                                child.min_dist[t] = d_sq;
                            }
                            if child.first_hit[t].is_none() && d_sq < thr_sq_loose && d_sq.sqrt() < thr {
                                child.first_hit[t] = Some((i, j0 + 1));
                            }
                        }
                    }
                }
                if final_stage {
                    next.push(child);
                    continue;
                }
                let key = child.key();
                match index.get(&key) {
                    Some(&slot) => {
                        if child.cost < next[slot].cost {
                            next[slot] = child;
                        }
                    }
                    None => {
                        index.insert(key, next.len());
                        next.push(child);
                    }
                }
            }
        }
        layer = next;
        if layer.is_empty() {
            break;
        }
    }

    // Cheap scores from the DP summaries pick a shortlist; the shortlist is
    // rescored exactly so the winner matches brute force.
    let scored = layer.len();
    let approx: Vec<f64> = layer
        .iter()
        .map(|part| {
            let mut c = part.cost;
            for (t, (k, _)) in tracked.iter().enumerate() {
                let ij = part.first_hit[t];
                c += match desires.labels.get(*k).copied().unwrap_or(Label::Offset) {
                    Label::GiveWay => cfg.weights.give_way * cost_giveway(ij, cfg.costs.time_margin),
                    Label::TakeWay => cfg.weights.take_way * cost_takeway(ij, cfg.costs.time_margin),
                    Label::Offset if ij.is_some() => cfg.weights.offset * (cfg.costs.offset_margin - part.min_dist[t].sqrt()).max(0.0),
                    Label::Offset => 0.0,
                };
            }
            c
        })
        .collect();
    let floor = approx.iter().copied().fold(f64::INFINITY, f64::min);
    let band = floor + 1e-9 * floor.abs().max(1.0);
    let mut best: Option<(TrajectoryPlan, CostBreakdown)> = None;
    for (part, a) in layer.into_iter().zip(approx) {
        if a > band {
            continue;
        }
        let candidate = TrajectoryPlan { origin, points: part.points };
        let b = total_cost(&candidate, desires, predictions, &cfg.weights, &cfg.costs, w);
        if best.as_ref().is_none_or(|(_, bb)| b.total < bb.total) {
            best = Some((candidate, b));
        }
    }
    match best {
        Some((plan, breakdown)) => PlanOutcome {
            plan,
            breakdown,
            fallback: false,
            scored,
        },
        None => {
            let plan = fallback_plan(origin, v0, predictions, cfg, w);
            let breakdown = total_cost(&plan, desires, predictions, &cfg.weights, &cfg.costs, w);
            PlanOutcome {
                plan,
                breakdown,
                fallback: true,
                scored: 0,
            }
        }
    }
}

/// Exhaustive reference: scores every lattice candidate with the public
/// [`feasible`] and [`total_cost`] functions.
pub fn brute_force_plan(desires: &Desires, state: &AgnosticState, cfg: &PlannerConfig) -> Option<(TrajectoryPlan, CostBreakdown)> {
    let predictions = predict_others(state);
    let roadway = Roadway::from_state(state);
    let origin = Point {
        x: state.ego_lateral,
        y: 0.0,
    };
    let v0 = state.ego_long_speed().max(0.0);
    let per = cfg.lattice.controls_per_stage();
    let stages = cfg.lattice.stage_steps.len();
    let mut best: Option<(TrajectoryPlan, CostBreakdown)> = None;
    for code in 0..cfg.lattice.candidate_count() {
        let mut controls = vec![0; stages];
        let mut rest = code;
        for s in (0..stages).rev() {
            controls[s] = rest % per;
            rest /= per;
        }
        let candidate = rollout(origin, v0, &controls, cfg);
        if !feasible(&candidate, &predictions, &roadway, &cfg.constraints, state.lane_width).ok {
            continue;
        }
        let b = total_cost(&candidate, desires, &predictions, &cfg.weights, &cfg.costs, state.lane_width);
        if best.as_ref().is_none_or(|(_, bb)| b.total < bb.total) {
            best = Some((candidate, b));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::options::Label;
    use crate::planner::intersection_indices;
    use crate::planner::tests::bare_state;
    use crate::sim::sense::SensedVehicle;

    #[test]
    fn empty_road_keeps_lane_and_speed() {
        let s = bare_state(vec![]);
        let d = Desires {
            speed: 16.0,
            lateral: 2.0,
            labels: vec![],
        };
        let out = plan(&d, &s, &PlannerConfig::default());
        assert!(!out.fallback);
        assert!(out.breakdown.total < 1e-9);
        assert!(out.plan.points.iter().all(|p| p.x == 2.0));
        assert!((out.plan.points[9].y - 16.0).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force_with_traffic() {
        let s = bare_state(vec![
            SensedVehicle {
                id: 1,
                lateral: 3.0,
                rel_long: 4.0,
                speed: 15.0,
                heading: -0.05,
            },
            SensedVehicle {
                id: 2,
                lateral: 2.0,
                rel_long: 25.0,
                speed: 12.0,
                heading: 0.0,
            },
        ]);
        let d = Desires {
            speed: 18.5,
            lateral: 3.0,
            labels: vec![Label::GiveWay, Label::Offset],
        };
        let cfg = PlannerConfig::default();
        let dp = plan(&d, &s, &cfg);
        let (_, bf) = brute_force_plan(&d, &s, &cfg).unwrap();
        assert_eq!(dp.breakdown.total, bf.total);
    }

    #[test]
    fn give_way_vehicle_is_let_through() {
        // a car in the target lane just ahead and slightly faster
        let s = bare_state(vec![SensedVehicle {
            id: 3,
            lateral: 3.0,
            rel_long: 2.0,
            speed: 17.0,
            heading: 0.0,
        }]);
        let d = Desires {
            speed: 16.0,
            lateral: 3.0,
            labels: vec![Label::GiveWay],
        };
        let cfg = PlannerConfig::default();
        let out = plan(&d, &s, &cfg);
        let pred = predict_others(&s);
        match intersection_indices(&out.plan, &pred[0], cfg.costs.intersection_threshold, 3.5) {
            None => {}
            Some((i, j)) => assert!(TAU * i as f64 >= TAU * j as f64 + 0.5 - 1e-9),
        }
    }

    #[test]
    fn boxed_in_uses_fallback() {
        let mut s = bare_state(vec![SensedVehicle {
            id: 1,
            lateral: 2.0,
            rel_long: 0.5,
            speed: 0.0,
            heading: 0.0,
        }]);
        s.dist_to_merge = 80.0;
        let d = Desires {
            speed: 16.0,
            lateral: 2.0,
            labels: vec![Label::Offset],
        };
        let out = plan(&d, &s, &PlannerConfig::default());
        assert!(out.fallback);
        assert!(out.plan.points.iter().all(|p| p.x == 2.0));
    }
}
