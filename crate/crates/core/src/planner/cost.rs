use serde::{Deserialize, Serialize};

use super::{Point, PredictedTrajectory, TrajectoryPlan, TAU};
use crate::options::{Desires, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub speed: f64,
    pub lateral: f64,
    pub give_way: f64,
    pub take_way: f64,
    pub offset: f64,
    pub smoothness: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            speed: 1.0,
            lateral: 1.0,
            give_way: 10.0,
            take_way: 10.0,
            offset: 5.0,
            smoothness: 0.1,
        }
    }
}

impl CostWeights {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        for (k, v) in [
            ("speed", self.speed),
            ("lateral", self.lateral),
            ("give_way", self.give_way),
            ("take_way", self.take_way),
            ("offset", self.offset),
            ("smoothness", self.smoothness),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((k, "must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            speed: self.speed * s,
            lateral: self.lateral * s,
            give_way: self.give_way * s,
            take_way: self.take_way * s,
            offset: self.offset * s,
            smoothness: self.smoothness * s,
        }
    }
}

/// Constants of the per-vehicle label costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    /// Two trajectory points closer than this (m) count as an intersection.
    pub intersection_threshold: f64,
    /// Required arrival-time separation at an intersection (s).
    pub time_margin: f64,
    /// Offset cost is `max(0, offset_margin - min distance)` (m).
    pub offset_margin: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            intersection_threshold: 3.0,
            time_margin: 0.5,
            offset_margin: 5.0,
        }
    }
}

/// Weighted cost terms; `total` is their sum in field order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub speed: f64,
    pub lateral: f64,
    pub give_way: f64,
    pub take_way: f64,
    pub offset: f64,
    pub smoothness: f64,
    pub total: f64,
}

pub fn cost_speed(plan: &TrajectoryPlan, v: f64, lane_width: f64) -> f64 {
    plan.points
        .windows(2)
        .map(|w| {
            let e = v - w[1].dist_m(&w[0], lane_width) / TAU;
            e * e
        })
        .sum()
}

/// `dist(x, y, l)` is the lateral offset `|x - l|` in lane units.
pub fn cost_lateral(plan: &TrajectoryPlan, l: f64) -> f64 {
    plan.points.iter().map(|p| (p.x - l).abs()).sum()
}

/// Sum of squared second differences (m) over origin and points.
pub fn cost_smoothness(plan: &TrajectoryPlan, lane_width: f64) -> f64 {
    let mut prev2 = plan.origin;
    let Some(mut prev1) = plan.points.first().copied() else {
        return 0.0;
    };
    let mut total = 0.0;
    for p in &plan.points[1..] {
        let dx = (p.x - 2.0 * prev1.x + prev2.x) * lane_width;
        let dy = p.y - 2.0 * prev1.y + prev2.y;
        total += dx * dx + dy * dy;
        prev2 = prev1;
        prev1 = *p;
    }
    total
}

fn bbox(points: &[Point], lane_width: f64) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let x = p.x * lane_width;
        b.0 = b.0.min(x);
        b.1 = b.1.max(x);
        b.2 = b.2.min(p.y);
        b.3 = b.3.max(p.y);
    }
    b
}

/// Lower bound on any pairwise distance between the two point sets (m).
pub(crate) fn bbox_gap(a: &[Point], b: &[Point], lane_width: f64) -> f64 {
    let (ax0, ax1, ay0, ay1) = bbox(a, lane_width);
    let (bx0, bx1, by0, by1) = bbox(b, lane_width);
    let gx = (bx0 - ax1).max(ax0 - bx1).max(0.0);
    let gy = (by0 - ay1).max(ay0 - by1).max(0.0);
    gx.hypot(gy)
}

/// Earliest plan index `i` (1-based) having some predicted point `j` closer
/// than `threshold`; among those `j`, the smallest. `None` stands for
/// `i = infinity`.
pub fn intersection_indices(plan: &TrajectoryPlan, other: &PredictedTrajectory, threshold: f64, lane_width: f64) -> Option<(usize, usize)> {
    if bbox_gap(&plan.points, &other.points, lane_width) >= threshold {
        return None;
    }
    for (i, p) in plan.points.iter().enumerate() {
        for (j, q) in other.points.iter().enumerate() {
            if p.dist_m(q, lane_width) < threshold {
                return Some((i + 1, j + 1));
            }
        }
    }
    None
}

/// `[tau (j - i) + margin]_+`, zero without intersection.
pub fn cost_giveway(ij: Option<(usize, usize)>, time_margin: f64) -> f64 {
    match ij {
        Some((i, j)) => (TAU * (j as f64 - i as f64) + time_margin).max(0.0),
        None => 0.0,
    }
}

/// `[tau (i - j) + margin]_+`, zero without intersection.
pub fn cost_takeway(ij: Option<(usize, usize)>, time_margin: f64) -> f64 {
    match ij {
        Some((i, j)) => (TAU * (i as f64 - j as f64) + time_margin).max(0.0),
        None => 0.0,
    }
}

/// Zero when the trajectories do not intersect, otherwise
/// `max(0, offset_margin - min pairwise distance)`.
pub fn cost_offset(plan: &TrajectoryPlan, other: &PredictedTrajectory, params: &CostParams, lane_width: f64) -> f64 {
    if intersection_indices(plan, other, params.intersection_threshold, lane_width).is_none() {
        return 0.0;
    }
    let mut min = f64::INFINITY;
    for p in &plan.points {
        for q in &other.points {
            min = min.min(p.dist_m(q, lane_width));
        }
    }
    (params.offset_margin - min).max(0.0)
}

/// Weighted objective. Labels pair with `predictions` by position; vehicles
/// without a label are treated as offset.
pub fn total_cost(
    plan: &TrajectoryPlan,
    desires: &Desires,
    predictions: &[PredictedTrajectory],
    weights: &CostWeights,
    params: &CostParams,
    lane_width: f64,
) -> CostBreakdown {
    let mut b = CostBreakdown {
        speed: weights.speed * cost_speed(plan, desires.speed, lane_width),
        lateral: weights.lateral * cost_lateral(plan, desires.lateral),
        smoothness: weights.smoothness * cost_smoothness(plan, lane_width),
        ..Default::default()
    };
    for (k, other) in predictions.iter().enumerate() {
        match desires.labels.get(k).copied().unwrap_or(Label::Offset) {
            Label::GiveWay => {
                let ij = intersection_indices(plan, other, params.intersection_threshold, lane_width);
                b.give_way += weights.give_way * cost_giveway(ij, params.time_margin);
            }
            Label::TakeWay => {
                let ij = intersection_indices(plan, other, params.intersection_threshold, lane_width);
                b.take_way += weights.take_way * cost_takeway(ij, params.time_margin);
            }
            Label::Offset => b.offset += weights.offset * cost_offset(plan, other, params, lane_width),
        }
    }
    b.total = b.speed + b.lateral + b.give_way + b.take_way + b.offset + b.smoothness;
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(x: f64, spacing: f64) -> TrajectoryPlan {
        TrajectoryPlan {
            origin: Point { x, y: 0.0 },
            points: (1..=10).map(|i| Point { x, y: spacing * i as f64 }).collect(),
        }
    }

    fn other_from(plan: &TrajectoryPlan) -> PredictedTrajectory {
        PredictedTrajectory {
            vehicle: 0,
            points: plan.points.clone(),
        }
    }

    #[test]
    fn speed_cost_examples() {
        assert!(cost_speed(&straight(2.0, 1.6), 16.0, 3.5) < 1e-20);
        assert!((cost_speed(&straight(2.0, 1.5), 16.0, 3.5) - 9.0).abs() < 1e-9);
        assert_eq!(cost_speed(&straight(2.0, 0.0), 0.0, 3.5), 0.0);
    }

    #[test]
    fn lateral_cost_examples() {
        assert_eq!(cost_lateral(&straight(3.0, 1.0), 3.0), 0.0);
        assert!((cost_lateral(&straight(3.2, 1.0), 3.0) - 2.0).abs() < 1e-12);
        let p = straight(2.0, 1.0);
        assert!((cost_lateral(&p, 3.0) - cost_lateral(&p, 2.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn intersections() {
        let a = straight(1.0, 1.5);
        let far = other_from(&straight(1.0 + 50.0 / 3.5, 1.5));
        assert_eq!(intersection_indices(&a, &far, 2.5, 3.5), None);
        assert_eq!(intersection_indices(&a, &other_from(&a), 2.5, 3.5), Some((1, 1)));
    }

    #[test]
    fn label_cost_formulas() {
        assert!((cost_giveway(Some((5, 5)), 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(cost_giveway(Some((11, 1)), 0.5), 0.0);
        assert!((cost_takeway(Some((11, 1)), 0.5) - 1.5).abs() < 1e-12);
        assert_eq!(cost_giveway(None, 0.5), 0.0);
        assert_eq!(cost_takeway(None, 0.5), 0.0);
        let a = straight(1.0, 1.5);
        let far = other_from(&straight(4.0, 1.5));
        assert_eq!(cost_offset(&a, &far, &CostParams::default(), 3.5), 0.0);
        let near = other_from(&straight(1.2, 1.5));
        let c = cost_offset(&a, &near, &CostParams::default(), 3.5);
        assert!((c - (5.0 - 0.2 * 3.5)).abs() < 1e-9);
    }

    #[test]
    fn zero_weights_zero_total_and_linearity() {
        let a = straight(2.3, 1.4);
        let d = Desires {
            speed: 16.0,
            lateral: 3.0,
            labels: vec![Label::GiveWay],
        };
        let o = vec![other_from(&straight(2.0, 1.5))];
        let zero = CostWeights::default().scaled(0.0);
        assert_eq!(total_cost(&a, &d, &o, &zero, &CostParams::default(), 3.5).total, 0.0);
        let one = total_cost(&a, &d, &o, &CostWeights::default(), &CostParams::default(), 3.5).total;
        let two = total_cost(&a, &d, &o, &CostWeights::default().scaled(2.0), &CostParams::default(), 3.5).total;
        assert!(one > 0.0);
        assert!((two - 2.0 * one).abs() < 1e-12 * two);
    }
}
