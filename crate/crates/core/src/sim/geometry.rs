use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time between simulation steps and between trajectory points (s).
pub const TAU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// -1 for left, +1 for right (lateral coordinates grow to the right).
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// Two approach roads of `lanes_per_side` lanes each, running side by side
/// and separated by a barrier until they join in the merge area.
///
/// Lateral positions are in lane units across the joined road: the left road
/// owns lanes `1..=n`, the right road `n+1..=2n`. Whole numbers are lane
/// centers, halves are lane boundaries; `n + 0.5` is the barrier line.
/// Longitudinal positions are meters; the merge area spans
/// `[merge_start, merge_start + merge_length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadGeometry {
    pub lanes_per_side: usize,
    pub lane_width: f64,
    pub approach_length: f64,
    pub merge_length: f64,
    pub merge_start: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            lanes_per_side: 2,
            lane_width: 3.5,
            approach_length: 300.0,
            merge_length: 100.0,
            merge_start: 0.0,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Scene(msg.to_string()));
        if self.lanes_per_side == 0 {
            return bad("lanes_per_side must be >= 1");
        }
        if !(self.lane_width > 0.0 && self.lane_width.is_finite()) {
            return bad("lane_width must be > 0");
        }
        if !(self.merge_length > 0.0 && self.merge_length.is_finite()) {
            return bad("merge area length must be > 0");
        }
        if !(self.approach_length > 0.0 && self.approach_length.is_finite()) {
            return bad("approach_length must be > 0");
        }
        if !self.merge_start.is_finite() {
            return bad("merge_start must be finite");
        }
        Ok(())
    }

    pub fn lane_count(&self) -> usize {
        2 * self.lanes_per_side
    }

    pub fn barrier(&self) -> f64 {
        self.lanes_per_side as f64 + 0.5
    }

    pub fn merge_end(&self) -> f64 {
        self.merge_start + self.merge_length
    }

    /// Admissible desired lateral positions `{1, 1.5, .., 2n}`.
    pub fn lateral_positions(&self) -> Vec<f64> {
        (2..=2 * self.lane_count()).map(|h| h as f64 / 2.0).collect()
    }

    pub fn side_lanes(&self, side: Side) -> (f64, f64) {
        let n = self.lanes_per_side as f64;
        match side {
            Side::Left => (1.0, n),
            Side::Right => (n + 1.0, 2.0 * n),
        }
    }

    /// Side of the barrier a lateral position lies on; `None` exactly on it.
    pub fn side_of(&self, lateral: f64) -> Option<Side> {
        let b = self.barrier();
        if lateral < b {
            Some(Side::Left)
        } else if lateral > b {
            Some(Side::Right)
        } else {
            None
        }
    }

    /// Allowed range of vehicle-center lateral positions at longitudinal `y`
    /// for a vehicle that entered on `side`.
    pub fn lateral_band(&self, side: Side, y: f64) -> (f64, f64) {
        if y < self.merge_start {
            self.side_lanes(side)
        } else {
            (1.0, self.lane_count() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lateral_set_matches_lane_units() {
        let g = RoadGeometry::default();
        assert_eq!(g.lateral_positions(), vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]);
        assert_eq!(g.barrier(), 2.5);
        assert_eq!(g.side_of(2.0), Some(Side::Left));
        assert_eq!(g.side_of(3.0), Some(Side::Right));
        assert_eq!(g.side_of(2.5), None);
        assert_eq!(g.lateral_band(Side::Right, -10.0), (3.0, 4.0));
        assert_eq!(g.lateral_band(Side::Right, 10.0), (1.0, 4.0));
    }

    #[test]
    fn rejects_empty_merge_area() {
        let g = RoadGeometry {
            merge_length: 0.0,
            ..Default::default()
        };
        assert!(g.validate().is_err());
    }
}
