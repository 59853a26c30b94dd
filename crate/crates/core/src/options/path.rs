use serde::{Deserialize, Serialize};

use super::desires::{Desires, Label};
use super::graph::MappingConstants;
use crate::sim::geometry::Side;
use crate::sim::sense::AgnosticState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Prepare,
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralChoice {
    Left,
    Stay,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Commitment {
    Go,
    Stay,
    Push,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedChoice {
    Decelerate,
    Same,
    Accelerate,
}

impl Maneuver {
    pub fn tag(self) -> &'static str {
        match self {
            Maneuver::Prepare => "prepare",
            Maneuver::Merge => "merge",
        }
    }
    pub fn index(self) -> usize {
        self as usize
    }
}

impl LateralChoice {
    pub fn tag(self) -> &'static str {
        match self {
            LateralChoice::Left => "left",
            LateralChoice::Stay => "stay",
            LateralChoice::Right => "right",
        }
    }
    pub fn index(self) -> usize {
        self as usize
    }
    pub fn toward(side: Side) -> Self {
        match side {
            Side::Left => LateralChoice::Left,
            Side::Right => LateralChoice::Right,
        }
    }
}

impl Commitment {
    pub fn tag(self) -> &'static str {
        match self {
            Commitment::Go => "go",
            Commitment::Stay => "stay",
            Commitment::Push => "push",
        }
    }
    pub fn index(self) -> usize {
        self as usize
    }
}

impl SpeedChoice {
    pub fn tag(self) -> &'static str {
        match self {
            SpeedChoice::Decelerate => "decelerate",
            SpeedChoice::Same => "same",
            SpeedChoice::Accelerate => "accelerate",
        }
    }
    pub fn index(self) -> usize {
        self as usize
    }
}

/// The semantic content of one root-to-leaf traversal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionPath {
    pub maneuver: Maneuver,
    pub lateral: LateralChoice,
    /// Absent when the lateral node chose to stay.
    pub commitment: Option<Commitment>,
    pub speed: SpeedChoice,
    pub labels: Vec<Label>,
}

/// Lane the lateral decision is relative to: the nearest lane center when
/// the high-level option was chosen.
pub fn anchor_lane(lateral: f64) -> f64 {
    lateral.round()
}

/// Desired lateral position implied by a high-level option.
pub fn lateral_target(lateral: LateralChoice, commitment: Option<Commitment>, anchor: f64, lanes: usize, m: &MappingConstants) -> f64 {
    let dir = match lateral {
        LateralChoice::Left => -1.0,
        LateralChoice::Right => 1.0,
        LateralChoice::Stay => 0.0,
    };
    let step = match commitment {
        Some(Commitment::Go) => 1.0,
        Some(Commitment::Push) => m.push_offset,
        Some(Commitment::Stay) | None => 0.0,
    };
    (anchor + dir * step).clamp(1.0, lanes as f64)
}

impl OptionPath {
    pub fn to_desires(&self, anchor: f64, state: &AgnosticState, m: &MappingConstants) -> Desires {
        let v = state.ego_speed;
        let speed = match self.speed {
            SpeedChoice::Decelerate => v - m.delta_v,
            SpeedChoice::Same => v,
            SpeedChoice::Accelerate => v + m.delta_v,
        }
        .clamp(0.0, m.v_max);
        Desires {
            speed,
            lateral: lateral_target(self.lateral, self.commitment, anchor, 2 * state.lanes_per_side, m),
            labels: self.labels.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane_two_toward_three() {
        let m = MappingConstants::default();
        let t = |c| lateral_target(LateralChoice::Right, Some(c), 2.0, 4, &m);
        assert_eq!(t(Commitment::Go), 3.0);
        assert_eq!(t(Commitment::Stay), 2.0);
        assert_eq!(t(Commitment::Push), 2.5);
        assert_eq!(lateral_target(LateralChoice::Left, Some(Commitment::Go), 1.0, 4, &m), 1.0);
    }
}
