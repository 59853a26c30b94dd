use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Per-vehicle negotiation label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// Arrive at the shared point after the other vehicle.
    #[serde(rename = "g")]
    GiveWay,
    /// Arrive at the shared point before the other vehicle.
    #[serde(rename = "t")]
    TakeWay,
    /// Keep the trajectories apart.
    #[serde(rename = "o")]
    Offset,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::GiveWay, Label::TakeWay, Label::Offset];

    pub fn letter(self) -> char {
        match self {
            Label::GiveWay => 'g',
            Label::TakeWay => 't',
            Label::Offset => 'o',
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::GiveWay => 0,
            Label::TakeWay => 1,
            Label::Offset => 2,
        }
    }
}

/// A point of the intermediate action space: target speed, desired lateral
/// position, and one label per sensed vehicle (same order as the snapshot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Desires {
    pub speed: f64,
    pub lateral: f64,
    pub labels: Vec<Label>,
}

impl Desires {
    /// Checks membership in `[0, v_max] x L x {g,t,o}^n`.
    pub fn validate(&self, v_max: f64, lateral_set: &[f64], n_vehicles: usize) -> Result<()> {
        if !(0.0..=v_max).contains(&self.speed) {
            return Err(contract(format!("desired speed {} outside [0, {v_max}]", self.speed)));
        }
        if !lateral_set.iter().any(|l| (l - self.lateral).abs() < 1e-12) {
            return Err(contract(format!("desired lateral {} not in {lateral_set:?}", self.lateral)));
        }
        if self.labels.len() != n_vehicles {
            return Err(contract(format!(
                "{} labels for {n_vehicles} sensed vehicles",
                self.labels.len()
            )));
        }
        Ok(())
    }
}
