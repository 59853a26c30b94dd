//! JSON Lines episode logs: one record per step per running agent.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::world::Outcome;
use crate::error::Result;
use crate::options::Desires;
use crate::planner::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub y: f64,
    pub lateral: f64,
    pub speed: f64,
    pub dist_to_merge: f64,
    pub sensed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub agent: usize,
    pub state: StateSummary,
    /// Visited node ids, root first; empty for scripted drivers.
    pub traversal: Vec<String>,
    pub desires: Desires,
    pub plan: Vec<Point>,
    pub fallback: bool,
    pub reward: f64,
    pub outcome: Outcome,
}

pub fn write_record<W: Write>(mut w: W, record: &StepRecord) -> Result<()> {
    serde_json::to_writer(&mut w, record)?;
    w.write_all(b"\n")?;
    Ok(())
}
