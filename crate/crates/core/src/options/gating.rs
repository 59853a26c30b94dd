use serde::{Deserialize, Serialize};

use super::graph::NodeKind;
use super::traverse::TraversalTrace;

/// How often each layer of the graph re-decides and how many future steps
/// of reward each decision is credited with (`None`: until episode end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatingSchedule {
    pub high_level_period: usize,
    pub low_level_period: usize,
    pub high_level_credit: Option<usize>,
    pub low_level_credit: Option<usize>,
}

impl Default for GatingSchedule {
    fn default() -> Self {
        Self {
            high_level_period: 10,
            low_level_period: 1,
            high_level_credit: None,
            low_level_credit: Some(25),
        }
    }
}

impl GatingSchedule {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.high_level_period == 0 {
            return Err(("high_level_period", "must be >= 1".into()));
        }
        if self.low_level_period == 0 {
            return Err(("low_level_period", "must be >= 1".into()));
        }
        if self.high_level_credit.is_some_and(|c| c < self.high_level_period) {
            return Err(("high_level_credit", "must be >= high_level_period".into()));
        }
        if self.low_level_credit.is_some_and(|c| c < self.low_level_period) {
            return Err(("low_level_credit", "must be >= low_level_period".into()));
        }
        Ok(())
    }

    pub fn credit_window(&self, kind: NodeKind) -> Option<usize> {
        if kind.is_high_level() {
            self.high_level_credit
        } else {
            self.low_level_credit
        }
    }
}

/// Node kinds that take a fresh decision at `step`. Everything else replays
/// the choice recorded in `previous`. Vehicle labels always re-decide since
/// the set of sensed vehicles changes from step to step.
pub fn gate(schedule: &GatingSchedule, step: usize, previous: Option<&TraversalTrace>) -> Vec<NodeKind> {
    let Some(prev) = previous else {
        return NodeKind::DECIDING.to_vec();
    };
    let mut kinds = Vec::new();
    if step.saturating_sub(prev.high_level_step) >= schedule.high_level_period || step < prev.high_level_step {
        kinds.extend([NodeKind::Root, NodeKind::Lateral, NodeKind::Commitment]);
    }
    if step.saturating_sub(prev.speed_step) >= schedule.low_level_period || step < prev.speed_step {
        kinds.push(NodeKind::Speed);
    }
    kinds.push(NodeKind::VehicleLabel);
    kinds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prev_at(step: usize) -> TraversalTrace {
        TraversalTrace {
            step,
            high_level_step: step,
            speed_step: step,
            ..TraversalTrace::empty()
        }
    }

    #[test]
    fn first_step_decides_everything() {
        assert_eq!(gate(&GatingSchedule::default(), 0, None), NodeKind::DECIDING.to_vec());
    }

    #[test]
    fn high_level_waits_for_period() {
        let s = GatingSchedule::default();
        let k = gate(&s, 7, Some(&prev_at(0)));
        assert!(!k.contains(&NodeKind::Root));
        assert!(k.contains(&NodeKind::Speed) && k.contains(&NodeKind::VehicleLabel));
        assert!(gate(&s, 10, Some(&prev_at(0))).contains(&NodeKind::Lateral));
    }

    #[test]
    fn invalid_schedules() {
        let mut s = GatingSchedule {
            high_level_period: 0,
            ..Default::default()
        };
        assert_eq!(s.check().unwrap_err().0, "high_level_period");
        s.high_level_period = 10;
        s.low_level_credit = Some(0);
        assert_eq!(s.check().unwrap_err().0, "low_level_credit");
    }
}
