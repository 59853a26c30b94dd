use std::io::Write;

use serde::{Deserialize, Serialize};

use super::rollout::EpisodeResult;
use crate::error::Result;
use crate::sim::Outcome;

/// Outcome counts over a set of episodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub episodes: usize,
    pub agents: usize,
    pub merged: usize,
    pub wrong_side: usize,
    pub accidents: usize,
    pub return_sum: f64,
    pub fallbacks: usize,
}

impl OutcomeStats {
    pub fn add(&mut self, r: &EpisodeResult) {
        self.episodes += 1;
        self.agents += r.outcomes.len();
        self.merged += r.count(Outcome::MergedOk);
        self.wrong_side += r.count(Outcome::WrongSide);
        self.accidents += r.count(Outcome::Accident);
        self.return_sum += r.returns.iter().sum::<f64>();
        self.fallbacks += r.fallbacks;
    }

    fn rate(&self, k: usize) -> f64 {
        if self.agents == 0 {
            0.0
        } else {
            k as f64 / self.agents as f64
        }
    }

    pub fn merge_rate(&self) -> f64 {
        self.rate(self.merged)
    }

    pub fn wrong_side_rate(&self) -> f64 {
        self.rate(self.wrong_side)
    }

    pub fn mean_return(&self) -> f64 {
        if self.agents == 0 {
            0.0
        } else {
            self.return_sum / self.agents as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub stats: OutcomeStats,
    /// Mean per-minibatch gradient variance of each parameter set.
    pub grad_variance_by_node: Vec<(String, f64)>,
    /// The round hit a non-finite update and was rolled back.
    pub restored: bool,
}

pub const CSV_HEADER: &str = "round,episodes,merge_rate,wrong_side_rate,accidents,mean_return,grad_variance_by_node";

pub fn write_metrics_csv<W: Write>(mut w: W, rounds: &[RoundMetrics]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for m in rounds {
        let gv: Vec<String> = m.grad_variance_by_node.iter().map(|(n, v)| format!("{n}={v:.6e}")).collect();
        writeln!(
            w,
            "{},{},{:.6},{:.6},{},{:.6},{}",
            m.round,
            m.stats.episodes,
            m.stats.merge_rate(),
            m.stats.wrong_side_rate(),
            m.stats.accidents,
            m.stats.mean_return(),
            gv.join(";")
        )?;
    }
    Ok(())
}
