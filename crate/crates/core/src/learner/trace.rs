use serde::{Deserialize, Serialize};

use crate::options::TraversalTrace;
use crate::sim::reward::{episode_return, RewardConfig};
use crate::sim::world::Outcome;

/// One step of one agent: the decision context and the traversal taken.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub speed: f64,
    pub dist_to_merge: f64,
    pub traversal: TraversalTrace,
}

/// The full record of one agent over one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub agent: usize,
    pub steps: Vec<TraceStep>,
    /// `rewards[k]` is the reward received after `steps[k]`.
    pub rewards: Vec<f64>,
    pub ret: f64,
    pub outcome: Outcome,
    /// Discounted prefix sums: `prefix[k] = sum_{s<k} gamma^s r_s`.
    prefix: Vec<f64>,
    gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditMode {
    /// Reward from the decision to the end of the node's credit window.
    Window,
    /// The whole episode return for every decision.
    FullReturn,
}

impl EpisodeTrace {
    pub fn new(agent: usize, steps: Vec<TraceStep>, rewards: Vec<f64>, outcome: Outcome, cfg: &RewardConfig) -> Self {
        let mut prefix = Vec::with_capacity(rewards.len() + 1);
        let mut acc = 0.0;
        let mut discount = 1.0;
        prefix.push(0.0);
        for r in &rewards {
            acc += discount * r;
            discount *= cfg.gamma;
            prefix.push(acc);
        }
        Self {
            agent,
            ret: episode_return(&rewards, cfg),
            steps,
            rewards,
            outcome,
            prefix,
            gamma: cfg.gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `sum_{s=k}^{k+window-1} gamma^(s-k) r_s`, clipped at the episode end.
    pub fn window_return(&self, k: usize, window: Option<usize>) -> f64 {
        let n = self.rewards.len();
        let start = k.min(n);
        let end = window.map_or(n, |w| (k + w).min(n));
        let sum = self.prefix[end] - self.prefix[start];
        if self.gamma == 1.0 {
            sum
        } else {
            sum / self.gamma.powi(start as i32)
        }
    }

    /// Credited return of a decision taken at `steps[k]`.
    pub fn credited(&self, k: usize, window: Option<usize>, mode: CreditMode) -> f64 {
        match mode {
            CreditMode::Window => self.window_return(k, window),
            CreditMode::FullReturn => self.ret,
        }
    }

    pub fn drop_tapes(&mut self) {
        for s in self.steps.iter_mut() {
            s.traversal.drop_tapes();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windowed_returns() {
        let cfg = RewardConfig::default();
        let t = EpisodeTrace::new(0, vec![], vec![1.0, 2.0, 3.0, 4.0], Outcome::MergedOk, &cfg);
        assert_eq!(t.window_return(0, None), 10.0);
        assert_eq!(t.window_return(1, Some(2)), 5.0);
        assert_eq!(t.window_return(3, Some(25)), 4.0);
        assert_eq!(t.credited(3, Some(1), CreditMode::FullReturn), 10.0);
        let g = RewardConfig {
            gamma: 0.5,
            ..Default::default()
        };
        let t = EpisodeTrace::new(0, vec![], vec![1.0, 2.0, 4.0], Outcome::MergedOk, &g);
        assert!((t.window_return(1, None) - (2.0 + 0.5 * 4.0)).abs() < 1e-12);
        assert!((t.ret - (1.0 + 1.0 + 1.0)).abs() < 1e-12);
    }
}
