//! A/B self-play: one half of the agents drives a frozen copy of the policy
//! while the other half learns, and the halves swap every round.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::baseline::BaselineMode;
use super::estimator::{estimate_gradient, update_online_baseline, BaselineState};
use super::metrics::{OutcomeStats, RoundMetrics};
use super::rollout::{run_episode, Driver, EnvConfig};
use super::trace::CreditMode;
use crate::error::{Error, Result};
use crate::net::{sgd_step, Direction};
use crate::options::{OptionGraphDef, PolicyParams};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub rounds: usize,
    pub episodes_per_round: usize,
    /// Episodes per gradient step.
    pub minibatch: usize,
    /// Step size in round 1; round `r` uses `learning_rate / sqrt(r)`.
    pub learning_rate: f64,
    pub baseline: BaselineMode,
    pub credit: CreditMode,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 4,
            episodes_per_round: 200,
            minibatch: 1,
            learning_rate: 0.01,
            baseline: BaselineMode::OnlineRegression,
            credit: CreditMode::Window,
            hidden: vec![16],
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.episodes_per_round == 0 {
            return Err(("episodes_per_round", "must be >= 1".into()));
        }
        if self.minibatch == 0 {
            return Err(("minibatch", "must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(("learning_rate", "must be finite and >= 0".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(("hidden", "layer widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, round: usize) -> f64 {
        self.learning_rate / (round.max(1) as f64).sqrt()
    }
}

/// Agents with even ids form set A, odd ids set B. B learns in odd rounds.
pub fn learns_in_round(agent: usize, round: usize) -> bool {
    (agent % 2 == 1) == (round % 2 == 1)
}

pub fn episode_seed(master: u64, round: usize, episode: usize) -> u64 {
    seeds::stream_seed(master, "training", ((round as u64) << 32) | episode as u64)
}

fn apply_update(params: &PolicyParams, grads: &[crate::net::GradVector], lr: f64) -> Result<PolicyParams> {
    let mut next = params.clone();
    for (set, g) in next.sets.iter_mut().zip(grads) {
        *set = sgd_step(set, g, lr, Direction::Ascent)?;
    }
    if !next.is_finite() {
        return Err(Error::NonFinite("updated parameters".into()));
    }
    Ok(next)
}

fn run_round(
    cfg: &TrainConfig,
    env: &EnvConfig,
    graph: &OptionGraphDef,
    params: &mut PolicyParams,
    baseline: &mut BaselineState,
    master: u64,
    round: usize,
) -> Result<(OutcomeStats, Vec<f64>)> {
    let frozen = params.clone();
    let n = 2 * env.scene.agents_per_side;
    let lr = cfg.learning_rate_at(round);
    let mut stats = OutcomeStats::default();
    let mut var_sum = vec![0.0; params.sets.len()];
    let mut batches = 0usize;
    let mut e = 0;
    while e < cfg.episodes_per_round {
        let end = (e + cfg.minibatch).min(cfg.episodes_per_round);
        let mut traces = Vec::new();
        for k in e..end {
            let drivers: Vec<Driver<'_>> = (0..n)
                .map(|i| {
                    if learns_in_round(i, round) {
                        Driver::Policy { params, learn: true }
                    } else {
                        Driver::Policy {
                            params: &frozen,
                            learn: false,
                        }
                    }
                })
                .collect();
            let r = run_episode(env, graph, &drivers, episode_seed(master, round, k), None, None)?;
            stats.add(&r);
            traces.extend(r.traces.into_iter().flatten());
        }
        let est = estimate_gradient(&traces, params, baseline, cfg.credit)?;
        if baseline.mode == BaselineMode::OnlineRegression {
            for t in &traces {
                update_online_baseline(baseline, t, cfg.credit)?;
            }
        }
        drop(traces);
        *params = apply_update(params, &est.grads, lr)?;
        for (s, v) in var_sum.iter_mut().zip(&est.variance) {
            *s += v;
        }
        batches += 1;
        e = end;
    }
    Ok((stats, var_sum.into_iter().map(|v| v / batches.max(1) as f64).collect()))
}

/// Runs `cfg.rounds` rounds of self-play from `params`. A round that produces
/// a non-finite gradient or parameter is rolled back to its starting point.
pub fn self_play_train(
    cfg: &TrainConfig,
    env: &EnvConfig,
    graph: &OptionGraphDef,
    params: &PolicyParams,
    master: u64,
) -> Result<(PolicyParams, Vec<RoundMetrics>)> {
    let mut current = params.clone();
    let mut baseline = BaselineState::new(cfg.baseline, graph);
    let mut history = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let checkpoint = current.clone();
        let saved_baseline = baseline.clone();
        let (stats, var, restored) = match run_round(cfg, env, graph, &mut current, &mut baseline, master, round) {
            Ok((stats, var)) => (stats, var, false),
            Err(Error::NonFinite(what)) => {
                warn!("round {round}: non-finite {what}, restoring checkpoint");
                current = checkpoint;
                baseline = saved_baseline;
                (OutcomeStats::default(), vec![0.0; current.sets.len()], true)
            }
            Err(e) => return Err(e),
        };
        info!(
            "round {round}: merge {:.3} wrong-side {:.3} accidents {} mean return {:.4}",
            stats.merge_rate(),
            stats.wrong_side_rate(),
            stats.accidents,
            stats.mean_return()
        );
        history.push(RoundMetrics {
            round,
            stats,
            grad_variance_by_node: current.names.iter().cloned().zip(var).collect(),
            restored,
        });
    }
    Ok((current, history))
}

/// Who drives every vehicle during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    Expert,
    Greedy(&'a PolicyParams),
    Sample(&'a PolicyParams),
}

pub fn evaluation_seed(master: u64, episode: usize) -> u64 {
    seeds::stream_seed(master, "evaluation", episode as u64)
}

pub fn evaluate(env: &EnvConfig, graph: &OptionGraphDef, policy: EvalPolicy<'_>, master: u64, episodes: usize) -> Result<OutcomeStats> {
    let n = 2 * env.scene.agents_per_side;
    let driver = match policy {
        EvalPolicy::Expert => Driver::Expert,
        EvalPolicy::Greedy(p) => Driver::Greedy(p),
        EvalPolicy::Sample(p) => Driver::Policy { params: p, learn: false },
    };
    let mut stats = OutcomeStats::default();
    for e in 0..episodes {
        stats.add(&run_episode(env, graph, &vec![driver; n], evaluation_seed(master, e), None, None)?);
    }
    Ok(stats)
}
