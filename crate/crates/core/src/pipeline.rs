//! Imitation, self-play and evaluation as driven by a [`RunConfig`].

use serde::{Deserialize, Serialize};

use crate::config::{PolicyKind, RunConfig};
use crate::error::{Error, Result};
use crate::learner::imitation::collect_samples;
use crate::learner::{agreement, cross_entropy, evaluate, imitation_init, self_play_train, EvalPolicy, OutcomeStats, RoundMetrics};
use crate::options::{OptionGraphDef, PolicyParams};
use crate::seeds;

/// Seeds of the training and held-out demo episodes.
pub fn demo_seeds(cfg: &RunConfig) -> (Vec<u64>, Vec<u64>) {
    let n = cfg.imitation.episodes;
    let hold = ((n as f64 * cfg.imitation.holdout).round() as usize).clamp(1, n - 1);
    let all: Vec<u64> = (0..n as u64).map(|i| seeds::stream_seed(cfg.seed, "demo", i)).collect();
    let (train, held) = all.split_at(n - hold);
    (train.to_vec(), held.to_vec())
}

pub fn initial_params(cfg: &RunConfig, graph: &OptionGraphDef) -> Result<PolicyParams> {
    PolicyParams::init(graph, &cfg.train.hidden, &mut seeds::stream(cfg.seed, "init", 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationReport {
    pub train_samples: usize,
    pub heldout_samples: usize,
    pub heldout_agreement_before: f64,
    pub heldout_agreement: f64,
    pub train_agreement: f64,
    pub heldout_cross_entropy_before: f64,
    pub heldout_cross_entropy: f64,
}

pub fn run_imitation(cfg: &RunConfig, graph: &OptionGraphDef) -> Result<(PolicyParams, ImitationReport)> {
    let (train_seeds, held_seeds) = demo_seeds(cfg);
    let train = collect_samples(&cfg.env, graph, &train_seeds, &cfg.imitation)?;
    let held = collect_samples(&cfg.env, graph, &held_seeds, &cfg.imitation)?;
    if train.is_empty() || held.is_empty() {
        return Err(Error::Empty("demonstrations"));
    }
    let init = initial_params(cfg, graph)?;
    let heldout_agreement_before = agreement(graph, &init, &held)?;
    let heldout_cross_entropy_before = cross_entropy(graph, &init, &held)?;
    let params = imitation_init(&train, graph, &init, &cfg.imitation, &mut seeds::stream(cfg.seed, "imitation", 0))?;
    let report = ImitationReport {
        train_samples: train.len(),
        heldout_samples: held.len(),
        heldout_agreement_before,
        heldout_agreement: agreement(graph, &params, &held)?,
        train_agreement: agreement(graph, &params, &train)?,
        heldout_cross_entropy_before,
        heldout_cross_entropy: cross_entropy(graph, &params, &held)?,
    };
    Ok((params, report))
}

pub fn run_training(cfg: &RunConfig, graph: &OptionGraphDef, init: &PolicyParams) -> Result<(PolicyParams, Vec<RoundMetrics>)> {
    self_play_train(&cfg.train, &cfg.env, graph, init, cfg.seed)
}

pub fn run_evaluation(cfg: &RunConfig, graph: &OptionGraphDef, params: Option<&PolicyParams>) -> Result<OutcomeStats> {
    let policy = match (cfg.evaluate.policy, params) {
        (PolicyKind::Expert, _) => EvalPolicy::Expert,
        (PolicyKind::Greedy, Some(p)) => EvalPolicy::Greedy(p),
        (PolicyKind::Sample, Some(p)) => EvalPolicy::Sample(p),
        (_, None) => return Err(Error::Contract("a learned policy needs a checkpoint".into())),
    };
    evaluate(&cfg.env, graph, policy, cfg.seed, cfg.evaluate.episodes)
}
