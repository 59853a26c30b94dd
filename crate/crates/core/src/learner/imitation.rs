//! Behavior cloning of the scripted expert, node by node.
//!
//! High-level and speed targets are the expert's own choices. Vehicle labels
//! are inferred from where the ego vehicle ended up relative to each other
//! vehicle: the first time the two share a lateral position within the label
//! window, the vehicle is labelled `t` if the ego vehicle is ahead and `g`
//! otherwise; vehicles never met are labelled `o`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::rollout::{collect_demo, DemoEpisode, EnvConfig};
use crate::error::{Error, Result};
use crate::net::{sgd_step, Direction, GradVector};
use crate::options::{trace_grad, traverse, Chooser, GatingSchedule, Label, OptionGraphDef, OptionPath, PolicyParams, TraverseContext};
use crate::seeds::StreamRng;
use crate::sim::{AgnosticState, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImitationConfig {
    pub episodes: usize,
    /// Keep every `stride`-th agent-step of a demo episode.
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Future steps searched when inferring labels.
    pub label_window: usize,
    /// Lateral distance (lanes) at which two vehicles share a position.
    pub label_lateral: f64,
    /// Fraction of demo episodes held out for evaluation.
    pub holdout: f64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self {
            episodes: 40,
            stride: 2,
            epochs: 6,
            batch_size: 32,
            learning_rate: 0.1,
            label_window: 25,
            label_lateral: 0.75,
            holdout: 0.2,
        }
    }
}

impl ImitationConfig {
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.episodes < 2 {
            return Err(("episodes", "must be >= 2".into()));
        }
        if self.stride == 0 {
            return Err(("stride", "must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(("batch_size", "must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(("learning_rate", "must be finite and >= 0".into()));
        }
        if self.label_window == 0 {
            return Err(("label_window", "must be >= 1".into()));
        }
        if !(self.label_lateral > 0.0) {
            return Err(("label_lateral", "must be > 0".into()));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(("holdout", "must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One supervised example: a snapshot and the full target path.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSample {
    pub state: AgnosticState,
    pub target: OptionPath,
}

/// Label of `other` seen from `agent`, inferred from positions in `future`.
pub fn infer_label(future: &[WorldState], agent: usize, other: usize, lateral_tol: f64) -> Label {
    for w in future {
        let (e, o) = (&w.vehicles[agent], &w.vehicles[other]);
        if (e.lateral - o.lateral).abs() < lateral_tol {
            return if e.y > o.y { Label::TakeWay } else { Label::GiveWay };
        }
    }
    Label::Offset
}

/// Turns a demo episode into supervised samples.
pub fn demo_samples(demo: &DemoEpisode, cfg: &ImitationConfig) -> Vec<DemoSample> {
    demo.steps
        .iter()
        .filter(|d| d.step % cfg.stride == 0)
        .map(|d| {
            let lo = (d.step + 1).min(demo.worlds.len());
            let hi = (d.step + 1 + cfg.label_window).min(demo.worlds.len());
            let future = &demo.worlds[lo..hi];
            let mut target = d.expert.clone();
            target.labels = d
                .state
                .vehicles
                .iter()
                .map(|v| infer_label(future, d.agent, v.id, cfg.label_lateral))
                .collect();
            DemoSample {
                state: d.state.clone(),
                target,
            }
        })
        .collect()
}

/// Training and held-out samples from expert episodes with the given seeds.
pub fn collect_samples(env: &EnvConfig, graph: &OptionGraphDef, seeds: &[u64], cfg: &ImitationConfig) -> Result<Vec<DemoSample>> {
    let mut out = Vec::new();
    for &s in seeds {
        out.extend(demo_samples(&collect_demo(env, graph, s)?, cfg));
    }
    Ok(out)
}

/// Per-node log-likelihood of the target path and whether the greedy choice
/// matched it.
struct Fit {
    log_lik: f64,
    decisions: usize,
    agree: usize,
}

fn fit_one(graph: &OptionGraphDef, params: &PolicyParams, s: &DemoSample, keep: bool) -> Result<(Fit, crate::options::TraversalTrace)> {
    let schedule = GatingSchedule::default();
    let ctx = TraverseContext {
        step: 0,
        previous: None,
        schedule: &schedule,
        keep_tapes: true,
    };
    let (_, mut trace) = traverse(graph, params, &s.state, &mut Chooser::Follow(&s.target), &ctx)?;
    let mut fit = Fit {
        log_lik: 0.0,
        decisions: trace.decisions.len(),
        agree: 0,
    };
    for d in &trace.decisions {
        fit.log_lik += d.log_prob;
        let lp = &d.tape.as_ref().expect("tapes kept").log_probs;
        let mut best = 0;
        for k in 1..lp.len() {
            if lp[k] > lp[best] {
                best = k;
            }
        }
        if best == d.choice {
            fit.agree += 1;
        }
    }
    if !keep {
        trace.drop_tapes();
    }
    Ok((fit, trace))
}

/// Fraction of node decisions where the most probable child is the target.
pub fn agreement(graph: &OptionGraphDef, params: &PolicyParams, samples: &[DemoSample]) -> Result<f64> {
    let (mut agree, mut total) = (0usize, 0usize);
    for s in samples {
        let (f, _) = fit_one(graph, params, s, false)?;
        agree += f.agree;
        total += f.decisions;
    }
    if total == 0 {
        return Err(Error::Empty("decisions"));
    }
    Ok(agree as f64 / total as f64)
}

/// Mean negative log-likelihood per node decision.
pub fn cross_entropy(graph: &OptionGraphDef, params: &PolicyParams, samples: &[DemoSample]) -> Result<f64> {
    let (mut nll, mut total) = (0.0, 0usize);
    for s in samples {
        let (f, _) = fit_one(graph, params, s, false)?;
        nll -= f.log_lik;
        total += f.decisions;
    }
    if total == 0 {
        return Err(Error::Empty("decisions"));
    }
    Ok(nll / total as f64)
}

/// Minibatch gradient ascent on the log-likelihood of the target paths.
pub fn imitation_init(
    samples: &[DemoSample],
    graph: &OptionGraphDef,
    params: &PolicyParams,
    cfg: &ImitationConfig,
    rng: &mut StreamRng,
) -> Result<PolicyParams> {
    if samples.is_empty() {
        return Err(Error::Empty("demonstrations"));
    }
    let mut params = params.clone();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut sum: Vec<GradVector> = params.sets.iter().map(|p| GradVector::zeros(p.param_count())).collect();
            let mut decisions = 0;
            for &k in batch {
                let (f, trace) = fit_one(graph, &params, &samples[k], true)?;
                decisions += f.decisions;
                for (acc, g) in sum.iter_mut().zip(trace_grad(&trace, &params)?) {
                    acc.add_scaled(&g, 1.0);
                }
            }
            let scale = 1.0 / decisions.max(1) as f64;
            for (set, g) in params.sets.iter_mut().zip(sum.iter_mut()) {
                g.scale(scale);
                *set = sgd_step(set, g, cfg.learning_rate, Direction::Ascent)?;
            }
        }
    }
    Ok(params)
}
