use super::baseline::{BaselineMode, OnlineBaseline};
use super::trace::{CreditMode, EpisodeTrace};
use crate::error::{contract, Error, Result};
use crate::net::{accumulate_logprob_grad, GradVector};
use crate::options::{NodeDecision, OptionGraphDef, PolicyParams};

/// Baseline statistics kept by the training coordinator between batches.
/// Predictions only use the decision context, never the action taken.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub mode: BaselineMode,
    n_nodes: usize,
    online: OnlineBaseline,
    /// Per parameter set `sum C |s|^2 / sum |s|^2` over the last batch,
    /// `s` the score in logit space.
    constants: Vec<f64>,
}

impl BaselineState {
    pub fn new(mode: BaselineMode, graph: &OptionGraphDef) -> Self {
        let n_nodes = graph.nodes.len();
        Self {
            mode,
            n_nodes,
            online: OnlineBaseline::new(n_nodes + 4),
            constants: vec![0.0; graph.param_sets.len()],
        }
    }

    /// Node one-hot, step / 250, speed / 25, distance to merge / 300, 1.
    pub fn features(&self, node: usize, step: usize, speed: f64, dist_to_merge: f64) -> Vec<f64> {
        let mut phi = vec![0.0; self.n_nodes + 4];
        if node < self.n_nodes {
            phi[node] = 1.0;
        }
        phi[self.n_nodes] = step as f64 / 250.0;
        phi[self.n_nodes + 1] = speed / 25.0;
        phi[self.n_nodes + 2] = dist_to_merge / 300.0;
        phi[self.n_nodes + 3] = 1.0;
        phi
    }

    fn predict(&self, d: &NodeDecision, step: usize, speed: f64, dist: f64) -> f64 {
        match self.mode {
            BaselineMode::None => 0.0,
            BaselineMode::ConstantOptimal => self.constants[d.param_set],
            BaselineMode::OnlineRegression => self.online.predict(&self.features(d.node, step, speed, dist)),
        }
    }

    pub fn online(&self) -> &OnlineBaseline {
        &self.online
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }
}

/// Feeds one finished trace into the online regressor and refits it.
pub fn update_online_baseline(state: &mut BaselineState, trace: &EpisodeTrace, credit: CreditMode) -> Result<()> {
    for (k, s) in trace.steps.iter().enumerate() {
        for d in &s.traversal.decisions {
            let phi = state.features(d.node, s.step, s.speed, s.dist_to_merge);
            state.online.observe(&phi, trace.credited(k, d.credit_window, credit));
        }
    }
    state.online.refit()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// Mean over traces, one vector per parameter set.
    pub grads: Vec<GradVector>,
    /// Trace of the covariance across traces of each set's contribution.
    pub variance: Vec<f64>,
    pub traces: usize,
}

fn per_trace(
    trace: &EpisodeTrace,
    params: &PolicyParams,
    baseline: &BaselineState,
    credit: CreditMode,
    moments: &mut [(f64, f64)],
) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = params.sets.iter().map(|p| vec![0.0; p.param_count()]).collect();
    if trace.rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite(format!("rewards of agent {}", trace.agent)));
    }
    for (k, s) in trace.steps.iter().enumerate() {
        for d in &s.traversal.decisions {
            let tape = d
                .tape
                .as_ref()
                .ok_or_else(|| contract(format!("decision at node {} has no tape", d.node)))?;
            let set = params.sets.get(d.param_set).ok_or_else(|| contract("unknown parameter set"))?;
            let c = trace.credited(k, d.credit_window, credit);
            let b = baseline.predict(d, s.step, s.speed, s.dist_to_merge);
            accumulate_logprob_grad(set, tape, d.choice, c - b, &mut out[d.param_set])?;
            let sq: f64 = tape
                .log_probs
                .iter()
                .enumerate()
                .map(|(a, l)| (if a == d.choice { 1.0 } else { 0.0 } - l.exp()).powi(2))
                .sum();
            moments[d.param_set].0 += c * sq;
            moments[d.param_set].1 += sq;
        }
    }
    Ok(out)
}

/// Mean over traces of `sum_t (C_t - b_t) grad log pi(a_t | s_t)`, with
/// `C_t` the return credited to each decision.
///
/// For the constant baseline the statistics of this batch are stored for the
/// next one; the online baseline is updated separately with
/// [`update_online_baseline`].
pub fn estimate_gradient(traces: &[EpisodeTrace], params: &PolicyParams, baseline: &mut BaselineState, credit: CreditMode) -> Result<GradientEstimate> {
    if traces.is_empty() {
        return Err(Error::Empty("traces"));
    }
    let n_sets = params.sets.len();
    let mut sum: Vec<Vec<f64>> = params.sets.iter().map(|p| vec![0.0; p.param_count()]).collect();
    let mut sum_sq = vec![0.0; n_sets];
    let mut moments = vec![(0.0, 0.0); n_sets];
    for tr in traces {
        let g = per_trace(tr, params, baseline, credit, &mut moments)?;
        for (i, gi) in g.iter().enumerate() {
            for (s, v) in sum[i].iter_mut().zip(gi) {
                *s += v;
            }
            sum_sq[i] += gi.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let n = traces.len() as f64;
    let mut variance = Vec::with_capacity(n_sets);
    let mut grads = Vec::with_capacity(n_sets);
    for i in 0..n_sets {
        let mean_sq: f64 = sum[i].iter().map(|s| (s / n) * (s / n)).sum();
        let var = if traces.len() > 1 { (sum_sq[i] / n - mean_sq) * n / (n - 1.0) } else { 0.0 };
        variance.push(var.max(0.0));
        let g = GradVector(sum[i].iter().map(|s| s / n).collect());
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter set {}", params.names[i])));
        }
        grads.push(g);
    }
    if baseline.mode == BaselineMode::ConstantOptimal {
        for (i, (num, den)) in moments.iter().enumerate() {
            if *den > 0.0 {
                baseline.constants[i] = num / den;
            }
        }
    }
    Ok(GradientEstimate {
        grads,
        variance,
        traces: traces.len(),
    })
}
