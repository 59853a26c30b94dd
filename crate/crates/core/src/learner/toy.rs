//! A small, fully enumerable, deliberately non-Markovian environment.
//!
//! Trajectories are `((s_1, a_1), .., (s_T, a_T))`. The first state comes from
//! a fixed distribution, and the law of `s_t` depends on the whole history
//! `(s_1, a_1, .., s_{t-1}, a_{t-1})`. The return is an arbitrary table over
//! complete trajectories. The policy sees only `s_t` and `t`.

use std::ops::Range;

use rand::Rng;

use super::baseline::{solve_optimal_baseline, BaselineSample};
use crate::error::{contract, Result};
use crate::net::{forward, logprob_grad, NetParams};
use crate::seeds::StreamRng;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEnv {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub initial: Vec<f64>,
    /// `transitions[t - 1][h]` is the law of `s_{t+1}` after history index
    /// `h` of length `t`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Return of every complete trajectory, by history index.
    pub returns: Vec<f64>,
}

/// One enumerated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    /// Probability of the states given the actions (policy excluded).
    pub env_prob: f64,
    pub ret: f64,
}

/// What a baseline may look at for slot `t` (0-based). `action` is exposed
/// only so that invalid baselines can be built on purpose.
#[derive(Debug, Clone, Copy)]
pub struct BaselineInput<'a> {
    pub t: usize,
    pub history: &'a [(usize, usize)],
    pub state: usize,
    pub action: usize,
    pub group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// `R(s) sum_t grad log pi(a_t | s_t)`.
    Return,
    /// `sum_t Q(s_{1:t}) grad log pi(a_t | s_t)`.
    Q,
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

impl ToyEnv {
    /// Random transition tables and returns uniform in `[0, 2]`.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, horizon: usize, rng: &mut R) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || horizon == 0 || horizon > 4 {
            return Err(contract("toy env needs states, actions >= 1 and horizon in 1..=4"));
        }
        let sa = n_states * n_actions;
        if sa.pow(horizon as u32) > 10_000 {
            return Err(contract("toy env trajectory space exceeds 10^4"));
        }
        let initial = random_simplex(n_states, rng);
        let transitions = (1..horizon)
            .map(|t| (0..sa.pow(t as u32)).map(|_| random_simplex(n_states, rng)).collect())
            .collect();
        let returns = (0..sa.pow(horizon as u32)).map(|_| rng.gen_range(0.0..2.0)).collect();
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            initial,
            transitions,
            returns,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.n_states + self.horizon
    }

    pub fn policy_dims(&self, hidden: &[usize]) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend_from_slice(hidden);
        d.push(self.n_actions);
        d
    }

    pub fn features(&self, state: usize, t: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.input_dim()];
        x[state] = 1.0;
        x[self.n_states + t] = 1.0;
        x
    }

    fn history_index(&self, history: &[(usize, usize)]) -> usize {
        history
            .iter()
            .fold(0, |h, &(s, a)| h * self.n_states * self.n_actions + s * self.n_actions + a)
    }

    /// `P[s_{t+1} = s | history]`, with `history` of length `t`.
    pub fn state_prob(&self, history: &[(usize, usize)], s: usize) -> f64 {
        if history.is_empty() {
            self.initial[s]
        } else {
            self.transitions[history.len() - 1][self.history_index(history)][s]
        }
    }

    pub fn ret(&self, trajectory: &[(usize, usize)]) -> f64 {
        self.returns[self.history_index(trajectory)]
    }

    /// Every complete trajectory with its environment probability.
    pub fn trajectories(&self) -> Vec<ToyTrajectory> {
        let mut out = Vec::new();
        let mut hist = Vec::with_capacity(self.horizon);
        self.enumerate(&mut hist, 1.0, &mut out);
        out
    }

    fn enumerate(&self, hist: &mut Vec<(usize, usize)>, prob: f64, out: &mut Vec<ToyTrajectory>) {
        if hist.len() == self.horizon {
            out.push(ToyTrajectory {
                states: hist.iter().map(|p| p.0).collect(),
                actions: hist.iter().map(|p| p.1).collect(),
                env_prob: prob,
                ret: self.ret(hist),
            });
            return;
        }
        for s in 0..self.n_states {
            let p = self.state_prob(hist, s);
            for a in 0..self.n_actions {
                hist.push((s, a));
                self.enumerate(hist, prob * p, out);
                hist.pop();
            }
        }
    }

    /// `pi(. | s, t)` for every state and slot.
    pub fn policy_table(&self, params: &NetParams) -> Result<Vec<Vec<Vec<f64>>>> {
        (0..self.horizon)
            .map(|t| {
                (0..self.n_states)
                    .map(|s| Ok(forward(params, &self.features(s, t))?.0))
                    .collect()
            })
            .collect()
    }

    fn policy_prob(table: &[Vec<Vec<f64>>], tr: &ToyTrajectory) -> f64 {
        tr.states
            .iter()
            .zip(&tr.actions)
            .enumerate()
            .map(|(t, (&s, &a))| table[t][s][a])
            .product()
    }

    pub fn expected_return(&self, params: &NetParams) -> Result<f64> {
        let table = self.policy_table(params)?;
        Ok(self
            .trajectories()
            .iter()
            .map(|tr| tr.env_prob * Self::policy_prob(&table, tr) * tr.ret)
            .sum())
    }

    /// Per-slot `grad log pi(a_t | s_t)` for every `(t, s, a)`.
    fn score_table(&self, params: &NetParams) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
        (0..self.horizon)
            .map(|t| {
                (0..self.n_states)
                    .map(|s| {
                        let (_, tape) = forward(params, &self.features(s, t))?;
                        (0..self.n_actions)
                            .map(|a| Ok(logprob_grad(params, &tape, a)?.0))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// `Q(s_{1:t}) = E[R | s_1, a_1, .., s_t, a_t]`; for a complete
    /// trajectory this is its return.
    pub fn q_value(&self, params: &NetParams, prefix: &[(usize, usize)]) -> Result<f64> {
        if prefix.len() > self.horizon || prefix.iter().any(|&(s, a)| s >= self.n_states || a >= self.n_actions) {
            return Err(contract("prefix is not consistent with the environment"));
        }
        let table = self.policy_table(params)?;
        let mut hist = prefix.to_vec();
        Ok(self.continuation(&table, &mut hist))
    }

    fn continuation(&self, table: &[Vec<Vec<f64>>], hist: &mut Vec<(usize, usize)>) -> f64 {
        if hist.len() == self.horizon {
            return self.ret(hist);
        }
        let t = hist.len();
        let mut total = 0.0;
        for s in 0..self.n_states {
            let ps = self.state_prob(hist, s);
            for a in 0..self.n_actions {
                hist.push((s, a));
                total += ps * table[t][s][a] * self.continuation(table, hist);
                hist.pop();
            }
        }
        total
    }

    /// `V(s_{1:t-1}, s_t) = sum_a pi(a | s_t) Q(s_{1:t-1}, (s_t, a))`.
    pub fn v_value(&self, params: &NetParams, history: &[(usize, usize)], state: usize) -> Result<f64> {
        if history.len() >= self.horizon || state >= self.n_states {
            return Err(contract("prefix is not consistent with the environment"));
        }
        let table = self.policy_table(params)?;
        let mut hist = history.to_vec();
        let t = hist.len();
        let mut v = 0.0;
        for a in 0..self.n_actions {
            hist.push((state, a));
            v += table[t][state][a] * self.continuation(&table, &mut hist);
            hist.pop();
        }
        Ok(v)
    }

    /// `A = Q - V` at a prefix ending in `(s_t, a_t)`.
    pub fn advantage(&self, params: &NetParams, prefix: &[(usize, usize)]) -> Result<f64> {
        let (&(s, _), history) = prefix.split_last().ok_or_else(|| contract("advantage needs a nonempty prefix"))?;
        Ok(self.q_value(params, prefix)? - self.v_value(params, history, s)?)
    }

    /// Exact expectation of an estimator `sum_t (C_t - b_t) grad log pi`
    /// over all trajectories; `C_t` is the return or Q.
    pub fn expected_estimate<F>(&self, params: &NetParams, estimator: Estimator, baseline: F) -> Result<Vec<f64>>
    where
        F: Fn(&BaselineInput<'_>) -> f64,
    {
        let table = self.policy_table(params)?;
        let scores = self.score_table(params)?;
        let groups = coordinate_groups(params);
        let mut out = vec![0.0; params.param_count()];
        for tr in self.trajectories() {
            let w = tr.env_prob * Self::policy_prob(&table, &tr);
            let pairs: Vec<(usize, usize)> = tr.states.iter().copied().zip(tr.actions.iter().copied()).collect();
            for t in 0..self.horizon {
                let (s, a) = pairs[t];
                let c = match estimator {
                    Estimator::Return => tr.ret,
                    Estimator::Q => {
                        let mut hist = pairs[..=t].to_vec();
                        self.continuation(&table, &mut hist)
                    }
                };
                for (g, range) in groups.iter().enumerate() {
                    let b = baseline(&BaselineInput {
                        t,
                        history: &pairs[..t],
                        state: s,
                        action: a,
                        group: g,
                    });
                    for k in range.clone() {
                        out[k] += w * (c - b) * scores[t][s][a][k];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exact `E[sum_t b_t grad log pi(a_t | s_t)]`.
    pub fn baseline_term<F>(&self, params: &NetParams, baseline: F) -> Result<Vec<f64>>
    where
        F: Fn(&BaselineInput<'_>) -> f64,
    {
        let with = self.expected_estimate(params, Estimator::Return, |_| 0.0)?;
        let without = self.expected_estimate(params, Estimator::Return, baseline)?;
        Ok(with.iter().zip(&without).map(|(a, b)| a - b).collect())
    }

    /// Largest component of [`Self::baseline_term`] in absolute value.
    pub fn baseline_zero_check<F>(&self, params: &NetParams, baseline: F) -> Result<f64>
    where
        F: Fn(&BaselineInput<'_>) -> f64,
    {
        Ok(self
            .baseline_term(params, baseline)?
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs())))
    }

    /// Five-point central differences of `E[R]`.
    pub fn finite_difference_gradient(&self, params: &NetParams, h: f64) -> Result<Vec<f64>> {
        let flat = params.to_flat();
        let dims = params.dims().to_vec();
        let mut out = Vec::with_capacity(flat.len());
        for k in 0..flat.len() {
            let at = |d: f64| -> Result<f64> {
                let mut x = flat.clone();
                x[k] += d;
                self.expected_return(&NetParams::from_flat(&dims, &x)?)
            };
            let (p2, p1, m1, m2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
            out.push((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h));
        }
        Ok(out)
    }

    /// Draws one trajectory with the policy; returns it with the per-slot
    /// score vectors.
    pub fn sample(&self, params: &NetParams, rng: &mut StreamRng) -> Result<(ToyTrajectory, Vec<Vec<f64>>)> {
        let mut hist = Vec::with_capacity(self.horizon);
        let mut scores = Vec::with_capacity(self.horizon);
        let mut prob = 1.0;
        for t in 0..self.horizon {
            let weights: Vec<f64> = (0..self.n_states).map(|s| self.state_prob(&hist, s)).collect();
            let s = pick(&weights, rng.gen());
            prob *= weights[s];
            let (pi, tape) = forward(params, &self.features(s, t))?;
            let a = pick(&pi, rng.gen());
            scores.push(logprob_grad(params, &tape, a)?.0);
            hist.push((s, a));
        }
        let ret = self.ret(&hist);
        Ok((
            ToyTrajectory {
                states: hist.iter().map(|p| p.0).collect(),
                actions: hist.iter().map(|p| p.1).collect(),
                env_prob: prob,
                ret,
            },
            scores,
        ))
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

/// Flat index ranges of each layer's weights and each layer's biases.
pub fn coordinate_groups(params: &NetParams) -> Vec<Range<usize>> {
    params
        .layer_offsets()
        .into_iter()
        .flat_map(|(w, b, e)| [w..b, b..e])
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Per-group variance of a sampled gradient estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupVariance {
    /// Per-slot baselines solved on the first batch, one vector per group.
    pub baselines: Vec<Vec<f64>>,
    pub degenerate: Vec<bool>,
    /// Trace of the covariance of the group's estimate on the second batch.
    pub without: Vec<f64>,
    pub with: Vec<f64>,
}

impl GroupVariance {
    pub fn reduced_fraction(&self) -> f64 {
        let n = self.with.iter().zip(&self.without).filter(|(w, o)| w < o).count();
        n as f64 / self.with.len().max(1) as f64
    }
}

fn trace_variance(estimates: &[Vec<f64>]) -> f64 {
    let n = estimates.len() as f64;
    let dim = estimates.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dim];
    for e in estimates {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v / n;
        }
    }
    estimates
        .iter()
        .map(|e| e.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum::<f64>()
        / (n - 1.0).max(1.0)
}

/// Fits the optimal per-slot baseline of every coordinate group on
/// `fit_samples` trajectories, then compares estimator variance with and
/// without it on `eval_samples` fresh trajectories.
pub fn group_variance(env: &ToyEnv, params: &NetParams, fit_samples: usize, eval_samples: usize, rng: &mut StreamRng) -> Result<GroupVariance> {
    let groups = coordinate_groups(params);
    let draw = |n: usize, rng: &mut StreamRng| -> Result<Vec<(f64, Vec<Vec<f64>>)>> {
        (0..n)
            .map(|_| env.sample(params, rng).map(|(tr, sc)| (tr.ret, sc)))
            .collect()
    };
    let fit = draw(fit_samples, rng)?;
    let eval = draw(eval_samples, rng)?;
    let mut out = GroupVariance {
        baselines: Vec::new(),
        degenerate: Vec::new(),
        without: Vec::new(),
        with: Vec::new(),
    };
    for range in &groups {
        let samples: Vec<BaselineSample> = fit
            .iter()
            .map(|(ret, sc)| BaselineSample {
                ret: *ret,
                grads: sc.iter().map(|g| g[range.clone()].to_vec()).collect(),
            })
            .collect();
        let solve = solve_optimal_baseline(&samples)?;
        let estimate = |b: &[f64]| -> Vec<Vec<f64>> {
            eval.iter()
                .map(|(ret, sc)| {
                    let mut e = vec![0.0; range.len()];
                    for (t, g) in sc.iter().enumerate() {
                        for (o, v) in e.iter_mut().zip(&g[range.clone()]) {
                            *o += (ret - b[t]) * v;
                        }
                    }
                    e
                })
                .collect()
        };
        out.without.push(trace_variance(&estimate(&vec![0.0; env.horizon])));
        out.with.push(trace_variance(&estimate(&solve.b)));
        out.baselines.push(solve.b);
        out.degenerate.push(solve.degenerate);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn setup(seed: u64) -> (ToyEnv, NetParams) {
        let mut rng = seeds::stream(seed, "toy", 0);
        let env = ToyEnv::random(2, 2, 3, &mut rng).unwrap();
        let params = NetParams::init(&env.policy_dims(&[4]), &mut rng).unwrap();
        (env, params)
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (env, params) = setup(1);
        let trs = env.trajectories();
        assert_eq!(trs.len(), 64);
        let table = env.policy_table(&params).unwrap();
        let total: f64 = trs.iter().map(|t| t.env_prob * ToyEnv::policy_prob(&table, t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_of_complete_trajectory_is_return() {
        let (env, params) = setup(2);
        let full = [(0, 1), (1, 1), (1, 0)];
        assert_eq!(env.q_value(&params, &full).unwrap(), env.ret(&full));
    }

    #[test]
    fn q_at_empty_prefix_is_expected_return() {
        let (env, params) = setup(3);
        let q = env.q_value(&params, &[]).unwrap();
        assert!((q - env.expected_return(&params).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_baseline_term_is_zero() {
        let (env, params) = setup(4);
        assert_eq!(env.baseline_zero_check(&params, |_| 0.0).unwrap(), 0.0);
    }
}
