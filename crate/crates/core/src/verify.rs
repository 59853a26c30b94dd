//! The oracle suite behind `dmerge verify`: every identity the estimator,
//! network and planner rely on, measured against an exact reference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::learner::safety::{safety_bound, two_point_variance};
use crate::learner::toy::{relative_error, Estimator, ToyEnv};
use crate::net::{forward, logprob_grad, NetParams};
use crate::planner::cases::random_case;
use crate::planner::{brute_force_plan, cost_giveway, feasible, plan, predict_others, PlannerConfig, Roadway};
use crate::seeds;

/// How a measured error is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Pass when `error <= tolerance`.
    AtMost,
    /// Pass when `error > tolerance`.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, error: f64, tolerance: f64, comparison: Comparison, detail: String) -> Self {
        let pass = match comparison {
            Comparison::AtMost => error <= tolerance,
            Comparison::Above => error > tolerance,
        };
        Self {
            name: name.to_string(),
            error,
            tolerance,
            comparison,
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Negates the estimator before the unbiasedness comparison. Only for
    /// checking that the suite catches a broken gradient.
    pub flip_gradient_sign: bool,
    pub planner_cases: usize,
    pub brute_force_cases: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            flip_gradient_sign: false,
            planner_cases: 1000,
            brute_force_cases: 200,
        }
    }
}

/// Relative error floor for gradient comparisons: components smaller than
/// this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-3;
pub const TOY_HIDDEN: [usize; 1] = [4];

pub fn toy_instance(seed: u64, index: u64, n_actions: usize) -> Result<(ToyEnv, NetParams)> {
    let mut rng = seeds::stream(seed, "verify-toy", index);
    let env = ToyEnv::random(2, n_actions, 3, &mut rng)?;
    let params = NetParams::init(&env.policy_dims(&TOY_HIDDEN), &mut rng)?;
    Ok((env, params))
}

pub fn check_unbiasedness(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut trajectories = 0;
    for k in 0..3 {
        let (env, params) = toy_instance(opts.seed, k, 2)?;
        trajectories = trajectories.max(env.trajectories().len());
        let mut est = env.expected_estimate(&params, Estimator::Return, |_| 0.0)?;
        if opts.flip_gradient_sign {
            est.iter_mut().for_each(|v| *v = -*v);
        }
        let fd = env.finite_difference_gradient(&params, FD_STEP)?;
        for (a, b) in est.iter().zip(&fd) {
            worst = worst.max(relative_error(*a, *b, GRAD_FLOOR));
        }
    }
    Ok(CheckResult::new(
        "unbiasedness",
        worst,
        1e-6,
        Comparison::AtMost,
        format!("3 history-dependent toy envs, up to {trajectories} trajectories each"),
    ))
}

pub fn check_baselines(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let (env, params) = toy_instance(opts.seed, 10, 2)?;
    let mut valid = 0.0f64;
    valid = valid.max(env.baseline_zero_check(&params, |_| 0.0)?);
    valid = valid.max(env.baseline_zero_check(&params, |b| (b.t + 1) as f64)?);
    valid = valid.max(env.baseline_zero_check(&params, |b| {
        b.history.iter().map(|(s, a)| (s + 2 * a) as f64).sum::<f64>() - 0.5 * b.group as f64
    })?);
    valid = valid.max(env.baseline_zero_check(&params, |b| 0.3 * b.state as f64 + 0.7 * b.t as f64 + 1.5)?);
    valid = valid.max(env.baseline_zero_check(&params, |b| {
        env.v_value(&params, b.history, b.state).unwrap_or(f64::NAN)
    })?);
    let invalid = env.baseline_zero_check(&params, |b| 1.0 + b.action as f64)?;
    let v_only = env.baseline_zero_check(&params, |b| env.v_value(&params, b.history, b.state).unwrap_or(f64::NAN))?;
    let r_est = env.expected_estimate(&params, Estimator::Return, |_| 0.0)?;
    let q_est = env.expected_estimate(&params, Estimator::Q, |_| 0.0)?;
    let q_gap = r_est.iter().zip(&q_est).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let (single, single_params) = toy_instance(opts.seed, 11, 1)?;
    let mut adv = 0.0f64;
    for tr in single.trajectories() {
        let pairs: Vec<(usize, usize)> = tr.states.iter().copied().zip(tr.actions.iter().copied()).collect();
        for t in 1..=pairs.len() {
            adv = adv.max(single.advantage(&single_params, &pairs[..t])?.abs());
        }
    }
    Ok(vec![
        CheckResult::new(
            "baseline_valid",
            if valid.is_nan() { f64::INFINITY } else { valid },
            1e-10,
            Comparison::AtMost,
            "max |E[sum_t b_t grad log pi]| over 5 baselines that ignore a_t".into(),
        ),
        CheckResult::new(
            "baseline_invalid",
            invalid,
            1e-6,
            Comparison::Above,
            "action-dependent baseline must bias the estimate".into(),
        ),
        CheckResult::new(
            "q_estimator",
            q_gap,
            1e-10,
            Comparison::AtMost,
            "max |E[Q estimator] - E[R estimator]|".into(),
        ),
        CheckResult::new(
            "v_baseline",
            if v_only.is_nan() { f64::INFINITY } else { v_only },
            1e-10,
            Comparison::AtMost,
            "V used as baseline".into(),
        ),
        CheckResult::new(
            "single_action_advantage",
            adv,
            0.0,
            Comparison::AtMost,
            "max |A| over every prefix of a one-action env".into(),
        ),
    ])
}

pub const SAFETY_GRID_P: [f64; 7] = [1e-9, 1e-6, 1e-4, 1e-2, 0.1, 0.5, 0.9];
pub const SAFETY_GRID_R: [f64; 6] = [1.0, 10.0, 1e2, 1e3, 1e4, 1e6];

pub fn check_safety_variance() -> Vec<CheckResult> {
    let closed = (safety_bound(0.01, 1000.0) - 9879.2199).abs();
    let mut slack = f64::INFINITY;
    for p in SAFETY_GRID_P {
        for r in SAFETY_GRID_R {
            slack = slack.min(two_point_variance(p, r) - safety_bound(p, r));
        }
    }
    let mut outside = 0.0f64;
    let mut worst = String::new();
    for p in [1e-2, 1e-4] {
        for r in [1e2, 1e4, 1e6] {
            if r < 1.0 / p {
                continue;
            }
            let ratio = two_point_variance(p, r) / (p * r * r);
            let d = (0.9 - ratio).max(ratio - 1.0).max(0.0);
            if d > outside || worst.is_empty() {
                outside = outside.max(d);
                worst = format!("worst ratio {ratio:.8} at p = {p:e}, r = {r:e}");
            }
        }
    }
    vec![
        CheckResult::new(
            "safety_bound_closed_form",
            closed,
            1e-9,
            Comparison::AtMost,
            "safety_bound(0.01, 1000) against 9879.2199".into(),
        ),
        CheckResult::new(
            "two_point_variance_ge_bound",
            (-slack).max(0.0),
            0.0,
            Comparison::AtMost,
            format!("smallest Var - bound over the grid: {slack:e}"),
        ),
        CheckResult::new(
            "variance_ratio_band",
            outside,
            0.0,
            Comparison::AtMost,
            format!("Var / (p r^2) in [0.9, 1] for r >= 1/p; {worst}"),
        ),
    ]
}

fn random_net<R: Rng + ?Sized>(rng: &mut R) -> Result<(NetParams, Vec<f64>)> {
    let input = rng.gen_range(1..6);
    let hidden = rng.gen_range(1..6);
    let output = rng.gen_range(2..6);
    let params = NetParams::init(&[input, hidden, output], rng)?;
    let x = (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Ok((params, x))
}

pub fn check_network(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut rng = seeds::stream(opts.seed, "verify-net", 0);
    let mut score_sum = 0.0f64;
    for _ in 0..100 {
        let (params, x) = random_net(&mut rng)?;
        let (probs, tape) = forward(&params, &x)?;
        let mut sum = vec![0.0; params.param_count()];
        for (a, p) in probs.iter().enumerate() {
            for (s, g) in sum.iter_mut().zip(&logprob_grad(&params, &tape, a)?.0) {
                *s += p * g;
            }
        }
        score_sum = sum.iter().fold(score_sum, |m, v| m.max(v.abs()));
    }
    let mut grad_err = 0.0f64;
    let h = 1e-6;
    for _ in 0..100 {
        let (params, x) = random_net(&mut rng)?;
        let action = rng.gen_range(0..params.output_dim());
        let (_, tape) = forward(&params, &x)?;
        let g = logprob_grad(&params, &tape, action)?;
        let flat = params.to_flat();
        for k in 0..flat.len() {
            let at = |d: f64| -> Result<f64> {
                let mut y = flat.clone();
                y[k] += d;
                let (_, t) = forward(&NetParams::from_flat(params.dims(), &y)?, &x)?;
                Ok(t.log_probs[action])
            };
            let fd = (at(h)? - at(-h)?) / (2.0 * h);
            grad_err = grad_err.max(relative_error(g.0[k], fd, 1e-6));
        }
    }
    Ok(vec![
        CheckResult::new(
            "score_zero_sum",
            score_sum,
            1e-10,
            Comparison::AtMost,
            "max |sum_a pi(a) grad log pi(a)| over 100 random nets".into(),
        ),
        CheckResult::new(
            "net_gradcheck",
            grad_err,
            1e-4,
            Comparison::AtMost,
            "log-prob gradient vs central differences, 100 random (net, input, action)".into(),
        ),
    ])
}

pub fn check_planner(opts: &VerifyOptions) -> Vec<CheckResult> {
    let cfg = PlannerConfig::default();
    let mut rng = seeds::stream(opts.seed, "verify-planner", 0);
    let (mut violations, mut fallbacks) = (0usize, 0usize);
    for _ in 0..opts.planner_cases {
        let (state, desires) = random_case(&mut rng, 6, 5.0);
        let out = plan(&desires, &state, &cfg);
        if out.fallback {
            fallbacks += 1;
            continue;
        }
        let check = feasible(&out.plan, &predict_others(&state), &Roadway::from_state(&state), &cfg.constraints, state.lane_width);
        violations += check.violations.len();
    }
    let mut rng = seeds::stream(opts.seed, "verify-dp", 0);
    let mut gap = 0.0f64;
    for _ in 0..opts.brute_force_cases {
        let (state, desires) = random_case(&mut rng, 4, 5.0);
        let dp = plan(&desires, &state, &cfg);
        let d = match brute_force_plan(&desires, &state, &cfg) {
            Some((_, b)) if !dp.fallback => (dp.breakdown.total - b.total).abs(),
            None if dp.fallback => 0.0,
            _ => f64::INFINITY,
        };
        gap = gap.max(d);
    }
    let hand = [(5, 5, 0.5), (11, 1, 0.0), (3, 5, 0.7), (5, 3, 0.3)];
    let hand_err = hand
        .iter()
        .fold(0.0f64, |m, &(i, j, want)| m.max((cost_giveway(Some((i, j)), 0.5) - want).abs()));
    vec![
        CheckResult::new(
            "planner_hard_constraints",
            violations as f64,
            0.0,
            Comparison::AtMost,
            format!("{} random cases, {fallbacks} fell back", opts.planner_cases),
        ),
        CheckResult::new(
            "dp_equals_brute_force",
            gap,
            0.0,
            Comparison::AtMost,
            format!("{} random cases, exhaustive lattice enumeration", opts.brute_force_cases),
        ),
        CheckResult::new(
            "giveway_hand_values",
            hand_err,
            1e-12,
            Comparison::AtMost,
            "[tau (j - i) + 0.5]_+ at (5,5), (11,1), (3,5), (5,3)".into(),
        ),
    ]
}

/// Runs every check once, in a fixed order.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = vec![check_unbiasedness(opts)?];
    checks.extend(check_baselines(opts)?);
    checks.extend(check_safety_variance());
    checks.extend(check_network(opts)?);
    checks.extend(check_planner(opts));
    Ok(VerifyReport {
        seed: opts.seed,
        passed: checks.iter().all(|c| c.pass),
        checks,
    })
}
