use dmerge_core::net::{forward, log_sum_exp, logprob_grad, sgd_step, Direction, GradVector, NetParams};
use dmerge_core::seeds;
use proptest::prelude::*;
use rand::Rng;

fn net(seed: u64, dims: &[usize]) -> NetParams {
    NetParams::init(dims, &mut seeds::stream(seed, "net-test", 0)).unwrap()
}

fn input(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = seeds::stream(seed, "net-input", 0);
    (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_form_a_distribution(seed in any::<u64>(), i in 1usize..6, h in 1usize..8, o in 1usize..6) {
        let p = net(seed, &[i, h, o]);
        let (probs, tape) = forward(&p, &input(seed, i)).unwrap();
        let s: f64 = probs.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|q| *q > 0.0));
        prop_assert!((log_sum_exp(&tape.log_probs)).abs() < 1e-12);
    }

    #[test]
    fn expected_score_vanishes(seed in any::<u64>(), i in 1usize..6, h in 1usize..8, o in 2usize..6) {
        let p = net(seed, &[i, h, o]);
        let (probs, tape) = forward(&p, &input(seed, i)).unwrap();
        let mut sum = vec![0.0; p.param_count()];
        for (a, q) in probs.iter().enumerate() {
            for (s, g) in sum.iter_mut().zip(&logprob_grad(&p, &tape, a).unwrap().0) {
                *s += q * g;
            }
        }
        prop_assert!(sum.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), a in 0usize..3) {
        let p = net(seed, &[3, 4, 3]);
        let x = input(seed, 3);
        let (_, tape) = forward(&p, &x).unwrap();
        let g = logprob_grad(&p, &tape, a).unwrap();
        let flat = p.to_flat();
        let h = 1e-6;
        for k in 0..flat.len() {
            let lp = |d: f64| {
                let mut y = flat.clone();
                y[k] += d;
                forward(&NetParams::from_flat(p.dims(), &y).unwrap(), &x).unwrap().1.log_probs[a]
            };
            let fd = (lp(h) - lp(-h)) / (2.0 * h);
            let err = (g.0[k] - fd).abs() / g.0[k].abs().max(fd.abs()).max(1e-6);
            prop_assert!(err < 1e-4, "coordinate {k}: {} vs {fd}", g.0[k]);
        }
    }

    #[test]
    fn shifting_logits_by_a_constant_keeps_probabilities(seed in any::<u64>(), c in -50.0f64..50.0) {
        let mut p = net(seed, &[2, 3, 4]);
        let x = input(seed, 2);
        let (before, _) = forward(&p, &x).unwrap();
        let last = p.layer_count() - 1;
        let n = p.biases(last).len();
        let mut flat = p.to_flat();
        let (_, b, _) = p.layer_offsets()[last];
        for k in b..b + n {
            flat[k] += c;
        }
        p = NetParams::from_flat(p.dims(), &flat).unwrap();
        let (after, _) = forward(&p, &x).unwrap();
        for (u, v) in before.iter().zip(&after) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn sgd_moves_along_or_against_the_gradient() {
    let p = net(1, &[2, 3]);
    let g = GradVector(vec![1.0; p.param_count()]);
    let up = sgd_step(&p, &g, 0.5, Direction::Ascent).unwrap().to_flat();
    let down = sgd_step(&p, &g, 0.5, Direction::Descent).unwrap().to_flat();
    for ((a, b), c) in p.to_flat().iter().zip(&up).zip(&down) {
        assert!((b - a - 0.5).abs() < 1e-15);
        assert!((a - c - 0.5).abs() < 1e-15);
    }
}

#[test]
fn mismatched_input_is_rejected() {
    let p = net(2, &[3, 2]);
    assert!(forward(&p, &[1.0, 2.0]).is_err());
}

#[test]
fn log_sum_exp_is_stable() {
    // ln(e^1000 + e^1000) = 1000 + ln 2
    assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
}
