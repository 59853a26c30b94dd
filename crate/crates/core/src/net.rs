//! Tiny fully connected policy networks with exact manual backpropagation.
//!
//! Every decision node of the option graph owns one [`NetParams`]: a stack of
//! dense layers with `tanh` hidden activations and a softmax head. Parameters
//! are flattened layer-major, weights before biases, weight matrices
//! row-major (`out x in`). [`GradVector`] uses the same order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    /// `[input, hidden.., output]`.
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Activations recorded by [`forward`]; one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

impl NetParams {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(contract(format!("invalid network dims {dims:?}")));
        }
        let weights = dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        for l in 0..p.weights.len() {
            let bound = 1.0 / (p.dims[l] as f64).sqrt();
            for w in p.weights[l].iter_mut() {
                *w = rng.gen_range(-bound..=bound);
            }
            for b in p.biases[l].iter_mut() {
                *b = rng.gen_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flat offsets `(weights_start, biases_start, end)` of each layer.
    pub fn layer_offsets(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.weights.len());
        let mut off = 0;
        for l in 0..self.weights.len() {
            let w = off;
            let b = w + self.weights[l].len();
            off = b + self.biases[l].len();
            out.push((w, b, off));
        }
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn from_flat(dims: &[usize], flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        if flat.len() != p.param_count() {
            return Err(contract(format!(
                "flat parameter length {} does not match dims {dims:?} ({} expected)",
                flat.len(),
                p.param_count()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        let mut off = 0;
        for l in 0..p.weights.len() {
            let n = p.weights[l].len();
            p.weights[l].copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = p.biases[l].len();
            p.biases[l].copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.biases.iter()).flatten().all(|v| v.is_finite())
    }
}

impl GradVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add_scaled(&mut self, other: &GradVector, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|v| *v *= s);
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn forward(params: &NetParams, input: &[f64]) -> Result<(Vec<f64>, ForwardTape)> {
    if input.len() != params.input_dim() {
        return Err(contract(format!(
            "input length {} does not match network input dim {}",
            input.len(),
            params.input_dim()
        )));
    }
    let layers = params.layer_count();
    let mut pre = Vec::with_capacity(layers);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(layers);
    for l in 0..layers {
        let x: &[f64] = if l == 0 { input } else { &post[l - 1] };
        let (n_in, n_out) = (params.dims[l], params.dims[l + 1]);
        let w = &params.weights[l];
        let mut z = params.biases[l].clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            *zo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        debug_assert_eq!(z.len(), n_out);
        let a = if l + 1 == layers { z.clone() } else { z.iter().map(|v| v.tanh()).collect() };
        pre.push(z);
        post.push(a);
    }
    let logits = &pre[layers - 1];
    let lse = log_sum_exp(logits);
    let log_probs: Vec<f64> = logits.iter().map(|z| z - lse).collect();
    let probs = log_probs.iter().map(|lp| lp.exp()).collect();
    Ok((
        probs,
        ForwardTape {
            input: input.to_vec(),
            pre,
            post,
            log_probs,
        },
    ))
}

impl ForwardTape {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }
}

/// Backpropagates `dlogits` (gradient of some scalar w.r.t. the output
/// logits) and adds `scale` times the parameter gradient into `out`.
pub fn accumulate_backward(params: &NetParams, tape: &ForwardTape, dlogits: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
    if out.len() != params.param_count() {
        return Err(contract("gradient buffer length does not match parameters"));
    }
    if tape.pre.len() != params.layer_count() || dlogits.len() != params.output_dim() {
        return Err(contract("tape does not belong to these parameters"));
    }
    let offsets = params.layer_offsets();
    let mut delta: Vec<f64> = dlogits.iter().map(|d| d * scale).collect();
    for l in (0..params.layer_count()).rev() {
        let x: &[f64] = if l == 0 { &tape.input } else { &tape.post[l - 1] };
        let n_in = params.dims[l];
        let (w_off, b_off, _) = offsets[l];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = &mut out[w_off + o * n_in..w_off + (o + 1) * n_in];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
            out[b_off + o] += d;
        }
        if l > 0 {
            let w = &params.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            for (p, a) in prev.iter_mut().zip(&tape.post[l - 1]) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
    Ok(())
}

/// d log pi(action) / d logits = onehot(action) - pi.
pub fn logprob_dlogits(tape: &ForwardTape, action: usize) -> Vec<f64> {
    tape.log_probs
        .iter()
        .enumerate()
        .map(|(a, lp)| if a == action { 1.0 } else { 0.0 } - lp.exp())
        .collect()
}

/// Exact gradient of `log pi(action | input)` w.r.t. all parameters.
pub fn logprob_grad(params: &NetParams, tape: &ForwardTape, action: usize) -> Result<GradVector> {
    let mut g = GradVector::zeros(params.param_count());
    accumulate_logprob_grad(params, tape, action, 1.0, &mut g.0)?;
    Ok(g)
}

pub fn accumulate_logprob_grad(params: &NetParams, tape: &ForwardTape, action: usize, scale: f64, out: &mut [f64]) -> Result<()> {
    if action >= params.output_dim() {
        return Err(contract(format!(
            "action {action} out of range for {} outputs",
            params.output_dim()
        )));
    }
    let d = logprob_dlogits(tape, action);
    accumulate_backward(params, tape, &d, scale, out)
}

pub fn sgd_step(params: &NetParams, grad: &GradVector, learning_rate: f64, direction: Direction) -> Result<NetParams> {
    if grad.len() != params.param_count() {
        return Err(contract(format!(
            "gradient length {} does not match parameter count {}",
            grad.len(),
            params.param_count()
        )));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(contract(format!("learning rate must be finite and >= 0, got {learning_rate}")));
    }
    let sign = match direction {
        Direction::Ascent => 1.0,
        Direction::Descent => -1.0,
    };
    let mut flat = params.to_flat();
    for (p, g) in flat.iter_mut().zip(&grad.0) {
        *p += sign * learning_rate * g;
    }
    NetParams::from_flat(&params.dims, &flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(seed: u64, dims: &[usize]) -> NetParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NetParams::init(dims, &mut rng).unwrap()
    }

    #[test]
    fn zero_net_is_uniform() {
        let p = NetParams::zeros(&[4, 8, 8, 8, 5]).unwrap();
        let (probs, _) = forward(&p, &[0.3, -1.0, 2.0, 0.5]).unwrap();
        for q in probs {
            assert!((q - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn input_dimension_mismatch_is_rejected() {
        let p = random_net(1, &[3, 4, 2]);
        assert!(matches!(forward(&p, &[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn single_output_has_zero_gradient() {
        let p = random_net(2, &[3, 4, 4, 4, 1]);
        let (probs, tape) = forward(&p, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(probs, vec![1.0]);
        let g = logprob_grad(&p, &tape, 0).unwrap();
        assert!(g.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_action_is_rejected() {
        let p = random_net(3, &[2, 3, 3]);
        let (_, tape) = forward(&p, &[1.0, 0.0]).unwrap();
        assert!(logprob_grad(&p, &tape, 3).is_err());
    }

    #[test]
    fn flat_roundtrip_and_offsets() {
        let p = random_net(4, &[3, 5, 2]);
        let flat = p.to_flat();
        assert_eq!(flat.len(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(NetParams::from_flat(p.dims(), &flat).unwrap(), p);
        assert_eq!(p.layer_offsets(), vec![(0, 15, 20), (20, 30, 32)]);
        // row-major: weight (out=1, in=2) of layer 0 sits at 1*3+2
        assert_eq!(flat[5], p.weights(0)[5]);
    }

    #[test]
    fn sgd_edge_cases() {
        let p = random_net(5, &[2, 3, 2]);
        let zero = GradVector::zeros(p.param_count());
        assert_eq!(sgd_step(&p, &zero, 0.1, Direction::Ascent).unwrap(), p);
        let mut g = GradVector::zeros(p.param_count());
        g.0.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
        assert_eq!(sgd_step(&p, &g, 0.0, Direction::Descent).unwrap(), p);
        g.0[0] = f64::NAN;
        assert!(matches!(sgd_step(&p, &g, 0.1, Direction::Ascent), Err(Error::NonFinite(_))));
        assert!(sgd_step(&p, &GradVector::zeros(3), 0.1, Direction::Ascent).is_err());
    }

    #[test]
    fn ascent_increases_linear_objective() {
        // f(theta) = theta . c has gradient c
        let p = random_net(6, &[2, 3, 2]);
        let c: Vec<f64> = (0..p.param_count()).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
        let f = |q: &NetParams| q.to_flat().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let up = sgd_step(&p, &GradVector(c.clone()), 0.05, Direction::Ascent).unwrap();
        let down = sgd_step(&p, &GradVector(c.clone()), 0.05, Direction::Descent).unwrap();
        assert!(f(&up) > f(&p));
        assert!(f(&down) < f(&p));
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
