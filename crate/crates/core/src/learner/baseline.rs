use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Tikhonov term added to every normal-equation solve.
pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    None,
    /// One constant per parameter set, `E[R |g|^2] / E[|g|^2]` from the
    /// previous batch.
    ConstantOptimal,
    /// Linear regression of the credited return on decision features.
    OnlineRegression,
}

/// One sampled trajectory for the per-slot optimal baseline of a single
/// coordinate group: the return and, per decision slot `t`, the group's
/// slice of `grad log pi(a_t | s_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSample {
    pub ret: f64,
    pub grads: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSolve {
    /// `X[tau][t] = E[g_t . g_tau]`.
    pub x: DMatrix<f64>,
    /// `y[tau] = E[R (sum_t g_t) . g_tau]`.
    pub y: DVector<f64>,
    pub b: Vec<f64>,
    /// Set when every gradient was zero; `b` is then 0.
    pub degenerate: bool,
}

/// Solves `(X + lambda I) b = y` by Cholesky factorization.
pub fn solve_regularized(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let n = x.nrows();
    if x.ncols() != n || y.len() != n {
        return Err(contract("normal equations have inconsistent shapes"));
    }
    let a = x + DMatrix::<f64>::identity(n, n) * lambda;
    let chol = a
        .cholesky()
        .ok_or_else(|| contract("regularized second-moment matrix is not positive definite"))?;
    Ok(chol.solve(y))
}

/// Empirical optimal per-slot baseline minimizing the second moment of
/// `sum_t (R - b_t) g_t`.
pub fn solve_optimal_baseline(samples: &[BaselineSample]) -> Result<BaselineSolve> {
    let first = samples.first().ok_or(crate::Error::Empty("baseline samples"))?;
    let t_len = first.grads.len();
    let dim = first.grads.first().map_or(0, |g| g.len());
    if samples.iter().any(|s| s.grads.len() != t_len || s.grads.iter().any(|g| g.len() != dim)) {
        return Err(contract("baseline samples have inconsistent shapes"));
    }
    let mut x = DMatrix::<f64>::zeros(t_len, t_len);
    let mut y = DVector::<f64>::zeros(t_len);
    let mut total = vec![0.0; dim];
    for s in samples {
        total.iter_mut().for_each(|v| *v = 0.0);
        for g in &s.grads {
            for (a, b) in total.iter_mut().zip(g) {
                *a += b;
            }
        }
        for tau in 0..t_len {
            let g_tau = &s.grads[tau];
            y[tau] += s.ret * total.iter().zip(g_tau).map(|(a, b)| a * b).sum::<f64>();
            for t in 0..=tau {
                let v: f64 = s.grads[t].iter().zip(g_tau).map(|(a, b)| a * b).sum();
                x[(tau, t)] += v;
                if t != tau {
                    x[(t, tau)] += v;
                }
            }
        }
    }
    let n = samples.len() as f64;
    x /= n;
    y /= n;
    if x.iter().all(|v| *v == 0.0) {
        return Ok(BaselineSolve {
            b: vec![0.0; t_len],
            x,
            y,
            degenerate: true,
        });
    }
    let b = solve_regularized(&x, &y, RIDGE)?;
    Ok(BaselineSolve {
        b: b.iter().copied().collect(),
        x,
        y,
        degenerate: false,
    })
}

/// Running least squares `min_w sum (w . phi - R)^2 + lambda |w|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineBaseline {
    sxx: DMatrix<f64>,
    sxy: DVector<f64>,
    count: u64,
    weights: DVector<f64>,
}

impl OnlineBaseline {
    pub fn new(dim: usize) -> Self {
        Self {
            sxx: DMatrix::zeros(dim, dim),
            sxy: DVector::zeros(dim),
            count: 0,
            weights: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.sxy.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds one observation; call [`Self::refit`] before predicting.
    pub fn observe(&mut self, phi: &[f64], ret: f64) {
        debug_assert_eq!(phi.len(), self.dim());
        for (i, a) in phi.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            self.sxy[i] += a * ret;
            for (j, b) in phi.iter().enumerate() {
                self.sxx[(i, j)] += a * b;
            }
        }
        self.count += 1;
    }

    pub fn refit(&mut self) -> Result<()> {
        if self.count == 0 {
            self.weights.fill(0.0);
            return Ok(());
        }
        let n = self.count as f64;
        self.weights = solve_regularized(&(&self.sxx / n), &(&self.sxy / n), RIDGE)?;
        Ok(())
    }

    pub fn predict(&self, phi: &[f64]) -> f64 {
        phi.iter().zip(self.weights.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }
}

/// Batch least squares with the same regularization as [`OnlineBaseline`].
pub fn batch_regression(data: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    let dim = data.first().ok_or(crate::Error::Empty("regression data"))?.0.len();
    let mut x = DMatrix::<f64>::zeros(dim, dim);
    let mut y = DVector::<f64>::zeros(dim);
    for (phi, r) in data {
        let p = DVector::from_column_slice(phi);
        x += &p * p.transpose();
        y += p * *r;
    }
    let n = data.len() as f64;
    Ok(solve_regularized(&(x / n), &(y / n), RIDGE)?.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let y = DVector::from_vec(vec![0.3, -2.0, 5.0]);
        let b = solve_regularized(&DMatrix::identity(3, 3), &y, RIDGE).unwrap();
        for (a, e) in b.iter().zip(y.iter()) {
            assert!((a - e).abs() <= 1e-5 * e.abs());
        }
    }

    #[test]
    fn zero_gradients_are_degenerate() {
        let s = vec![
            BaselineSample {
                ret: 1.0,
                grads: vec![vec![0.0, 0.0]; 3],
            };
            4
        ];
        let solve = solve_optimal_baseline(&s).unwrap();
        assert!(solve.degenerate);
        assert_eq!(solve.b, vec![0.0; 3]);
    }

    #[test]
    fn online_starts_at_zero_and_fits_constants() {
        let mut o = OnlineBaseline::new(3);
        o.refit().unwrap();
        assert_eq!(o.predict(&[1.0, 2.0, 3.0]), 0.0);
        for _ in 0..100 {
            o.observe(&[1.0, 0.0, 0.0], 0.7);
        }
        o.refit().unwrap();
        assert!((o.predict(&[1.0, 0.0, 0.0]) - 0.7).abs() < 1e-5);
    }
}
