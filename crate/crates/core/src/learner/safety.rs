use serde::{Deserialize, Serialize};

/// Lower bound on the return variance when an accident with penalty `r`
/// happens with probability `p`: `p r^2 - (p r + (1 - p))^2`.
pub fn safety_bound(p: f64, r: f64) -> f64 {
    let m = p * r + (1.0 - p);
    p * r * r - m * m
}

/// Exact variance of the return `-r` w.p. `p`, `+1` w.p. `1 - p`.
pub fn two_point_variance(p: f64, r: f64) -> f64 {
    p * (1.0 - p) * (1.0 + r) * (1.0 + r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyDiagnostics {
    pub accident_probability: f64,
    pub accident_penalty: f64,
    pub variance_bound: f64,
    pub return_variance: f64,
    pub grad_variance_by_node: Vec<(String, f64)>,
}

impl SafetyDiagnostics {
    /// Diagnostics from observed per-agent episode returns and accident flags.
    pub fn from_returns(returns: &[f64], accidents: usize, penalty: f64, grad_variance_by_node: Vec<(String, f64)>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        let p = accidents as f64 / n;
        Self {
            accident_probability: p,
            accident_penalty: penalty,
            variance_bound: safety_bound(p, penalty),
            return_variance: var,
            grad_variance_by_node,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_accidents_no_bound() {
        assert_eq!(safety_bound(0.0, 100.0), -1.0);
        let d = SafetyDiagnostics::from_returns(&[1.0, 1.0], 0, 100.0, vec![]);
        assert_eq!(d.return_variance, 0.0);
        assert_eq!(d.variance_bound, -1.0);
    }
}
