use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immediate-reward shaping for the merge task.
///
/// Terminal rewards: `+merged_reward` for leaving the merge area on the
/// assigned side, `-wrong_side_penalty` otherwise, `-accident_penalty` for a
/// collision. Every running step also pays a comfort penalty of at most
/// `smoothness_weight / shaping_steps`, so any accident-free episode of at
/// most `shaping_steps` steps has a total in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub accident_penalty: f64,
    pub merged_reward: f64,
    pub wrong_side_penalty: f64,
    pub smoothness_weight: f64,
    pub gamma: f64,
    /// Longitudinal jerk normalizer (m/s^2 change per step).
    pub accel_change_scale: f64,
    /// Lateral-rate change normalizer (lanes/s change per step).
    pub lateral_change_scale: f64,
    pub shaping_steps: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            accident_penalty: 100.0,
            merged_reward: 1.0,
            wrong_side_penalty: 0.5,
            smoothness_weight: 0.2,
            gamma: 1.0,
            accel_change_scale: 6.0,
            lateral_change_scale: 2.0,
            shaping_steps: 400,
        }
    }
}

impl RewardConfig {
    /// Returns the offending field name and reason on failure.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.accident_penalty > 0.0 && self.accident_penalty.is_finite()) {
            return Err(("accident_penalty", "must be > 0".into()));
        }
        if !(self.merged_reward > 0.0 && self.merged_reward <= 1.0) {
            return Err(("merged_reward", "must be in (0, 1]".into()));
        }
        if !(self.wrong_side_penalty >= 0.0 && self.wrong_side_penalty <= 1.0) {
            return Err(("wrong_side_penalty", "must be in [0, 1]".into()));
        }
        if !(self.smoothness_weight >= 0.0 && self.smoothness_weight + self.wrong_side_penalty <= 1.0) {
            return Err((
                "smoothness_weight",
                "must be >= 0 and keep smoothness_weight + wrong_side_penalty <= 1".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(("gamma", "must be in (0, 1]".into()));
        }
        if !(self.accel_change_scale > 0.0) {
            return Err(("accel_change_scale", "must be > 0".into()));
        }
        if !(self.lateral_change_scale > 0.0) {
            return Err(("lateral_change_scale", "must be > 0".into()));
        }
        if self.shaping_steps == 0 {
            return Err(("shaping_steps", "must be >= 1".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(key, msg)| Error::Config {
            line: None,
            key: format!("reward.{key}"),
            msg,
        })
    }

    /// Per-step comfort penalty (<= 0) for a change in longitudinal
    /// acceleration and lateral rate between consecutive steps.
    pub fn comfort_penalty(&self, accel_change: f64, lateral_rate_change: f64) -> f64 {
        let a = accel_change / self.accel_change_scale;
        let l = lateral_rate_change / self.lateral_change_scale;
        -self.smoothness_weight * (a * a + l * l).min(1.0) / self.shaping_steps as f64
    }
}

/// `R = sum_t gamma^t r_t`, with the first reward undiscounted.
pub fn episode_return(rewards: &[f64], config: &RewardConfig) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= config.gamma;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undiscounted_sum() {
        let cfg = RewardConfig {
            gamma: 1.0,
            ..Default::default()
        };
        assert_eq!(episode_return(&[], &cfg), 0.0);
        assert_eq!(episode_return(&[0.0; 10], &cfg), 0.0);
        assert!((episode_return(&[0.1, 0.2, 0.3], &cfg) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn discounted_accident_matches_direct_power_sum() {
        let cfg = RewardConfig {
            gamma: 0.99,
            accident_penalty: 10.0,
            ..Default::default()
        };
        let mut rewards = vec![-0.0005; 50];
        rewards.push(-10.0);
        // independent recomputation with powi
        let expect: f64 = rewards.iter().enumerate().map(|(t, r)| 0.99f64.powi(t as i32) * r).sum();
        assert!((episode_return(&rewards, &cfg) - expect).abs() < 1e-12);
    }

    #[test]
    fn validation_names_field() {
        let cfg = RewardConfig {
            gamma: 1.5,
            ..Default::default()
        };
        assert_eq!(cfg.check().unwrap_err().0, "gamma");
        let cfg = RewardConfig {
            smoothness_weight: 0.9,
            ..Default::default()
        };
        assert_eq!(cfg.check().unwrap_err().0, "smoothness_weight");
    }

    #[test]
    fn comfort_penalty_is_bounded() {
        let cfg = RewardConfig::default();
        let worst = cfg.comfort_penalty(1e9, 1e9);
        assert!((worst + cfg.smoothness_weight / cfg.shaping_steps as f64).abs() < 1e-15);
        assert_eq!(cfg.comfort_penalty(0.0, 0.0), 0.0);
    }
}
