//! The run configuration shared by every CLI command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{EnvConfig, ImitationConfig, TrainConfig};
use crate::options::OptionGraphDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Expert,
    Greedy,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub episodes: usize,
    pub policy: PolicyKind,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            policy: PolicyKind::Sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Option-graph file. Relative paths resolve against the config file.
    /// Without one the built-in double-merge graph is used.
    pub graph: Option<PathBuf>,
    pub share_lateral_params: bool,
    pub env: EnvConfig,
    pub imitation: ImitationConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("runs/default"),
            graph: None,
            share_lateral_params: false,
            env: EnvConfig::default(),
            imitation: ImitationConfig::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Line of `leaf = ...` inside the `[table]` named by the dotted key, or of
/// the table header when the leaf is not written out.
pub fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let (table, leaf) = match dotted.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", dotted),
    };
    let mut current = String::new();
    let mut header = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().trim_matches(|c| c == '[' || c == ']').to_string();
            if current == table {
                header = Some(n + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == leaf {
                    return Some(n + 1);
                }
            }
        }
    }
    header
}

fn bad(key: String, msg: impl Into<String>) -> Error {
    Error::Config {
        line: None,
        key,
        msg: msg.into(),
    }
}

fn sub<T>(prefix: &str, r: std::result::Result<T, (&'static str, String)>) -> Result<T> {
    r.map_err(|(k, m)| bad(format!("{prefix}.{k}"), m))
}

/// Every invariant of the environment configuration, with the offending key.
pub fn validate_env(env: &EnvConfig, prefix: &str) -> Result<()> {
    env.geometry
        .validate()
        .map_err(|e| bad(format!("{prefix}.geometry"), e.to_string()))?;
    sub(&format!("{prefix}.scene"), env.scene.check())?;
    sub(&format!("{prefix}.reward"), env.reward.check())?;
    sub(&format!("{prefix}.expert"), env.expert.check())?;
    sub(&format!("{prefix}.gating"), env.gating.check())?;
    let s = &env.sensing;
    if !(s.range > 0.0 && s.range.is_finite()) {
        return Err(bad(format!("{prefix}.sensing.range"), "must be > 0"));
    }
    if !(s.assignment_range >= 0.0 && s.assignment_range.is_finite()) {
        return Err(bad(format!("{prefix}.sensing.assignment_range"), "must be >= 0"));
    }
    if s.max_vehicles == 0 {
        return Err(bad(format!("{prefix}.sensing.max_vehicles"), "must be >= 1"));
    }
    let p = &env.planner;
    sub(&format!("{prefix}.planner.weights"), p.weights.check())?;
    sub(&format!("{prefix}.planner.constraints"), p.constraints.check())?;
    sub(&format!("{prefix}.planner.lattice"), p.lattice.check())?;
    let c = &p.costs;
    for (k, v) in [
        ("intersection_threshold", c.intersection_threshold),
        ("time_margin", c.time_margin),
        ("offset_margin", c.offset_margin),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(bad(format!("{prefix}.planner.costs.{k}"), "must be finite and >= 0"));
        }
    }
    if !(p.v_max > 0.0 && p.v_max.is_finite()) {
        return Err(bad(format!("{prefix}.planner.v_max"), "must be > 0"));
    }
    if !(p.fallback_decel > 0.0 && p.fallback_decel.is_finite()) {
        return Err(bad(format!("{prefix}.planner.fallback_decel"), "must be > 0"));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        validate_env(&self.env, "env")?;
        sub("imitation", self.imitation.check())?;
        sub("train", self.train.check())?;
        if self.evaluate.episodes == 0 {
            return Err(bad("evaluate.episodes".into(), "must be >= 1"));
        }
        Ok(())
    }

    /// Parses and validates; parse and validation errors both carry the
    /// line of the offending key when it appears in the text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            let key = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".into());
            Error::Config {
                line,
                key,
                msg: e.message().trim().to_string(),
            }
        })?;
        cfg.validate().map_err(|e| match e {
            Error::Config { line: None, key, msg } => Error::Config {
                line: locate_key(text, &key),
                key,
                msg,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    /// Loads a config file; a relative graph path is made relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(g), Some(dir)) = (&cfg.graph, path.parent()) {
            if g.is_relative() {
                cfg.graph = Some(dir.join(g));
            }
        }
        Ok(cfg)
    }

    /// The option graph, checked against the sensing cap.
    pub fn graph(&self) -> Result<OptionGraphDef> {
        let graph = match &self.graph {
            Some(path) => OptionGraphDef::from_toml(&std::fs::read_to_string(path)?)?,
            None => OptionGraphDef::double_merge(self.env.sensing.max_vehicles, self.share_lateral_params),
        };
        if graph.max_vehicles() < self.env.sensing.max_vehicles {
            return Err(bad(
                "env.sensing.max_vehicles".into(),
                format!("exceeds the {} vehicle slots of the option graph", graph.max_vehicles()),
            ));
        }
        Ok(graph)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Contract(format!("cannot serialize config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let text = RunConfig::default().to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_names_its_line() {
        let err = RunConfig::from_toml("seed = 3\n\n[train]\nrounds = 2\nlearning_rat = 0.1\n").unwrap_err();
        match err {
            Error::Config { line, key, .. } => {
                assert_eq!(line, Some(5));
                assert_eq!(key, "learning_rat");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn invalid_value_names_key_and_line() {
        let err = RunConfig::from_toml("[env.planner.weights]\nspeed = 1.0\ngive_way = -2.0\n").unwrap_err();
        match err {
            Error::Config { line, key, .. } => {
                assert_eq!(key, "env.planner.weights.give_way");
                assert_eq!(line, Some(3));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn locate_falls_back_to_header() {
        let text = "[train]\nrounds = 0\n";
        assert_eq!(locate_key(text, "train.rounds"), Some(2));
        assert_eq!(locate_key(text, "train.hidden"), Some(1));
        assert_eq!(locate_key(text, "imitation.epochs"), None);
    }
}
