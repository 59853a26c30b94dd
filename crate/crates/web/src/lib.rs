//! WebAssembly bindings for the static demo page. Every export takes plain
//! numbers or text and returns a JSON string; errors come back as
//! `{"error": "..."}`.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use dmerge_core::learner::rollout::run_recorded;
use dmerge_core::learner::{Driver, EnvConfig};
use dmerge_core::options::{OptionGraphDef, PolicyParams};
use dmerge_core::planner::scene::PlanScene;
use dmerge_core::planner::{predict_others, Point};
use dmerge_core::learner::safety::{safety_bound, two_point_variance};
use dmerge_core::seeds;
use dmerge_core::sim::Outcome;

pub const DEFAULT_SCENE: &str = include_str!("../../../configs/scene.toml");

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
pub struct PlanView {
    pub fallback: bool,
    pub feasible: bool,
    pub total: f64,
    pub terms: Vec<(String, f64)>,
    pub plan: Vec<Point>,
    pub others: Vec<Vec<Point>>,
    pub ego_lateral: f64,
    pub lanes: usize,
}

/// Plans for `scene_toml` with the desired speed and lateral position
/// replaced by the given values.
pub fn plan_view(scene_toml: &str, speed: f64, lateral: f64) -> Result<PlanView, String> {
    let mut scene = PlanScene::from_toml(scene_toml).map_err(|e| e.to_string())?;
    scene.desires.speed = speed;
    scene.desires.lateral = lateral;
    scene.validate().map_err(|e| e.to_string())?;
    let report = scene.solve();
    let c = &report.cost;
    let state = scene.state();
    Ok(PlanView {
        fallback: report.fallback,
        feasible: report.feasible,
        total: c.total,
        terms: vec![
            ("speed".into(), c.speed),
            ("lateral".into(), c.lateral),
            ("give_way".into(), c.give_way),
            ("take_way".into(), c.take_way),
            ("offset".into(), c.offset),
            ("smoothness".into(), c.smoothness),
        ],
        plan: report.points,
        others: predict_others(&state).into_iter().map(|p| p.points).collect(),
        ego_lateral: state.ego_lateral,
        lanes: 2 * state.lanes_per_side,
    })
}

#[derive(Serialize)]
pub struct SafetyCurve {
    pub r: Vec<f64>,
    pub bound: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Lower bound and exact two-point variance on `n` log-spaced penalties.
pub fn safety_curve_values(p: f64, r_min: f64, r_max: f64, n: usize) -> Result<SafetyCurve, String> {
    if !(p > 0.0 && p < 1.0) {
        return Err("p must be in (0, 1)".into());
    }
    if !(r_min > 0.0 && r_max > r_min) || n < 2 {
        return Err("need 0 < r_min < r_max and at least 2 points".into());
    }
    let (a, b) = (r_min.ln(), r_max.ln());
    let r: Vec<f64> = (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect();
    Ok(SafetyCurve {
        bound: r.iter().map(|&r| safety_bound(p, r)).collect(),
        variance: r.iter().map(|&r| two_point_variance(p, r)).collect(),
        r,
    })
}

#[derive(Serialize)]
pub struct Frame {
    pub y: Vec<f64>,
    pub lateral: Vec<f64>,
    pub outcome: Vec<Outcome>,
}

#[derive(Serialize)]
pub struct Episode {
    pub lanes: usize,
    pub merge_start: f64,
    pub merge_end: f64,
    pub targets: Vec<String>,
    pub frames: Vec<Frame>,
    pub merged: usize,
    pub wrong_side: usize,
    pub accidents: usize,
}

/// One episode driven by the scripted expert or by an untrained random
/// policy (`random = true`); either way the planner keeps it collision free.
pub fn episode(seed: u64, random: bool) -> Result<Episode, String> {
    let env = EnvConfig::default();
    let graph = OptionGraphDef::double_merge(env.sensing.max_vehicles, false);
    let n = 2 * env.scene.agents_per_side;
    let params = PolicyParams::init(&graph, &[16], &mut seeds::stream(seed, "init", 0)).map_err(|e| e.to_string())?;
    let driver = if random {
        Driver::Policy {
            params: &params,
            learn: false,
        }
    } else {
        Driver::Expert
    };
    let demo = run_recorded(&env, &graph, &vec![driver; n], seeds::stream_seed(seed, "rollout", 0)).map_err(|e| e.to_string())?;
    let first = demo.worlds.first().ok_or("empty episode")?;
    let g = &first.geometry;
    Ok(Episode {
        lanes: g.lane_count(),
        merge_start: g.merge_start,
        merge_end: g.merge_end(),
        targets: first.vehicles.iter().map(|v| format!("{:?}", v.target).to_lowercase()).collect(),
        frames: demo
            .worlds
            .iter()
            .map(|w| Frame {
                y: w.vehicles.iter().map(|v| v.y).collect(),
                lateral: w.vehicles.iter().map(|v| v.lateral).collect(),
                outcome: w.outcomes.clone(),
            })
            .collect(),
        merged: demo.result.count(Outcome::MergedOk),
        wrong_side: demo.result.count(Outcome::WrongSide),
        accidents: demo.result.count(Outcome::Accident),
    })
}

#[wasm_bindgen]
pub fn default_scene() -> String {
    DEFAULT_SCENE.to_string()
}

#[wasm_bindgen]
pub fn plan(scene_toml: &str, speed: f64, lateral: f64) -> String {
    to_json(plan_view(scene_toml, speed, lateral))
}

#[wasm_bindgen]
pub fn safety_curve(p: f64, r_min: f64, r_max: f64, n: usize) -> String {
    to_json(safety_curve_values(p, r_min, r_max, n))
}

#[wasm_bindgen]
pub fn simulate(seed: u32, random: bool) -> String {
    to_json(episode(seed as u64, random))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_plans() {
        let v = plan_view(DEFAULT_SCENE, 16.0, 2.0).unwrap();
        assert_eq!(v.plan.len(), 10);
        let sum: f64 = v.terms.iter().map(|(_, t)| t).sum();
        assert!((sum - v.total).abs() < 1e-9);
    }

    #[test]
    fn bad_lateral_is_reported() {
        let out = plan(DEFAULT_SCENE, 16.0, 7.3);
        assert!(out.contains("error"));
    }

    #[test]
    fn curve_has_variance_above_bound() {
        let c = safety_curve_values(0.01, 1.0, 1e4, 20).unwrap();
        assert_eq!(c.r.len(), 20);
        assert!(c.variance.iter().zip(&c.bound).all(|(v, b)| v >= b));
    }

    #[test]
    fn expert_episode_frames() {
        let e = episode(3, false).unwrap();
        assert!(e.frames.len() > 1);
        assert_eq!(e.accidents, 0);
        assert_eq!(e.frames[0].y.len(), e.targets.len());
    }
}
