//! Standalone planning scenes: one ego snapshot, its Desires and the planner
//! settings in, the chosen trajectory and its cost breakdown out.
//!
//! ```toml
//! [ego]
//! speed = 16.0
//! lateral = 2.0
//! dist_to_merge = -20.0
//! own_side = "left"
//! target_side = "right"
//!
//! [[vehicle]]
//! id = 1
//! lateral = 3.0
//! rel_long = 4.0
//! speed = 15.0
//!
//! [desires]
//! speed = 18.5
//! lateral = 3.0
//! labels = ["g"]
//!
//! [planner.weights]
//! give_way = 10.0
//! ```

use serde::{Deserialize, Serialize};

use super::{feasible, plan, CostBreakdown, PlannerConfig, Point, Roadway, Violation};
use crate::error::{Error, Result};
use crate::options::Desires;
use crate::sim::geometry::Side;
use crate::sim::sense::{AgnosticState, SensedVehicle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub speed: f64,
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub accel: f64,
    pub lateral: f64,
    pub dist_to_merge: f64,
    pub own_side: Side,
    #[serde(default)]
    pub target_side: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadSpec {
    pub lanes_per_side: usize,
    pub lane_width: f64,
    pub merge_length: f64,
}

impl Default for RoadSpec {
    fn default() -> Self {
        Self {
            lanes_per_side: 2,
            lane_width: 3.5,
            merge_length: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneVehicle {
    pub id: usize,
    pub lateral: f64,
    pub rel_long: f64,
    pub speed: f64,
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanScene {
    pub ego: EgoSpec,
    #[serde(default)]
    pub road: RoadSpec,
    #[serde(default, rename = "vehicle")]
    pub vehicles: Vec<SceneVehicle>,
    pub desires: Desires,
    #[serde(default)]
    pub planner: PlannerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub fallback: bool,
    pub feasible: bool,
    pub cost: CostBreakdown,
    #[serde(default)]
    pub violations: Vec<Violation>,
    #[serde(rename = "point")]
    pub points: Vec<Point>,
}

fn scene_err(e: toml::de::Error, text: &str) -> Error {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    Error::Config {
        line,
        key: "scene".into(),
        msg: e.message().to_string(),
    }
}

impl PlanScene {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: PlanScene = toml::from_str(text).map_err(|e| scene_err(e, text))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn state(&self) -> AgnosticState {
        AgnosticState {
            ego_speed: self.ego.speed,
            ego_heading: self.ego.heading,
            ego_accel: self.ego.accel,
            ego_lateral: self.ego.lateral,
            dist_to_merge: self.ego.dist_to_merge,
            merge_length: self.road.merge_length,
            lanes_per_side: self.road.lanes_per_side,
            lane_width: self.road.lane_width,
            own_side: self.ego.own_side,
            target_side: self.ego.target_side,
            vehicles: self
                .vehicles
                .iter()
                .map(|v| SensedVehicle {
                    id: v.id,
                    lateral: v.lateral,
                    rel_long: v.rel_long,
                    speed: v.speed,
                    heading: v.heading,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Error::Config {
            line: None,
            key: key.into(),
            msg: msg.into(),
        };
        if self.road.lanes_per_side == 0 || !(self.road.lane_width > 0.0) || !(self.road.merge_length > 0.0) {
            return Err(bad("road", "needs lanes_per_side >= 1 and positive lane_width, merge_length"));
        }
        if !(self.ego.speed >= 0.0) {
            return Err(bad("ego.speed", "must be >= 0"));
        }
        let lanes: Vec<f64> = (2..=4 * self.road.lanes_per_side).map(|h| h as f64 / 2.0).collect();
        self.desires
            .validate(self.planner.v_max, &lanes, self.vehicles.len())
            .map_err(|e| bad("desires", &e.to_string()))?;
        self.planner.lattice.check().map_err(|(k, m)| bad(&format!("planner.lattice.{k}"), &m))?;
        self.planner.weights.check().map_err(|(k, m)| bad(&format!("planner.weights.{k}"), &m))?;
        self.planner.constraints.check().map_err(|(k, m)| bad(&format!("planner.constraints.{k}"), &m))?;
        Ok(())
    }

    pub fn solve(&self) -> PlanReport {
        let state = self.state();
        let out = plan(&self.desires, &state, &self.planner);
        let preds = super::predict_others(&state);
        let check = feasible(&out.plan, &preds, &Roadway::from_state(&state), &self.planner.constraints, state.lane_width);
        PlanReport {
            fallback: out.fallback,
            feasible: check.ok,
            cost: out.breakdown,
            violations: check.violations,
            points: out.plan.points,
        }
    }
}

impl PlanReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Contract(format!("cannot serialize plan report: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE: &str = r#"
[ego]
speed = 16.0
lateral = 2.0
dist_to_merge = -20.0
own_side = "left"
target_side = "right"

[[vehicle]]
id = 1
lateral = 3.0
rel_long = 4.0
speed = 15.0

[desires]
speed = 18.5
lateral = 3.0
labels = ["g"]
"#;

    #[test]
    fn solves_and_reports_terms() {
        let scene = PlanScene::from_toml(SCENE).unwrap();
        let r = scene.solve();
        let c = r.cost;
        assert_eq!(c.speed + c.lateral + c.give_way + c.take_way + c.offset + c.smoothness, c.total);
        assert_eq!(r.points.len(), 10);
        let text = r.to_toml().unwrap();
        let back: PlanReport = toml::from_str(&text).unwrap();
        assert_eq!(back.points.len(), 10);
    }

    #[test]
    fn label_count_mismatch_names_key() {
        let text = SCENE.replace("labels = [\"g\"]", "labels = []");
        match PlanScene::from_toml(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "desires"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_has_line() {
        let text = SCENE.replace("speed = 16.0", "speed = 16.0\nwheels = 4");
        match PlanScene::from_toml(&text) {
            Err(Error::Config { line, .. }) => assert!(line.is_some()),
            other => panic!("{other:?}"),
        }
    }
}
