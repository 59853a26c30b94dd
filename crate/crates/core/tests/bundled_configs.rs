use std::path::PathBuf;

use dmerge_core::config::RunConfig;
use dmerge_core::options::graph::default_graph_toml;
use dmerge_core::options::{MappingConstants, OptionGraphDef};
use dmerge_core::planner::scene::PlanScene;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn default_run_config_is_the_built_in_default() {
    let cfg = RunConfig::load(&configs().join("default.toml")).unwrap();
    let builtin = RunConfig {
        graph: cfg.graph.clone(),
        ..RunConfig::default()
    };
    assert_eq!(cfg, builtin);
    assert_eq!(cfg.graph().unwrap(), OptionGraphDef::double_merge(8, false));
}

#[test]
fn bundled_graph_matches_generator() {
    let text = std::fs::read_to_string(configs().join("option_graph.toml")).unwrap();
    assert_eq!(text, default_graph_toml(8, false, &MappingConstants::default()));
}

#[test]
fn bundled_scene_parses() {
    let text = std::fs::read_to_string(configs().join("scene.toml")).unwrap();
    let scene = PlanScene::from_toml(&text).unwrap();
    scene.validate().unwrap();
}
