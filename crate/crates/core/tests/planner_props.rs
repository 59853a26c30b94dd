use dmerge_core::options::Label;
use dmerge_core::planner::cases::random_case;
use dmerge_core::planner::scene::PlanScene;
use dmerge_core::planner::{
    brute_force_plan, cost_giveway, cost_takeway, feasible, plan, predict_others, total_cost, PlannerConfig, Roadway, TrajectoryPlan,
};
use dmerge_core::seeds;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn selected_plans_satisfy_hard_constraints(seed in any::<u64>()) {
        let cfg = PlannerConfig::default();
        let (state, desires) = random_case(&mut seeds::stream(seed, "case", 0), 6, 5.0);
        let out = plan(&desires, &state, &cfg);
        let preds = predict_others(&state);
        if !out.fallback {
            let f = feasible(&out.plan, &preds, &Roadway::from_state(&state), &cfg.constraints, state.lane_width);
            prop_assert!(f.ok, "{:?}", f.violations);
        }
        let b = &out.breakdown;
        let sum = b.speed + b.lateral + b.give_way + b.take_way + b.offset + b.smoothness;
        prop_assert!((sum - b.total).abs() <= 1e-12 * b.total.abs().max(1.0));
    }

    #[test]
    fn dp_matches_exhaustive_search(seed in any::<u64>()) {
        let cfg = PlannerConfig::default();
        let (state, desires) = random_case(&mut seeds::stream(seed, "case", 1), 4, 5.0);
        let dp = plan(&desires, &state, &cfg);
        match brute_force_plan(&desires, &state, &cfg) {
            Some((_, best)) => {
                prop_assert!(!dp.fallback);
                prop_assert_eq!(dp.breakdown.total, best.total);
            }
            None => prop_assert!(dp.fallback),
        }
    }

    #[test]
    fn giveway_and_takeway_are_mirror_images(i in 1usize..12, j in 1usize..12, m in 0.0f64..2.0) {
        prop_assert_eq!(cost_giveway(Some((i, j)), m), cost_takeway(Some((j, i)), m));
        prop_assert!(cost_giveway(Some((i, j)), m) >= 0.0);
    }
}

#[test]
fn giveway_hand_values() {
    // [0.1 (j - i) + 0.5]_+
    assert!((cost_giveway(Some((5, 5)), 0.5) - 0.5).abs() < 1e-15);
    assert_eq!(cost_giveway(Some((11, 1)), 0.5), 0.0);
    assert!((cost_giveway(Some((3, 5)), 0.5) - 0.7).abs() < 1e-15);
    assert!((cost_takeway(Some((3, 5)), 0.5) - 0.3).abs() < 1e-15);
    assert_eq!(cost_giveway(None, 0.5), 0.0);
    assert_eq!(cost_takeway(None, 0.5), 0.0);
}

#[test]
fn raising_the_giveway_weight_never_raises_the_giveway_term() {
    for k in 0..60u64 {
        let (state, mut desires) = random_case(&mut seeds::stream(k, "mono", 0), 4, 5.0);
        desires.labels.iter_mut().for_each(|l| *l = Label::GiveWay);
        let mut last = f64::INFINITY;
        for w in [0.0, 1.0, 4.0, 16.0, 64.0] {
            let mut cfg = PlannerConfig::default();
            cfg.weights.give_way = w;
            let out = plan(&desires, &state, &cfg);
            if out.fallback {
                break;
            }
            let unit = out.breakdown.give_way / w.max(1e-300);
            if w > 0.0 {
                assert!(unit <= last + 1e-9, "case {k}: weight {w} raised the term {last} -> {unit}");
                last = unit;
            }
        }
    }
}

#[test]
fn bundled_scene_cost_terms_sum_to_total() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/scene.toml")).unwrap();
    let report = PlanScene::from_toml(&text).unwrap().solve();
    let c = &report.cost;
    let sum = c.speed + c.lateral + c.give_way + c.take_way + c.offset + c.smoothness;
    assert!((sum - c.total).abs() < 1e-12);
    assert!(report.feasible);
}

#[test]
fn total_cost_is_what_plan_reports() {
    let cfg = PlannerConfig::default();
    let (state, desires) = random_case(&mut seeds::stream(9, "case", 2), 3, 5.0);
    let out = plan(&desires, &state, &cfg);
    let again = total_cost(
        &TrajectoryPlan {
            origin: out.plan.origin,
            points: out.plan.points.clone(),
        },
        &desires,
        &predict_others(&state),
        &cfg.weights,
        &cfg.costs,
        state.lane_width,
    );
    assert_eq!(again, out.breakdown);
}

#[test]
fn invalid_desires_in_scene_name_the_key() {
    let text = "[ego]\nspeed = 10.0\nlateral = 1.0\ndist_to_merge = 30.0\nown_side = \"left\"\n\n[desires]\nspeed = 99.0\nlateral = 1.0\nlabels = []\n";
    let err = PlanScene::from_toml(text).unwrap_err().to_string();
    assert!(err.contains("desires"), "{err}");
}
