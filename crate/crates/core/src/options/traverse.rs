use rand::Rng;

use super::desires::{Desires, Label};
use super::features::{chain_features, chain_prefix, high_features, set_option, ActiveOption};
use super::gating::{gate, GatingSchedule};
use super::graph::{NodeKind, OptionGraphDef};
use super::path::{anchor_lane, lateral_target, Commitment, LateralChoice, Maneuver, OptionPath, SpeedChoice};
use super::policy::PolicyParams;
use crate::error::{contract, Error, Result};
use crate::net::{accumulate_logprob_grad, forward, ForwardTape, GradVector};
use crate::seeds::StreamRng;
use crate::sim::sense::AgnosticState;

/// One sampled (or forced) child choice at a node with several children.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecision {
    pub node: usize,
    pub param_set: usize,
    pub kind: NodeKind,
    pub choice: usize,
    pub log_prob: f64,
    pub tape: Option<ForwardTape>,
    /// Future steps of reward credited to this decision; `None` = to the end.
    pub credit_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalTrace {
    pub step: usize,
    /// Visited node ids from the root.
    pub path: Vec<usize>,
    /// Fresh decisions only; replayed high-level choices are not repeated.
    pub decisions: Vec<NodeDecision>,
    /// Lane center the lateral option is relative to.
    pub anchor: f64,
    pub n_vehicles: usize,
    /// Step of the last high-level and speed decisions.
    pub high_level_step: usize,
    pub speed_step: usize,
}

impl TraversalTrace {
    pub fn empty() -> Self {
        Self {
            step: 0,
            path: Vec::new(),
            decisions: Vec::new(),
            anchor: 0.0,
            n_vehicles: 0,
            high_level_step: 0,
            speed_step: 0,
        }
    }

    pub fn log_prob(&self) -> f64 {
        self.decisions.iter().map(|d| d.log_prob).sum()
    }

    pub fn drop_tapes(&mut self) {
        for d in self.decisions.iter_mut() {
            d.tape = None;
        }
    }

    fn successor(&self, node: usize) -> Option<usize> {
        self.path.windows(2).find(|w| w[0] == node).map(|w| w[1])
    }

    /// Semantic content of the path, labels padded with offset up to
    /// `n_vehicles`.
    pub fn option_path(&self, graph: &OptionGraphDef) -> Result<OptionPath> {
        let mut active = ActiveOption::default();
        let mut labels = Vec::new();
        for w in self.path.windows(2) {
            apply(graph, w[0], w[1], &mut active, &mut labels)?;
        }
        labels.resize(self.n_vehicles.max(labels.len()), Label::Offset);
        Ok(finish(&active, labels))
    }

    pub fn active_option(&self, graph: &OptionGraphDef) -> ActiveOption {
        let mut active = ActiveOption::default();
        let mut labels = Vec::new();
        for w in self.path.windows(2) {
            let _ = apply(graph, w[0], w[1], &mut active, &mut labels);
        }
        active
    }
}

/// How children are picked at deciding nodes.
pub enum Chooser<'a> {
    /// Sample from the node policy.
    Sample(&'a mut StreamRng),
    /// Most probable child (first on ties).
    Greedy,
    /// Follow a given semantic path (teacher forcing); log-probabilities are
    /// still those of the policy.
    Follow(&'a OptionPath),
}

pub struct TraverseContext<'a> {
    pub step: usize,
    pub previous: Option<&'a TraversalTrace>,
    pub schedule: &'a GatingSchedule,
    /// Keep forward tapes for gradient computation.
    pub keep_tapes: bool,
}

fn apply(graph: &OptionGraphDef, from: usize, to: usize, active: &mut ActiveOption, labels: &mut Vec<Label>) -> Result<()> {
    let node = &graph.nodes[from];
    if !node.children.contains(&to) {
        return Err(contract(format!(
            "`{}` is not a child of `{}`",
            graph.nodes.get(to).map_or("?", |n| n.id.as_str()),
            node.id
        )));
    }
    let tag = graph.nodes[to].tag.as_str();
    let bad = || contract(format!("tag `{tag}` under {} node `{}`", node.kind.name(), node.id));
    match node.kind {
        NodeKind::Root => {
            active.maneuver = Some(match tag {
                "prepare" => Maneuver::Prepare,
                "merge" => Maneuver::Merge,
                _ => return Err(bad()),
            })
        }
        NodeKind::Lateral => {
            active.lateral = Some(match tag {
                "left" => LateralChoice::Left,
                "stay" => LateralChoice::Stay,
                "right" => LateralChoice::Right,
                _ => return Err(bad()),
            })
        }
        NodeKind::Commitment => {
            active.commitment = Some(match tag {
                "go" => Commitment::Go,
                "stay" => Commitment::Stay,
                "push" => Commitment::Push,
                _ => return Err(bad()),
            })
        }
        NodeKind::Speed => {
            active.speed = Some(match tag {
                "decelerate" => SpeedChoice::Decelerate,
                "same" => SpeedChoice::Same,
                "accelerate" => SpeedChoice::Accelerate,
                _ => return Err(bad()),
            })
        }
        NodeKind::VehicleLabel => labels.push(match tag {
            "g" => Label::GiveWay,
            "t" => Label::TakeWay,
            "o" => Label::Offset,
            _ => return Err(bad()),
        }),
        NodeKind::Pass => {}
    }
    Ok(())
}

fn finish(active: &ActiveOption, labels: Vec<Label>) -> OptionPath {
    let lateral = active.lateral.unwrap_or(LateralChoice::Stay);
    OptionPath {
        maneuver: active.maneuver.unwrap_or(Maneuver::Prepare),
        lateral,
        commitment: if lateral == LateralChoice::Stay { None } else { active.commitment },
        speed: active.speed.unwrap_or(SpeedChoice::Same),
        labels,
    }
}

fn forced_tag(path: &OptionPath, kind: NodeKind, slot: usize) -> &'static str {
    match kind {
        NodeKind::Root => path.maneuver.tag(),
        NodeKind::Lateral => path.lateral.tag(),
        NodeKind::Commitment => path.commitment.unwrap_or(Commitment::Stay).tag(),
        NodeKind::Speed => path.speed.tag(),
        NodeKind::VehicleLabel => match path.labels.get(slot.wrapping_sub(1)).copied().unwrap_or(Label::Offset) {
            Label::GiveWay => "g",
            Label::TakeWay => "t",
            Label::Offset => "o",
        },
        NodeKind::Pass => "",
    }
}

/// Walks the graph from the root, deciding at every gated node and replaying
/// the previous choice at the others, and maps the result to Desires.
///
/// The chain stops after the label of the last sensed vehicle (or at the end
/// of the chain, in which case remaining vehicles are labelled offset).
pub fn traverse(
    graph: &OptionGraphDef,
    params: &PolicyParams,
    state: &AgnosticState,
    chooser: &mut Chooser<'_>,
    ctx: &TraverseContext<'_>,
) -> Result<(Desires, TraversalTrace)> {
    if params.sets.len() != graph.param_sets.len() {
        return Err(contract("parameter sets do not match the graph"));
    }
    let deciding = gate(ctx.schedule, ctx.step, ctx.previous);
    let decides_high = deciding.contains(&NodeKind::Root);
    let decides_speed = deciding.contains(&NodeKind::Speed);
    let v_max = graph.mapping.v_max;
    let n = state.vehicles.len().min(graph.max_vehicles());
    let anchor = match ctx.previous {
        Some(p) if !decides_high => p.anchor,
        _ => anchor_lane(state.ego_lateral),
    };
    let prior_option = ctx.previous.map(|p| p.active_option(graph)).unwrap_or_default();

    let mut high: Option<Vec<f64>> = None;
    let mut chain: Option<(Vec<f64>, f64)> = None;
    let mut active = ActiveOption::default();
    let mut labels: Vec<Label> = Vec::new();
    let mut path = vec![graph.root];
    let mut decisions = Vec::new();
    let mut cur = graph.root;

    loop {
        let node = &graph.nodes[cur];
        if node.children.is_empty() {
            break;
        }
        let replayed = if node.children.len() > 1 && !deciding.contains(&node.kind) {
            ctx.previous.and_then(|p| p.successor(cur))
        } else {
            None
        };
        let next = if node.children.len() == 1 {
            node.children[0]
        } else if let Some(next) = replayed {
            next
        } else {
            let set = node.param_set.ok_or_else(|| contract(format!("deciding node `{}` has no parameter set", node.id)))?;
            let input: Vec<f64> = if node.kind == NodeKind::VehicleLabel {
                let slot = node.slot.unwrap_or(1);
                let (prefix, desired) = chain.get_or_insert_with(|| {
                    let opt = finish(&active, Vec::new());
                    let desired = lateral_target(opt.lateral, opt.commitment, anchor, 2 * state.lanes_per_side, &graph.mapping);
                    (chain_prefix(state, &active, desired, v_max), desired)
                });
                let vehicle = state
                    .vehicles
                    .get(slot - 1)
                    .ok_or_else(|| contract(format!("no sensed vehicle for slot {slot}")))?;
                chain_features(prefix, state, vehicle, *desired, labels.last().copied());
                prefix.clone()
            } else {
                let f = high.get_or_insert_with(|| high_features(state, &prior_option, v_max));
                set_option(f, if node.kind == NodeKind::Root { &prior_option } else { &active });
                f.clone()
            };
            let (probs, tape) = forward(&params.sets[set], &input)?;
            let choice = match chooser {
                Chooser::Sample(rng) => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = probs.len() - 1;
                    for (k, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    pick
                }
                Chooser::Greedy => {
                    let mut best = 0;
                    for k in 1..probs.len() {
                        if probs[k] > probs[best] {
                            best = k;
                        }
                    }
                    best
                }
                Chooser::Follow(p) => {
                    let tag = forced_tag(p, node.kind, node.slot.unwrap_or(0));
                    node.children
                        .iter()
                        .position(|&c| graph.nodes[c].tag == tag)
                        .ok_or_else(|| contract(format!("node `{}` has no child tagged `{tag}`", node.id)))?
                }
            };
            decisions.push(NodeDecision {
                node: cur,
                param_set: set,
                kind: node.kind,
                choice,
                log_prob: tape.log_probs[choice],
                tape: ctx.keep_tapes.then_some(tape),
                credit_window: ctx.schedule.credit_window(node.kind),
            });
            node.children[choice]
        };
        let target = &graph.nodes[next];
        if target.kind == NodeKind::VehicleLabel && target.slot.unwrap_or(0) > n {
            break;
        }
        apply(graph, cur, next, &mut active, &mut labels)?;
        path.push(next);
        cur = next;
    }

    labels.resize(state.vehicles.len(), Label::Offset);
    let option = finish(&active, labels);
    let desires = option.to_desires(anchor, state, &graph.mapping);
    let trace = TraversalTrace {
        step: ctx.step,
        path,
        decisions,
        anchor,
        n_vehicles: state.vehicles.len(),
        high_level_step: match ctx.previous {
            Some(p) if !decides_high => p.high_level_step,
            _ => ctx.step,
        },
        speed_step: match ctx.previous {
            Some(p) if !decides_speed => p.speed_step,
            _ => ctx.step,
        },
    };
    Ok((desires, trace))
}

/// Deterministic re-derivation of the Desires of a recorded traversal.
pub fn desires_from_traversal(graph: &OptionGraphDef, trace: &TraversalTrace, state: &AgnosticState) -> Result<Desires> {
    if trace.path.first() != Some(&graph.root) {
        return Err(contract("traversal does not start at the root"));
    }
    if trace.path.iter().any(|&k| k >= graph.nodes.len()) {
        return Err(contract("traversal references unknown nodes"));
    }
    for d in &trace.decisions {
        let node = graph.nodes.get(d.node).ok_or_else(|| contract("decision at unknown node"))?;
        let chosen = node.children.get(d.choice).copied();
        if chosen.is_none() || trace.successor(d.node) != chosen {
            return Err(contract(format!("decision at `{}` disagrees with the path", node.id)));
        }
    }
    if trace.n_vehicles != state.vehicles.len() {
        return Err(contract(format!(
            "traversal labels {} vehicles, state has {}",
            trace.n_vehicles,
            state.vehicles.len()
        )));
    }
    let option = trace.option_path(graph)?;
    Ok(option.to_desires(trace.anchor, state, &graph.mapping))
}

/// Gradient of the total log-probability of the traversal, one vector per
/// parameter set; shared sets accumulate the contributions of all their nodes.
pub fn trace_grad(trace: &TraversalTrace, params: &PolicyParams) -> Result<Vec<GradVector>> {
    let mut out: Vec<GradVector> = params.sets.iter().map(|p| GradVector::zeros(p.param_count())).collect();
    for d in &trace.decisions {
        let tape = d
            .tape
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("decision at node {} has no tape", d.node)))?;
        let set = params
            .sets
            .get(d.param_set)
            .ok_or_else(|| contract(format!("unknown parameter set {}", d.param_set)))?;
        accumulate_logprob_grad(set, tape, d.choice, 1.0, &mut out[d.param_set].0)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::tests::bare_state;
    use crate::seeds;
    use crate::sim::sense::SensedVehicle;

    fn vehicles(n: usize) -> Vec<SensedVehicle> {
        (0..n)
            .map(|k| SensedVehicle {
                id: k + 1,
                lateral: 3.0,
                rel_long: 10.0 * k as f64 - 5.0,
                speed: 15.0,
                heading: 0.0,
            })
            .collect()
    }

    fn ctx(schedule: &GatingSchedule) -> TraverseContext<'_> {
        TraverseContext {
            step: 0,
            previous: None,
            schedule,
            keep_tapes: true,
        }
    }

    #[test]
    fn single_child_graph_is_deterministic() {
        let text = "[[node]]\nid = \"root\"\nkind = \"root\"\nchildren = [\"merge\"]\n\n[[node]]\nid = \"merge\"\nkind = \"lateral\"\nchildren = [\"stay\"]\n\n[[node]]\nid = \"stay\"\nkind = \"speed\"\nchildren = [\"same\"]\n\n[[node]]\nid = \"same\"\nkind = \"pass\"\n";
        let g = OptionGraphDef::from_toml(text).unwrap();
        let params = PolicyParams::zeros(&g, &[4]).unwrap();
        let s = bare_state(vec![]);
        let schedule = GatingSchedule::default();
        let mut rng = seeds::stream(1, "policy", 0);
        let (d, t) = traverse(&g, &params, &s, &mut Chooser::Sample(&mut rng), &ctx(&schedule)).unwrap();
        assert_eq!(t.log_prob(), 0.0);
        assert_eq!(d.speed, s.ego_speed);
        assert_eq!(d.lateral, 2.0);
        assert!(trace_grad(&t, &params).unwrap().is_empty());
    }

    #[test]
    fn label_count_matches_sensed_vehicles() {
        let g = OptionGraphDef::double_merge(8, false);
        let mut rng = seeds::stream(3, "policy", 0);
        let params = PolicyParams::init(&g, &[8, 8, 8], &mut rng).unwrap();
        let schedule = GatingSchedule::default();
        for n in [0, 2, 8] {
            let s = bare_state(vehicles(n));
            let (d, t) = traverse(&g, &params, &s, &mut Chooser::Sample(&mut rng), &ctx(&schedule)).unwrap();
            assert_eq!(d.labels.len(), n);
            let recomputed = desires_from_traversal(&g, &t, &s).unwrap();
            assert_eq!(recomputed, d);
            assert!(t.decisions.iter().all(|x| x.log_prob <= 0.0));
            assert!((t.log_prob() - t.decisions.iter().map(|x| x.log_prob).sum::<f64>()).abs() == 0.0);
        }
    }

    #[test]
    fn follow_reproduces_path() {
        let g = OptionGraphDef::double_merge(8, false);
        let params = PolicyParams::zeros(&g, &[4]).unwrap();
        let s = bare_state(vehicles(2));
        let want = OptionPath {
            maneuver: Maneuver::Merge,
            lateral: LateralChoice::Right,
            commitment: Some(Commitment::Push),
            speed: SpeedChoice::Accelerate,
            labels: vec![Label::GiveWay, Label::TakeWay],
        };
        let schedule = GatingSchedule::default();
        let (d, t) = traverse(&g, &params, &s, &mut Chooser::Follow(&want), &ctx(&schedule)).unwrap();
        assert_eq!(t.option_path(&g).unwrap(), want);
        assert_eq!(d.lateral, 2.5);
        assert_eq!(d.speed, 18.5);
        assert_eq!(d.labels, vec![Label::GiveWay, Label::TakeWay]);
        // zero nets: every decision is uniform over three children
        for x in &t.decisions {
            let k = g.nodes[x.node].children.len() as f64;
            assert!((x.log_prob + k.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn high_level_choice_persists_between_decisions() {
        let g = OptionGraphDef::double_merge(8, false);
        let mut rng = seeds::stream(4, "policy", 0);
        let params = PolicyParams::init(&g, &[8], &mut rng).unwrap();
        let schedule = GatingSchedule::default();
        let s = bare_state(vehicles(1));
        let (_, first) = traverse(&g, &params, &s, &mut Chooser::Sample(&mut rng), &ctx(&schedule)).unwrap();
        for step in 1..10 {
            let c = TraverseContext {
                step,
                previous: Some(&first),
                schedule: &schedule,
                keep_tapes: false,
            };
            let (_, t) = traverse(&g, &params, &s, &mut Chooser::Sample(&mut rng), &c).unwrap();
            assert!(t.decisions.iter().all(|d| !d.kind.is_high_level()));
            let a = first.option_path(&g).unwrap();
            let b = t.option_path(&g).unwrap();
            assert_eq!((a.maneuver, a.lateral, a.commitment), (b.maneuver, b.lateral, b.commitment));
        }
    }

    #[test]
    fn inconsistent_traversal_is_rejected() {
        let g = OptionGraphDef::double_merge(8, false);
        let params = PolicyParams::zeros(&g, &[4]).unwrap();
        let s = bare_state(vec![]);
        let schedule = GatingSchedule::default();
        let (_, mut t) = traverse(&g, &params, &s, &mut Chooser::Greedy, &ctx(&schedule)).unwrap();
        t.decisions[0].choice = 1 - t.decisions[0].choice;
        assert!(desires_from_traversal(&g, &t, &s).is_err());
        t.decisions[0].tape = None;
        assert!(trace_grad(&t, &params).is_err());
    }
}
