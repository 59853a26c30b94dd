//! Running full multi-agent episodes with learned or scripted drivers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::trace::{EpisodeTrace, TraceStep};
use crate::error::{Error, Result};
use crate::options::{traverse, Chooser, GatingSchedule, OptionGraphDef, OptionPath, PolicyParams, TraversalTrace, TraverseContext};
use crate::planner::{plan, PlannerConfig, TrajectoryPlan};
use crate::seeds::{self, StreamRng};
use crate::sim::expert::{expert_path, ExpertConfig};
use crate::sim::log::{write_record, StateSummary, StepRecord};
use crate::sim::{init_scene, sense, step, AgnosticState, Outcome, RewardConfig, RoadGeometry, SceneParams, SensingConfig, WorldState};
use crate::options::{anchor_lane, Desires};

/// Everything that defines the environment an agent drives in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub geometry: RoadGeometry,
    pub scene: SceneParams,
    pub sensing: SensingConfig,
    pub reward: RewardConfig,
    pub planner: PlannerConfig,
    pub expert: ExpertConfig,
    pub gating: GatingSchedule,
}

#[derive(Debug, Clone, Copy)]
pub enum Driver<'a> {
    Expert,
    /// Samples from the policy; `learn` keeps tapes and records a trace.
    Policy { params: &'a PolicyParams, learn: bool },
    /// Most probable choice at every node.
    Greedy(&'a PolicyParams),
}

/// What happened to every agent in one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub steps: usize,
    pub outcomes: Vec<Outcome>,
    pub returns: Vec<f64>,
    /// Traces of the learning agents, indexed by agent.
    pub traces: Vec<Option<EpisodeTrace>>,
    /// Fallback plans used, over all agents and steps.
    pub fallbacks: usize,
}

impl EpisodeResult {
    pub fn count(&self, outcome: Outcome) -> usize {
        self.outcomes.iter().filter(|o| **o == outcome).count()
    }
}

/// Snapshot and expert choice of one agent at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoStep {
    pub agent: usize,
    pub step: usize,
    pub state: AgnosticState,
    pub expert: OptionPath,
}

/// An expert-only episode: per-step snapshots plus the world sequence used
/// to infer labels from future positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoEpisode {
    pub steps: Vec<DemoStep>,
    pub worlds: Vec<WorldState>,
    pub result: EpisodeResult,
}

pub fn policy_rng(episode_seed: u64, agent: usize) -> StreamRng {
    seeds::stream(episode_seed, "policy", agent as u64)
}

pub fn scene_seed(episode_seed: u64) -> u64 {
    seeds::stream_seed(episode_seed, "scene", 0)
}

struct AgentCtx {
    previous: Option<TraversalTrace>,
    steps: Vec<TraceStep>,
    rewards: Vec<f64>,
    rng: StreamRng,
}

fn node_ids(graph: &OptionGraphDef, t: &TraversalTrace) -> Vec<String> {
    t.path.iter().map(|&k| graph.nodes[k].id.clone()).collect()
}

/// Runs one episode to completion. `drivers[i]` controls vehicle `i`.
pub fn run_episode(
    env: &EnvConfig,
    graph: &OptionGraphDef,
    drivers: &[Driver<'_>],
    episode_seed: u64,
    mut log: Option<&mut dyn Write>,
    mut demos: Option<&mut DemoEpisode>,
) -> Result<EpisodeResult> {
    let mut world = init_scene(scene_seed(episode_seed), &env.scene, &env.geometry)?;
    if drivers.len() != world.vehicles.len() {
        return Err(Error::Contract(format!(
            "{} drivers for {} vehicles",
            drivers.len(),
            world.vehicles.len()
        )));
    }
    let n = world.vehicles.len();
    let mut agents: Vec<AgentCtx> = (0..n)
        .map(|i| AgentCtx {
            previous: None,
            steps: Vec::new(),
            rewards: Vec::new(),
            rng: policy_rng(episode_seed, i),
        })
        .collect();
    let mut all_rewards: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut fallbacks = 0;
    if let Some(d) = demos.as_deref_mut() {
        d.worlds.push(world.clone());
    }

    while !world.is_done() {
        let running: Vec<usize> = world.running().collect();
        let mut plans: Vec<Option<TrajectoryPlan>> = vec![None; n];
        let mut records: Vec<(usize, StepRecord)> = Vec::new();
        for &i in &running {
            let state = sense(&world, i, &env.sensing)?;
            let (desires, traversal): (Desires, Option<TraversalTrace>) = match drivers[i] {
                Driver::Expert => {
                    let path = expert_path(&state, &env.expert);
                    let d = path.to_desires(anchor_lane(state.ego_lateral), &state, &graph.mapping);
                    if let Some(demo) = demos.as_deref_mut() {
                        demo.steps.push(DemoStep {
                            agent: i,
                            step: world.step,
                            state: state.clone(),
                            expert: path,
                        });
                    }
                    (d, None)
                }
                Driver::Policy { params, learn } => {
                    let a = &mut agents[i];
                    let ctx = TraverseContext {
                        step: world.step,
                        previous: a.previous.as_ref(),
                        schedule: &env.gating,
                        keep_tapes: learn,
                    };
                    let (d, t) = traverse(graph, params, &state, &mut Chooser::Sample(&mut a.rng), &ctx)?;
                    (d, Some(t))
                }
                Driver::Greedy(params) => {
                    let a = &agents[i];
                    let ctx = TraverseContext {
                        step: world.step,
                        previous: a.previous.as_ref(),
                        schedule: &env.gating,
                        keep_tapes: false,
                    };
                    let (d, t) = traverse(graph, params, &state, &mut Chooser::Greedy, &ctx)?;
                    (d, Some(t))
                }
            };
            let out = plan(&desires, &state, &env.planner);
            if out.fallback {
                fallbacks += 1;
            }
            if log.is_some() {
                records.push((
                    i,
                    StepRecord {
                        time: world.time(),
                        agent: i,
                        state: StateSummary {
                            y: world.vehicles[i].y,
                            lateral: state.ego_lateral,
                            speed: state.ego_speed,
                            dist_to_merge: state.dist_to_merge,
                            sensed: state.vehicles.len(),
                        },
                        traversal: traversal.as_ref().map(|t| node_ids(graph, t)).unwrap_or_default(),
                        desires: desires.clone(),
                        plan: out.plan.points.clone(),
                        fallback: out.fallback,
                        reward: 0.0,
                        outcome: Outcome::Running,
                    },
                ));
            }
            if let Some(t) = traversal {
                let a = &mut agents[i];
                if matches!(drivers[i], Driver::Policy { learn: true, .. }) {
                    a.steps.push(TraceStep {
                        step: world.step,
                        speed: state.ego_speed,
                        dist_to_merge: state.dist_to_merge,
                        traversal: t.clone(),
                    });
                }
                let mut prev = t;
                prev.drop_tapes();
                a.previous = Some(prev);
            }
            plans[i] = Some(out.plan);
        }
        let (next, rewards) = step(&world, &plans, &env.reward)?;
        for &i in &running {
            all_rewards[i].push(rewards[i]);
            if matches!(drivers[i], Driver::Policy { learn: true, .. }) {
                agents[i].rewards.push(rewards[i]);
            }
        }
        if let Some(w) = log.as_deref_mut() {
            for (i, mut r) in records {
                r.reward = rewards[i];
                r.outcome = next.outcomes[i];
                write_record(&mut *w, &r)?;
            }
        }
        world = next;
        if let Some(d) = demos.as_deref_mut() {
            d.worlds.push(world.clone());
        }
    }

    let returns: Vec<f64> = all_rewards.iter().map(|r| crate::sim::episode_return(r, &env.reward)).collect();
    let traces = agents
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            matches!(drivers[i], Driver::Policy { learn: true, .. })
                .then(|| EpisodeTrace::new(i, a.steps, a.rewards, world.outcomes[i], &env.reward))
        })
        .collect();
    Ok(EpisodeResult {
        seed: episode_seed,
        steps: world.step,
        outcomes: world.outcomes.clone(),
        returns,
        traces,
        fallbacks,
    })
}

/// Runs an episode and keeps every world state, the initial one first.
/// Expert agent-steps are recorded as demonstrations.
pub fn run_recorded(env: &EnvConfig, graph: &OptionGraphDef, drivers: &[Driver<'_>], episode_seed: u64) -> Result<DemoEpisode> {
    let mut demo = DemoEpisode {
        steps: Vec::new(),
        worlds: Vec::new(),
        result: EpisodeResult {
            seed: episode_seed,
            steps: 0,
            outcomes: Vec::new(),
            returns: Vec::new(),
            traces: Vec::new(),
            fallbacks: 0,
        },
    };
    demo.result = run_episode(env, graph, drivers, episode_seed, None, Some(&mut demo))?;
    Ok(demo)
}

/// Runs an all-expert episode and records every agent-step.
pub fn collect_demo(env: &EnvConfig, graph: &OptionGraphDef, episode_seed: u64) -> Result<DemoEpisode> {
    let n = 2 * env.scene.agents_per_side;
    run_recorded(env, graph, &vec![Driver::Expert; n], episode_seed)
}
