use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use dmerge_core::config::{PolicyKind, RunConfig};
use dmerge_core::learner::{run_episode, write_metrics_csv, Driver};
use dmerge_core::options::{OptionGraphDef, PolicyParams};
use dmerge_core::pipeline::{run_evaluation, run_imitation, run_training};
use dmerge_core::planner::scene::PlanScene;
use dmerge_core::seeds;
use dmerge_core::verify::{run_verify, VerifyOptions};

#[derive(Parser)]
#[command(name = "dmerge", version, about = "Safe multi-agent policy-gradient lab for the double-merge scenario")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML). Defaults apply to everything not set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the estimator, network and planner oracle suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Number of random planner cases checked for hard-constraint violations.
        #[arg(long)]
        planner_cases: Option<usize>,
        /// Negate the gradient estimate (checks that the suite notices).
        #[arg(long, hide = true)]
        flip_gradient_sign: bool,
    },
    /// Fit the option graph to the scripted expert.
    Imitate {
        #[command(flatten)]
        common: Common,
        /// Demo episodes, overriding the config.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// A/B self-play, starting from a checkpoint or from a fresh imitation fit.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rounds: Option<usize>,
        /// Episodes per round, overriding the config.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Outcome rates over seeded episodes.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        /// Required unless the policy is `expert`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// One logged episode (JSON Lines).
    Rollout {
        #[command(flatten)]
        common: Common,
        /// Without a checkpoint every vehicle is the scripted expert.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// Plan once for a scene file and print the trajectory and cost terms.
    Plan {
        #[command(flatten)]
        common: Common,
        scene: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Expert,
    Greedy,
    Sample,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Expert => PolicyKind::Expert,
            PolicyArg::Greedy => PolicyKind::Greedy,
            PolicyArg::Sample => PolicyKind::Sample,
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn revalidate(cfg: &RunConfig) -> Result<()> {
    cfg.validate().context("flag overrides")?;
    Ok(())
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.join(name))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_params(graph: &OptionGraphDef, path: &Path) -> Result<PolicyParams> {
    PolicyParams::load(graph, path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn save_resolved(cfg: &RunConfig) -> Result<()> {
    fs::write(out_file(cfg, "config.toml")?, cfg.to_toml()?)?;
    Ok(())
}

fn verify(common: &Common, planner_cases: Option<usize>, flip: bool) -> Result<bool> {
    let cfg = load_config(common)?;
    let mut opts = VerifyOptions {
        seed: cfg.seed,
        flip_gradient_sign: flip,
        ..VerifyOptions::default()
    };
    if let Some(n) = planner_cases {
        opts.planner_cases = n;
    }
    let report = run_verify(&opts)?;
    for c in &report.checks {
        println!(
            "{} {:<28} error {:.3e} tolerance {:.1e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.error,
            c.tolerance
        );
    }
    write_json(&out_file(&cfg, "verify.json")?, &report)?;
    Ok(report.passed)
}

fn imitate(common: &Common, episodes: Option<usize>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(n) = episodes {
        cfg.imitation.episodes = n;
    }
    revalidate(&cfg)?;
    let graph = cfg.graph()?;
    let (params, report) = run_imitation(&cfg, &graph)?;
    params.save(&out_file(&cfg, "imitation.ckpt")?)?;
    write_json(&out_file(&cfg, "imitation.json")?, &report)?;
    save_resolved(&cfg)?;
    println!(
        "held-out agreement {:.4} (from {:.4}), cross-entropy {:.4} (from {:.4})",
        report.heldout_agreement, report.heldout_agreement_before, report.heldout_cross_entropy, report.heldout_cross_entropy_before
    );
    Ok(())
}

fn train(common: &Common, rounds: Option<usize>, episodes: Option<usize>, checkpoint: Option<&Path>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(r) = rounds {
        cfg.train.rounds = r;
    }
    if let Some(n) = episodes {
        cfg.train.episodes_per_round = n;
    }
    revalidate(&cfg)?;
    let graph = cfg.graph()?;
    let init = match checkpoint {
        Some(path) => load_params(&graph, path)?,
        None => {
            let (params, report) = run_imitation(&cfg, &graph)?;
            params.save(&out_file(&cfg, "imitation.ckpt")?)?;
            write_json(&out_file(&cfg, "imitation.json")?, &report)?;
            info!("imitation held-out agreement {:.4}", report.heldout_agreement);
            params
        }
    };
    let (params, history) = run_training(&cfg, &graph, &init)?;
    params.save(&out_file(&cfg, "policy.ckpt")?)?;
    let mut w = BufWriter::new(File::create(out_file(&cfg, "metrics.csv")?)?);
    write_metrics_csv(&mut w, &history)?;
    w.flush()?;
    save_resolved(&cfg)?;
    for m in &history {
        println!(
            "round {} merge {:.4} wrong-side {:.4} accidents {}{}",
            m.round,
            m.stats.merge_rate(),
            m.stats.wrong_side_rate(),
            m.stats.accidents,
            if m.restored { " (restored)" } else { "" }
        );
    }
    Ok(())
}

fn evaluate(common: &Common, episodes: Option<usize>, checkpoint: Option<&Path>, policy: Option<PolicyArg>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(n) = episodes {
        cfg.evaluate.episodes = n;
    }
    if let Some(p) = policy {
        cfg.evaluate.policy = p.into();
    }
    revalidate(&cfg)?;
    let graph = cfg.graph()?;
    let params = match (cfg.evaluate.policy, checkpoint) {
        (PolicyKind::Expert, _) => None,
        (_, Some(path)) => Some(load_params(&graph, path)?),
        (_, None) => bail!("--checkpoint is required unless --policy expert"),
    };
    let stats = run_evaluation(&cfg, &graph, params.as_ref())?;
    let report = serde_json::json!({
        "policy": cfg.evaluate.policy,
        "episodes": stats.episodes,
        "agents": stats.agents,
        "merge_rate": stats.merge_rate(),
        "wrong_side_rate": stats.wrong_side_rate(),
        "accidents": stats.accidents,
        "mean_return": stats.mean_return(),
        "fallbacks": stats.fallbacks,
    });
    write_json(&out_file(&cfg, "evaluation.json")?, &report)?;
    println!(
        "episodes {} merge {:.4} wrong-side {:.4} accidents {}",
        stats.episodes,
        stats.merge_rate(),
        stats.wrong_side_rate(),
        stats.accidents
    );
    Ok(())
}

fn rollout(common: &Common, checkpoint: Option<&Path>, policy: Option<PolicyArg>) -> Result<()> {
    let cfg = load_config(common)?;
    let graph = cfg.graph()?;
    let params = checkpoint.map(|p| load_params(&graph, p)).transpose()?;
    let driver = match (&params, policy) {
        (None, None | Some(PolicyArg::Expert)) | (Some(_), Some(PolicyArg::Expert)) => Driver::Expert,
        (Some(p), None | Some(PolicyArg::Sample)) => Driver::Policy { params: p, learn: false },
        (Some(p), Some(PolicyArg::Greedy)) => Driver::Greedy(p),
        (None, Some(_)) => bail!("--checkpoint is required for a learned policy"),
    };
    let n = 2 * cfg.env.scene.agents_per_side;
    let path = out_file(&cfg, "episode.jsonl")?;
    let mut w = BufWriter::new(File::create(&path)?);
    let result = run_episode(
        &cfg.env,
        &graph,
        &vec![driver; n],
        seeds::stream_seed(cfg.seed, "rollout", 0),
        Some(&mut w),
        None,
    )?;
    w.flush()?;
    println!(
        "{} steps, outcomes {:?}, log {}",
        result.steps,
        result.outcomes,
        path.display()
    );
    Ok(())
}

fn plan(common: &Common, scene: &Path) -> Result<()> {
    let text = fs::read_to_string(scene).with_context(|| format!("reading {}", scene.display()))?;
    let scene = PlanScene::from_toml(&text)?;
    let report = scene.solve().to_toml()?;
    print!("{report}");
    if common.out.is_some() || common.config.is_some() {
        let cfg = load_config(common)?;
        fs::write(out_file(&cfg, "plan.toml")?, &report)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DMERGE_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Verify {
            common,
            planner_cases,
            flip_gradient_sign,
        } => verify(common, *planner_cases, *flip_gradient_sign),
        Command::Imitate { common, episodes } => imitate(common, *episodes).map(|_| true),
        Command::Train {
            common,
            rounds,
            episodes,
            checkpoint,
        } => train(common, *rounds, *episodes, checkpoint.as_deref()).map(|_| true),
        Command::Evaluate {
            common,
            episodes,
            checkpoint,
            policy,
        } => evaluate(common, *episodes, checkpoint.as_deref(), *policy).map(|_| true),
        Command::Rollout { common, checkpoint, policy } => rollout(common, checkpoint.as_deref(), *policy).map(|_| true),
        Command::Plan { common, scene } => plan(common, scene).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
