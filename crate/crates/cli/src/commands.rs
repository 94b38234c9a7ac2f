//! Subcommand definitions and their implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sasc_core::imitation::{train_bc, PolicyNet};
use sasc_core::koopman::{collect_random_transitions, evaluate, fit, KoopmanModel};
use sasc_core::pilots::{Pilot, PilotSpec};
use sasc_core::sessions::{
    append_trajectory, compute_metrics, demonstrations, load_trajectories, read_log, render_table, replay_trajectory,
    run_trial, transitions, CommandSource, DatasetFilter, GroupBy, LabConfig, OutcomeFilter, Paradigm, TrialSeeds,
    Trajectory,
};
use sasc_core::world::{make_environment, EnvId};

use crate::config;
use crate::server::{self, ServerState};

#[derive(Debug, Parser)]
#[command(name = "sasc", version, about = "Safety-aware shared control lab: simulate, learn, evaluate and serve live trials.")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; missing keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set safety.d_safe=2.0`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Base seed. Trial `k` of a batch uses `seed + k`.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fly headless trials with a scripted pilot.
    Simulate(SimulateArgs),
    /// Host live operator sessions over WebSocket.
    Serve(ServeArgs),
    /// Fit a Koopman model from logs or from random simulator transitions.
    TrainModel(TrainModelArgs),
    /// Behavior-clone a policy from successful logged trials.
    TrainPolicy(TrainPolicyArgs),
    /// Roll out a learned policy bare and/or under shared control.
    Eval(EvalArgs),
    /// Metrics tables from logs.
    Metrics(MetricsArgs),
    /// Re-simulate logged trials and verify them bit for bit.
    Replay(ReplayArgs),
    /// Print an environment's geometry as JSON.
    Geometry(GeometryArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PilotChoice {
    Expert,
    Novice,
    Adversarial,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "open")]
    pub env: EnvId,
    #[arg(long, default_value = "shared")]
    pub paradigm: Paradigm,
    /// Pilot preset; without it the `[pilot]` section of the config is used.
    #[arg(long, value_enum)]
    pub pilot: Option<PilotChoice>,
    #[arg(long, default_value_t = 10)]
    pub trials: u64,
    /// Koopman model file (required for shared paradigms).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Append trajectories to this JSONL log.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Environment used when a join frame names none.
    #[arg(long, default_value = "open")]
    pub env: EnvId,
    /// Paradigm used when a join frame names none.
    #[arg(long, default_value = "shared")]
    pub paradigm: Paradigm,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Completed trials are appended here.
    #[arg(long, default_value = "live.jsonl")]
    pub log: PathBuf,
    /// Directory of cockpit files served at `/`.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainModelArgs {
    /// Trajectory logs; without any, random transitions are sampled.
    #[arg(long = "logs", num_args = 1..)]
    pub logs: Vec<PathBuf>,
    /// Fraction of the transitions held out for the reported error.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainPolicyArgs {
    #[arg(long = "logs", num_args = 1.., required = true)]
    pub logs: Vec<PathBuf>,
    /// Only use trials from this environment.
    #[arg(long)]
    pub env: Option<EnvId>,
    /// Only use trials flown under this paradigm.
    #[arg(long)]
    pub paradigm: Option<Paradigm>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value = "narrow_passage")]
    pub env: EnvId,
    /// `il`, `il-shared`, or both when omitted.
    #[arg(long)]
    pub paradigm: Option<Paradigm>,
    /// Koopman model file (required for il-shared).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub trials: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupChoice {
    Env,
    Paradigm,
    Both,
    None,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long = "logs", num_args = 1.., required = true)]
    pub logs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub group_by: GroupChoice,
    #[arg(long)]
    pub env: Option<EnvId>,
    #[arg(long)]
    pub paradigm: Option<Paradigm>,
    #[arg(long, value_enum)]
    pub outcome: Option<OutcomeChoice>,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutcomeChoice {
    Success,
    Crash,
    Timeout,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(long, default_value = "open")]
    pub env: EnvId,
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = config::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    let seed = cli.global.seed;
    match cli.command {
        Command::Simulate(a) => simulate(&cfg, seed, a),
        Command::Serve(a) => serve(cfg, seed, a),
        Command::TrainModel(a) => train_model(&cfg, seed, a),
        Command::TrainPolicy(a) => train_policy(&cfg, seed, a),
        Command::Eval(a) => eval(&cfg, seed, a),
        Command::Metrics(a) => metrics(a),
        Command::Replay(a) => replay(a),
        Command::Geometry(a) => {
            let env = make_environment(a.env, &cfg.layout, &cfg.physics, seed)?;
            println!("{}", env.to_json());
            Ok(())
        }
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn load_model(path: Option<&Path>, paradigm: Paradigm) -> Result<Option<Arc<KoopmanModel>>> {
    match (path, paradigm.is_shared()) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let model = KoopmanModel::from_json(&text).with_context(|| format!("loading model {}", p.display()))?;
            Ok(Some(Arc::new(model)))
        }
        (None, true) => bail!("paradigm `{paradigm}` needs a Koopman model (--model; create one with train-model)"),
        (None, false) => Ok(None),
    }
}

fn report(trajectories: &[Trajectory], out: Option<&Path>) -> Result<()> {
    for t in trajectories {
        println!(
            "{}  {:<20} {:>6.2} s  replace {:>4}  reject {:>4}",
            t.header.trial_id,
            t.outcome.label(),
            t.metrics.duration,
            t.metrics.replace_count,
            t.metrics.reject_count
        );
        if let Some(path) = out {
            append_trajectory(path, t)?;
        }
    }
    print!("\n{}", render_table(&compute_metrics(trajectories, GroupBy::ENV_AND_PARADIGM)));
    Ok(())
}

fn simulate(cfg: &LabConfig, seed: u64, a: SimulateArgs) -> Result<()> {
    if a.paradigm.uses_policy() {
        bail!("paradigm `{}` is flown by a learned policy; use `eval`", a.paradigm);
    }
    let model = load_model(a.model.as_deref(), a.paradigm)?;
    let mut trajectories = Vec::new();
    for k in 0..a.trials {
        let s = seed.wrapping_add(k);
        let spec = match a.pilot {
            Some(PilotChoice::Expert) => PilotSpec::expert(s),
            Some(PilotChoice::Novice) => PilotSpec::novice(s),
            Some(PilotChoice::Adversarial) => PilotSpec::adversarial(s),
            None => PilotSpec { seed: s, ..cfg.pilot.clone() },
        };
        let label = spec.source_label();
        let mut pilot = Pilot::new(spec)?;
        let id = format!("{}-{}-{label}-{s}", a.env, a.paradigm);
        let seeds = TrialSeeds { env: s, source: s };
        trajectories.push(run_trial(id, a.env, a.paradigm, label, &mut pilot, seeds, cfg, model.clone())?);
    }
    report(&trajectories, a.out.as_deref())
}

fn serve(cfg: LabConfig, seed: u64, a: ServeArgs) -> Result<()> {
    if a.paradigm.uses_policy() {
        bail!("live sessions are flown by an operator; paradigm must be user-only or shared");
    }
    let model = load_model(a.model.as_deref(), a.paradigm)?;
    let state = Arc::new(ServerState::new(cfg, model, a.env, a.paradigm, seed, Some(a.log)));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.bind).await.with_context(|| format!("binding {}", a.bind))?;
        println!("listening on ws://{}/ws", listener.local_addr()?);
        server::serve(listener, state, a.assets).await?;
        Ok(())
    })
}

fn train_model(cfg: &LabConfig, seed: u64, a: TrainModelArgs) -> Result<()> {
    let data = if a.logs.is_empty() {
        let env = make_environment(EnvId::Open, &cfg.layout, &cfg.physics, seed)?;
        collect_random_transitions(&env, &cfg.physics, cfg.koopman.samples, &cfg.koopman.sampling, seed)
    } else {
        transitions(&load_trajectories(&a.logs, &DatasetFilter::default())?, true)
    };
    if !(0.0..1.0).contains(&a.holdout) {
        bail!("--holdout must be in [0, 1), got {}", a.holdout);
    }
    let (train, test) = data.split_tail(a.holdout);
    let model = fit(&train, cfg.koopman.ridge)?;
    println!("fit on {} transitions (ridge {:e}), training residual {:.3e}", train.len(), cfg.koopman.ridge, model.fit_residual);
    if !test.is_empty() {
        let err = evaluate(&model, &test)?;
        println!("held-out {} transitions: normalized RMSE {:.5}", test.len(), err.normalized_rmse);
    }
    std::fs::write(&a.out, model.to_json()?).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn train_policy(cfg: &LabConfig, seed: u64, a: TrainPolicyArgs) -> Result<()> {
    let filter = DatasetFilter { env: a.env, paradigm: a.paradigm, outcome: Some(OutcomeFilter::Success), source: None };
    let trials = load_trajectories(&a.logs, &filter)?;
    let demos = demonstrations(&trials);
    if demos.is_empty() {
        bail!("no successful trials match the filter");
    }
    let hyper = sasc_core::imitation::TrainHyper { seed, ..cfg.training.clone() };
    println!("training on {} pairs from {} successful trials", demos.len(), demos.trajectories);
    let (net, rep) = train_bc(&demos.class_samples(), &hyper)?;
    println!("final loss {:.4}, training accuracy {:.3}", rep.final_loss, rep.accuracy.unwrap_or(f64::NAN));
    std::fs::write(&a.out, net.to_json()?).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn eval(cfg: &LabConfig, seed: u64, a: EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.policy).with_context(|| format!("reading {}", a.policy.display()))?;
    let net = PolicyNet::from_json(&text).with_context(|| format!("loading policy {}", a.policy.display()))?;
    let paradigms = match a.paradigm {
        Some(p) if p.uses_policy() => vec![p],
        Some(p) => bail!("eval runs il or il-shared, not `{p}`"),
        None => vec![Paradigm::Il, Paradigm::IlShared],
    };
    let needs_model = paradigms.iter().any(Paradigm::is_shared);
    let model = load_model(a.model.as_deref(), if needs_model { Paradigm::IlShared } else { Paradigm::Il })?;
    let label = a.policy.file_stem().map_or("policy".into(), |s| s.to_string_lossy().into_owned());
    let mut trajectories = Vec::new();
    for p in paradigms {
        for k in 0..a.trials {
            let s = seed.wrapping_add(k);
            let mut source: &PolicyNet = &net;
            let id = format!("{}-{p}-{label}-{s}", a.env);
            let m = p.is_shared().then(|| model.clone()).flatten();
            let seeds = TrialSeeds { env: s, source: s };
            trajectories.push(run_trial(id, a.env, p, label.clone(), &mut source as &mut dyn CommandSource, seeds, cfg, m)?);
        }
    }
    report(&trajectories, a.out.as_deref())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let filter = DatasetFilter {
        env: a.env,
        paradigm: a.paradigm,
        outcome: a.outcome.map(|o| match o {
            OutcomeChoice::Success => OutcomeFilter::Success,
            OutcomeChoice::Crash => OutcomeFilter::Crash,
            OutcomeChoice::Timeout => OutcomeFilter::Timeout,
        }),
        source: None,
    };
    let trials = load_trajectories(&a.logs, &filter)?;
    if trials.is_empty() {
        bail!("no trajectories match");
    }
    let group = match a.group_by {
        GroupChoice::Env => GroupBy { env: true, paradigm: false },
        GroupChoice::Paradigm => GroupBy { env: false, paradigm: true },
        GroupChoice::Both => GroupBy::ENV_AND_PARADIGM,
        GroupChoice::None => GroupBy::default(),
    };
    let rows = compute_metrics(&trials, group);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", render_table(&rows));
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let trials = read_log(&a.log)?;
    let mut bad = 0;
    for t in &trials {
        let r = replay_trajectory(t)?;
        if r.is_exact() {
            println!("{}  ok ({} steps, {})", t.header.trial_id, r.steps, r.outcome.label());
        } else {
            bad += 1;
            println!(
                "{}  MISMATCH first differing step {:?}, final state {}, outcome {} vs logged {}",
                t.header.trial_id,
                r.first_mismatch,
                if r.final_state_matches { "matches" } else { "differs" },
                r.outcome.label(),
                t.outcome.label()
            );
        }
    }
    if bad > 0 {
        bail!("{bad} of {} trajectories did not replay exactly", trials.len());
    }
    println!("{} trajectories replayed exactly", trials.len());
    Ok(())
}
