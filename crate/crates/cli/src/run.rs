//! Single-process subcommands.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use gagail::adversarial::{DemoStore, GoalLabelSet};
use gagail::config::ExperimentConfig;
use gagail::demos::{
    audit, collect_demos, goal_reach_fraction, label_goals, select_imperfect, train_teacher, DemoQuality,
    GoalSelectionStrategy, TeachSpec, TeacherCheckpoint,
};
use gagail::envs::{evaluate, EnvSpec, Evaluation};
use gagail::mdp::{read_trajectories, write_trajectories};
use gagail::nn::Mlp;
use gagail::soft::{GreedyPolicy, PreferenceFunction, SoftmaxPolicy};
use gagail::trainer::{eval_horizon, write_csv, Baselines, Trainer};

use crate::{CliError, CliResult, CollectArgs, EvalArgs, LabelArgs, TeachArgs, TrainArgs, EXIT_DIVERGED};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const POLICY_FILE: &str = "policy.json";
const TEACHER_INDEX: &str = "checkpoints.csv";
const TEACHER_DIR: &str = "checkpoints";

/// Output level from `GAGAIL_LOG`: `quiet`, default, or `progress`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verbosity {
    Quiet,
    Normal,
    Progress,
}

pub fn verbosity() -> Verbosity {
    match std::env::var("GAGAIL_LOG").as_deref() {
        Ok("quiet") => Verbosity::Quiet,
        Ok("progress") => Verbosity::Progress,
        _ => Verbosity::Normal,
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = File::create(path).map_err(|e| CliError::usage(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    let f = File::open(path).map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

fn existing(path: &Path, what: &str) -> CliResult<PathBuf> {
    path.canonicalize()
        .map_err(|_| CliError::usage(format!("{what} {} does not exist", path.display())))
}

/// `out.ext` -> `out.<suffix>.toml`, the provenance file written beside an
/// output file.
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.toml"))
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = toml::to_string(value).map_err(|e| CliError::usage(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_demos(path: &Path) -> CliResult<DemoStore> {
    let demos = DemoStore::new(read_trajectories(open(path)?)?);
    if demos.is_empty() {
        return Err(CliError::usage(format!("{} holds no demonstrations", path.display())));
    }
    Ok(demos)
}

/// The `[env]` table of any config file.
fn env_of(path: &Path) -> CliResult<EnvSpec> {
    let tree: toml::Table = read_text(path)?
        .parse()
        .map_err(|e: toml::de::Error| CliError::usage(format!("{}: {e}", path.display())))?;
    let env = tree
        .get("env")
        .cloned()
        .ok_or_else(|| CliError::usage(format!("{} has no [env] table", path.display())))?;
    env.try_into()
        .map_err(|e: toml::de::Error| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn teach(a: &TeachArgs) -> CliResult<()> {
    let spec = TeachSpec::from_toml_with(&read_text(&a.config)?, &a.overrides)?;
    fs::create_dir_all(a.out.join(TEACHER_DIR))?;
    fs::write(a.out.join(CONFIG_FILE), spec.to_toml()?)?;
    let checkpoints = train_teacher(&spec.env, &spec.teacher, spec.seed)?;
    let mut index = create(&a.out.join(TEACHER_INDEX))?;
    writeln!(index, "iteration,mean_return,success_rate,file")?;
    for c in &checkpoints {
        let file = format!("{TEACHER_DIR}/iter_{:05}.json", c.iteration);
        c.network.save(create(&a.out.join(&file))?)?;
        writeln!(
            index,
            "{},{},{},{}",
            c.iteration, c.evaluation.mean_return, c.evaluation.success_rate, file
        )?;
    }
    index.flush()?;
    if verbosity() > Verbosity::Quiet {
        let last = checkpoints.last().expect("a converged teacher has a checkpoint");
        println!(
            "teacher reached {:.0}% success after {} iterations; {} checkpoints in {}",
            100.0 * last.evaluation.success_rate,
            last.iteration,
            checkpoints.len(),
            a.out.display()
        );
    }
    Ok(())
}

fn load_teacher(dir: &Path) -> CliResult<(TeachSpec, Vec<TeacherCheckpoint>)> {
    let spec = TeachSpec::from_toml_with(&read_text(&dir.join(CONFIG_FILE))?, &[])?;
    let text = read_text(&dir.join(TEACHER_INDEX))?;
    let mut checkpoints = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let bad = || CliError::usage(format!("{TEACHER_INDEX} line {}: malformed", n + 1));
        if cells.len() != 4 {
            return Err(bad());
        }
        checkpoints.push(TeacherCheckpoint {
            iteration: cells[0].parse().map_err(|_| bad())?,
            evaluation: Evaluation {
                mean_return: cells[1].parse().map_err(|_| bad())?,
                success_rate: cells[2].parse().map_err(|_| bad())?,
            },
            network: Mlp::load(open(&dir.join(cells[3]))?)?,
        });
    }
    if checkpoints.is_empty() {
        return Err(CliError::usage(format!("{} lists no checkpoints", dir.display())));
    }
    Ok((spec, checkpoints))
}

#[derive(Serialize)]
struct CollectRecord<'a> {
    teacher: String,
    quality: &'a str,
    checkpoint_iteration: usize,
    episodes: usize,
    steps: usize,
    seed: u64,
    goal_reach_fraction: f64,
    mean_return: f64,
}

pub fn collect(a: &CollectArgs) -> CliResult<()> {
    let (spec, checkpoints) = load_teacher(&a.teacher)?;
    let soft = spec.teacher.soft;
    let (k, demos) = match a.quality.as_str() {
        "imperfect" => select_imperfect(&spec.env, &checkpoints, soft, a.episodes, a.steps, a.seed)?.ok_or_else(|| {
            CliError::usage("no checkpoint yields a mix of goal-reaching and failing trajectories; retrain or change the seed")
        })?,
        "perfect" => {
            let k = checkpoints.len() - 1;
            let demos = collect_demos(&spec.env, &checkpoints[k].network, soft, a.episodes, a.steps, a.seed)?;
            if audit(&demos, &spec.env) != Some(DemoQuality::Perfect) {
                return Err(CliError::usage(format!(
                    "the final checkpoint reaches the goal in {:.0}% of trajectories; perfect demonstrations need all",
                    100.0 * goal_reach_fraction(&demos, &spec.env)
                )));
            }
            (k, demos)
        }
        other => return Err(CliError::usage(format!("unknown demonstration quality {other:?}"))),
    };
    let mut w = create(&a.out)?;
    write_trajectories(&mut w, &demos.trajectories)?;
    w.flush()?;
    let record = CollectRecord {
        teacher: a.teacher.display().to_string(),
        quality: &a.quality,
        checkpoint_iteration: checkpoints[k].iteration,
        episodes: a.episodes,
        steps: a.steps,
        seed: a.seed,
        goal_reach_fraction: goal_reach_fraction(&demos, &spec.env),
        mean_return: demos.mean_return(),
    };
    write_toml(&sidecar(&a.out, "collect"), &record)?;
    if verbosity() > Verbosity::Quiet {
        println!(
            "{} demonstrations from iteration {}: goal reach {:.2}, mean return {:.3}",
            a.quality, record.checkpoint_iteration, record.goal_reach_fraction, record.mean_return
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct LabelRecord<'a> {
    demos: String,
    strategy: &'a str,
    top_fraction: f64,
    env: EnvSpec,
    labels: usize,
}

pub fn label(a: &LabelArgs) -> CliResult<()> {
    let env = env_of(&a.config)?;
    let demos = load_demos(&a.demos)?;
    let strategy = GoalSelectionStrategy::parse(&a.strategy)?;
    let goals = label_goals(&demos, &env, strategy, a.top_fraction)?;
    let mut w = create(&a.out)?;
    goals.write_json(&mut w)?;
    w.flush()?;
    write_toml(
        &sidecar(&a.out, "label"),
        &LabelRecord {
            demos: a.demos.display().to_string(),
            strategy: strategy.name(),
            top_fraction: a.top_fraction,
            env,
            labels: goals.len(),
        },
    )?;
    if verbosity() > Verbosity::Quiet {
        println!("{} goal labels ({})", goals.len(), strategy.name());
    }
    Ok(())
}

/// Load a config with overrides and pin its data paths to absolute ones,
/// so the snapshot can be re-fed from anywhere.
pub fn load_experiment(path: &Path, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path, overrides)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    cfg.data.demos = existing(&cfg.data.demos, "demonstration file")?;
    if cfg.needs_goals() {
        let g = cfg.data.goals.as_ref().expect("validated configs name their goal file");
        cfg.data.goals = Some(existing(g, "goal label file")?);
    }
    Ok(cfg)
}

/// Demonstrations and (when the variant uses them) goal labels of a config.
pub fn load_data(cfg: &ExperimentConfig) -> CliResult<(DemoStore, GoalLabelSet)> {
    let demos = load_demos(&cfg.data.demos)?;
    let goals = match (&cfg.data.goals, cfg.needs_goals()) {
        (Some(path), true) => GoalLabelSet::read_json(open(path)?, &demos)?,
        _ => GoalLabelSet::empty(),
    };
    Ok((demos, goals))
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let cfg = load_experiment(&a.config, &a.overrides)?;
    let (demos, goals) = load_data(&cfg)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join(CONFIG_FILE), cfg.to_toml()?)?;
    let label = cfg.label();
    let mut trainer = Trainer::new(cfg, demos, goals)?;
    let level = verbosity();
    let outcome = trainer.run_with(|_, row| {
        if level == Verbosity::Progress {
            eprintln!(
                "iteration {:>4}  samples {:>8}  return {:>9.3}  scaled {:>7.3}  success {:.2}",
                row.iteration, row.samples, row.mean_return, row.scaled_perf, row.success_rate
            );
        }
    })?;
    write_csv(create(&a.out.join(METRICS_FILE))?, &outcome.rows)?;
    let mut events = create(&a.out.join(EVENTS_FILE))?;
    trainer.write_events(&mut events)?;
    events.flush()?;
    let mut policy = create(&a.out.join(POLICY_FILE))?;
    trainer.policy_network().save(&mut policy)?;
    policy.flush()?;
    if let Some(message) = outcome.aborted {
        return Err(CliError {
            code: EXIT_DIVERGED,
            message: format!("run aborted after {} iterations: {message}", outcome.rows.len()),
        });
    }
    if level > Verbosity::Quiet {
        if let Some(last) = outcome.rows.last() {
            println!(
                "{label}: {} iterations, final scaled performance {:.3}, success {:.2}",
                outcome.rows.len(),
                last.scaled_perf,
                last.success_rate
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    policy: &'static str,
    episodes: usize,
    horizon: usize,
    seed: u64,
    mean_return: f64,
    success_rate: f64,
    scaled_perf: f64,
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let cfg = load_experiment(&a.run.join(CONFIG_FILE), &[])?;
    let (demos, _) = load_data(&cfg)?;
    let net = Mlp::load(open(&a.run.join(POLICY_FILE))?)?;
    let horizon = a.horizon.unwrap_or_else(|| eval_horizon(&cfg, &demos));
    let baselines = Baselines::compute(&cfg, &demos, horizon)?;
    let episodes = a.episodes.unwrap_or(cfg.eval.episodes);
    let seed = a.seed.unwrap_or(cfg.seed);
    let prefs = PreferenceFunction::Network(net);
    let e = if a.stochastic {
        let policy = SoftmaxPolicy {
            prefs: &prefs,
            params: cfg.soft,
        };
        evaluate(&cfg.env, &policy, episodes, horizon, seed)?
    } else {
        evaluate(&cfg.env, &GreedyPolicy { prefs: &prefs }, episodes, horizon, seed)?
    };
    let report = EvalReport {
        policy: if a.stochastic { "softmax" } else { "greedy" },
        episodes,
        horizon,
        seed,
        mean_return: e.mean_return,
        success_rate: e.success_rate,
        scaled_perf: baselines.scale(e.mean_return)?,
    };
    println!("{}", serde_json::to_string(&report).map_err(|e| CliError::usage(e.to_string()))?);
    Ok(())
}
