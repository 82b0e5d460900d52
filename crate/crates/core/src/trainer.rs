//! The training loop. Each iteration: clear the replay memory and fill it
//! with `M` softmax rollouts of `T` steps; `J` discriminator sweeps; reward
//! fill; `K` generator sweeps; target refresh; greedy evaluation.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::adversarial::{DemoStore, DiscriminatorPair, DiscriminatorVariant, GoalLabelSet};
use crate::config::ExperimentConfig;
use crate::envs::{evaluate, random_policy_baseline, EnvSpec, Evaluation};
use crate::error::{config, contract, Error, Result};
use crate::generator::{replay_for, Generator};
use crate::mdp::{rollout, Observation, ReplayMemory, UniformPolicy};
use crate::nn::{Mlp, MlpSpec, OutputActivation, RmsProp, RmsPropConfig, SoftmaxCrossEntropy};
use crate::rng;
use crate::soft::{GreedyPolicy, PreferenceFunction};

/// `(mean_return - random) / (demo - random)`.
pub fn scaled_performance(mean_return: f64, random_baseline: f64, demo_mean: f64) -> Result<f64> {
    let denom = demo_mean - random_baseline;
    if !(denom.abs() > 1e-9) || !denom.is_finite() {
        return contract(format!(
            "demonstration return {demo_mean} and random return {random_baseline} coincide; scaled performance is undefined"
        ));
    }
    Ok((mean_return - random_baseline) / denom)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Baselines {
    pub random_return: f64,
    pub demo_return: f64,
}

impl Baselines {
    /// Uniform-policy return over `horizon` steps (seeded by the run seed)
    /// and the demonstrations' mean return. Fails when the two coincide.
    pub fn compute(cfg: &ExperimentConfig, demos: &DemoStore, horizon: usize) -> Result<Self> {
        let b = Self {
            random_return: random_policy_baseline(&cfg.env, cfg.eval.random_episodes, horizon, cfg.seed)?,
            demo_return: demos.mean_return(),
        };
        scaled_performance(b.demo_return, b.random_return, b.demo_return)?;
        Ok(b)
    }

    pub fn scale(&self, mean_return: f64) -> Result<f64> {
        scaled_performance(mean_return, self.random_return, self.demo_return)
    }
}

/// `eval.horizon`, or the longest demonstration when it is 0.
pub fn eval_horizon(cfg: &ExperimentConfig, demos: &DemoStore) -> usize {
    if cfg.eval.horizon > 0 {
        cfg.eval.horizon
    } else {
        demos.trajectories.iter().map(|t| t.len()).max().unwrap_or(0)
    }
}

/// One entry of the per-run event log, in execution order.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    GoalPretrain { steps: usize, held_out_accuracy: f64 },
    Rollouts { iteration: usize, episodes: usize, steps: usize },
    DiscriminatorUpdate { iteration: usize, steps: usize },
    RewardFill { iteration: usize, transitions: usize },
    GeneratorUpdate { iteration: usize, steps: usize },
    TargetSync { iteration: usize },
    BcUpdate { iteration: usize, epochs: usize, steps: usize },
    Evaluation { iteration: usize, mean_return: f64, success_rate: f64 },
    Warning { iteration: usize, message: String },
    Abort { iteration: usize, message: String },
}

/// One CSV row per completed iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub samples: usize,
    pub mean_return: f64,
    pub scaled_perf: f64,
    pub success_rate: f64,
    pub loss_demo_disc: Option<f64>,
    pub loss_goal_disc: Option<f64>,
    pub loss_generator: Option<f64>,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str =
    "iteration,samples,mean_return,scaled_perf,success_rate,loss_demo_disc,loss_goal_disc,loss_generator,wall_ms";

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.samples,
            self.mean_return,
            self.scaled_perf,
            self.success_rate,
            opt_cell(self.loss_demo_disc),
            opt_cell(self.loss_goal_disc),
            opt_cell(self.loss_generator),
            self.wall_ms
        )
    }
}

pub fn write_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Supervised classifier over demonstration `(s, a)` pairs.
#[derive(Clone, Debug)]
pub struct BehaviorCloner {
    pub prefs: PreferenceFunction,
    opt: RmsProp,
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    minibatch: usize,
}

impl BehaviorCloner {
    pub fn new(
        demos: &DemoStore,
        action_count: usize,
        hidden: &[usize],
        opt: RmsPropConfig,
        minibatch: usize,
        seed: u64,
    ) -> Result<Self> {
        if demos.is_empty() {
            return config("behavior cloning needs demonstrations");
        }
        let inputs: Vec<Vec<f64>> = demos.transitions().map(|t| t.state.features().to_vec()).collect();
        let labels: Vec<usize> = demos.transitions().map(|t| t.action.index()).collect();
        if let Some(&bad) = labels.iter().find(|&&a| a >= action_count) {
            return contract(format!("demonstration action {bad} out of range"));
        }
        let spec = MlpSpec::with_hidden(inputs[0].len(), hidden, action_count, OutputActivation::Identity)?;
        let net = Mlp::new(spec, &mut rng::rng_from(seed, &[rng::TAG_BC]));
        let opt = RmsProp::new(opt, &net.params)?;
        Ok(Self {
            prefs: PreferenceFunction::Network(net),
            opt,
            inputs,
            labels,
            minibatch: minibatch.max(1),
        })
    }

    /// One shuffled pass; the last partial minibatch is kept. Returns the
    /// mean pre-step loss.
    pub fn epoch(&mut self, seed: u64) -> Result<f64> {
        let mut idx: Vec<usize> = (0..self.inputs.len()).collect();
        idx.shuffle(&mut rng::rng_from(seed, &[rng::TAG_BC]));
        let net = self.prefs.as_network_mut().expect("classifier is a network");
        let mut losses = Vec::new();
        for chunk in idx.chunks(self.minibatch) {
            let x: Vec<&[f64]> = chunk.iter().map(|&i| self.inputs[i].as_slice()).collect();
            let y: Vec<usize> = chunk.iter().map(|&i| self.labels[i]).collect();
            let (loss, grads) = net.loss_and_grad(&x, &SoftmaxCrossEntropy { labels: &y })?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("behavior cloning loss {loss} is not finite")));
            }
            self.opt.step(&mut net.params, grads)?;
            losses.push(loss);
        }
        Ok(mean(&losses).unwrap_or(0.0))
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.inputs.len().div_ceil(self.minibatch)
    }

    /// Mean cross-entropy over all demonstration pairs.
    pub fn loss(&self) -> Result<f64> {
        let net = self.prefs.as_network().expect("classifier is a network");
        let outputs = net.forward(&self.inputs)?;
        Ok(crate::nn::BatchLoss::evaluate(&SoftmaxCrossEntropy { labels: &self.labels }, &outputs).0)
    }
}

/// Train a behavior-cloning classifier for `epochs` passes; returns the
/// classifier and the per-epoch mean losses.
pub fn train_bc(
    demos: &DemoStore,
    action_count: usize,
    hidden: &[usize],
    epochs: usize,
    opt: RmsPropConfig,
    seed: u64,
) -> Result<(BehaviorCloner, Vec<f64>)> {
    let mut bc = BehaviorCloner::new(demos, action_count, hidden, opt, 32, seed)?;
    let losses = (0..epochs)
        .map(|e| bc.epoch(rng::derive_seed(seed, &[e as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok((bc, losses))
}

#[allow(clippy::large_enum_variant)]
enum Learner {
    Adversarial {
        generator: Generator,
        discriminators: DiscriminatorPair,
    },
    Cloning(BehaviorCloner),
}

/// Outcome of a full run: the completed rows, plus the diagnostic when the
/// run stopped on a non-finite loss.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub aborted: Option<String>,
}

pub struct Trainer {
    pub cfg: ExperimentConfig,
    pub demos: DemoStore,
    pub goals: GoalLabelSet,
    pub baselines: Baselines,
    pub eval_horizon: usize,
    pub events: Vec<Event>,
    learner: Learner,
    memory: ReplayMemory,
    samples: usize,
    iteration: usize,
}

impl Trainer {
    pub fn new(cfg: ExperimentConfig, demos: DemoStore, goals: GoalLabelSet) -> Result<Self> {
        cfg.validate()?;
        let spec = &cfg.env;
        if demos.is_empty() {
            return config("no demonstration transitions loaded");
        }
        if let Some(t) = demos.transitions().find(|t| t.state.len() != spec.observation_dim()) {
            return config(format!(
                "demonstration observations have {} features; {} expects {}",
                t.state.len(),
                spec.name(),
                spec.observation_dim()
            ));
        }
        if cfg.needs_goals() && goals.is_empty() {
            return config("the discriminator variant needs goal labels but none were loaded");
        }
        let eval_horizon = eval_horizon(&cfg, &demos);
        let baselines = Baselines::compute(&cfg, &demos, eval_horizon)?;

        let mut events = Vec::new();
        let learner = match (cfg.method.signal(), cfg.resolved_variant()) {
            (Some(signal), Some(variant)) => {
                let generator = Generator::new(
                    signal,
                    cfg.soft,
                    spec.observation_dim(),
                    spec.action_count(),
                    &cfg.network.generator_hidden,
                    cfg.optimizer.generator,
                    &mut rng::rng_from(cfg.seed, &[rng::TAG_INIT, 0]),
                )?;
                let mut discriminators = DiscriminatorPair::new(
                    variant,
                    spec.observation_dim(),
                    spec.action_count(),
                    &cfg.network.discriminator_hidden,
                    cfg.optimizer.discriminator,
                    cfg.discriminator.clamp_eps,
                    &mut rng::rng_from(cfg.seed, &[rng::TAG_INIT, 1]),
                )?;
                if variant == DiscriminatorVariant::FixedGoal {
                    let accuracy = pretrain_goal_classifier(&cfg, &mut discriminators, &goals)?;
                    events.push(Event::GoalPretrain {
                        steps: cfg.discriminator.pretrain_steps,
                        held_out_accuracy: accuracy,
                    });
                    if accuracy <= 0.95 {
                        events.push(Event::Warning {
                            iteration: 0,
                            message: format!("fixed goal classifier held-out accuracy {accuracy:.3} <= 0.95"),
                        });
                    }
                }
                Learner::Adversarial {
                    generator,
                    discriminators,
                }
            }
            _ => Learner::Cloning(BehaviorCloner::new(
                &demos,
                spec.action_count(),
                &cfg.network.generator_hidden,
                cfg.optimizer.generator,
                cfg.network.minibatch,
                cfg.seed,
            )?),
        };
        let memory = replay_for(cfg.rollout.episodes * cfg.rollout.steps, cfg.network.minibatch)?;
        Ok(Self {
            cfg,
            demos,
            goals,
            baselines,
            eval_horizon,
            events,
            learner,
            memory,
            samples: 0,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// The network whose greedy action is the policy.
    pub fn policy_network(&self) -> &Mlp {
        match &self.learner {
            Learner::Adversarial { generator, .. } => generator.network(),
            Learner::Cloning(bc) => bc.prefs.as_network().expect("classifier is a network"),
        }
    }

    pub fn discriminators(&self) -> Option<&DiscriminatorPair> {
        match &self.learner {
            Learner::Adversarial { discriminators, .. } => Some(discriminators),
            Learner::Cloning(_) => None,
        }
    }

    /// Replay contents after the last iteration.
    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn evaluate_greedy(&self, episodes: usize, seed: u64) -> Result<Evaluation> {
        let prefs = match &self.learner {
            Learner::Adversarial { generator, .. } => &generator.online,
            Learner::Cloning(bc) => &bc.prefs,
        };
        evaluate(&self.cfg.env, &GreedyPolicy { prefs }, episodes, self.eval_horizon, seed)
    }

    /// Run one iteration and return its metrics row.
    pub fn run_iteration(&mut self) -> Result<MetricsRow> {
        let started = Instant::now();
        let i = self.iteration;
        let iter_seed = rng::derive_seed(self.cfg.seed, &[rng::TAG_ROLLOUT, i as u64]);
        let (episodes, steps) = (self.cfg.rollout.episodes, self.cfg.rollout.steps);
        let mut row_losses = (None, None, None);
        match &mut self.learner {
            Learner::Adversarial {
                generator,
                discriminators,
            } => {
                self.memory.clear();
                for traj in generator.collect(&self.cfg.env, episodes, steps, iter_seed)? {
                    traj.transitions.into_iter().for_each(|t| self.memory.store(t));
                }
                self.events.push(Event::Rollouts {
                    iteration: i,
                    episodes,
                    steps,
                });
                if self.memory.batches_per_sweep() == 0 {
                    self.events.push(Event::Warning {
                        iteration: i,
                        message: format!("replay holds fewer than {} transitions; no updates run", self.cfg.network.minibatch),
                    });
                }

                let trail = discriminators.update(
                    &self.memory,
                    &self.demos,
                    &self.goals,
                    self.cfg.sweeps.discriminator,
                    rng::derive_seed(iter_seed, &[rng::TAG_DISC]),
                )?;
                self.events.push(Event::DiscriminatorUpdate {
                    iteration: i,
                    steps: trail.steps,
                });

                discriminators.fill_rewards(&mut self.memory)?;
                self.events.push(Event::RewardFill {
                    iteration: i,
                    transitions: self.memory.len(),
                });

                let losses = generator.train(&self.memory, self.cfg.sweeps.generator, iter_seed)?;
                self.events.push(Event::GeneratorUpdate {
                    iteration: i,
                    steps: losses.len(),
                });
                generator.sync_target();
                self.events.push(Event::TargetSync { iteration: i });
                row_losses = (trail.mean_demo(), trail.mean_goal(), mean(&losses));
            }
            Learner::Cloning(bc) => {
                let epochs = self.cfg.bc.epochs_per_iteration;
                let mut last = None;
                for e in 0..epochs {
                    last = Some(bc.epoch(rng::derive_seed(iter_seed, &[e as u64]))?);
                }
                self.events.push(Event::BcUpdate {
                    iteration: i,
                    epochs,
                    steps: epochs * bc.steps_per_epoch(),
                });
                row_losses.2 = last;
            }
        }
        // Both learners advance the same sample axis so curves line up;
        // cloning itself never touches the environment.
        self.samples += episodes * steps;

        let eval = self.evaluate_greedy(
            self.cfg.eval.episodes,
            rng::derive_seed(self.cfg.seed, &[rng::TAG_EVAL, i as u64]),
        )?;
        self.events.push(Event::Evaluation {
            iteration: i,
            mean_return: eval.mean_return,
            success_rate: eval.success_rate,
        });
        let scaled_perf = scaled_performance(eval.mean_return, self.baselines.random_return, self.baselines.demo_return)?;
        self.iteration += 1;
        Ok(MetricsRow {
            iteration: i,
            samples: self.samples,
            mean_return: eval.mean_return,
            scaled_perf,
            success_rate: eval.success_rate,
            loss_demo_disc: row_losses.0,
            loss_goal_disc: row_losses.1,
            loss_generator: row_losses.2,
            wall_ms: if self.cfg.record_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        })
    }

    /// Run the remaining iterations. A non-finite loss stops the run and is
    /// reported in the outcome and the event log; other errors propagate.
    pub fn run(&mut self) -> Result<RunOutcome> {
        self.run_with(|_, _| {})
    }

    /// `run` with a callback after each completed iteration.
    pub fn run_with(&mut self, mut on_row: impl FnMut(&Trainer, &MetricsRow)) -> Result<RunOutcome> {
        let mut rows = Vec::with_capacity(self.cfg.iterations);
        while self.iteration < self.cfg.iterations {
            match self.run_iteration() {
                Ok(row) => {
                    on_row(self, &row);
                    rows.push(row);
                }
                Err(Error::Divergence(message)) => {
                    self.events.push(Event::Abort {
                        iteration: self.iteration,
                        message: message.clone(),
                    });
                    return Ok(RunOutcome {
                        rows,
                        aborted: Some(message),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(RunOutcome { rows, aborted: None })
    }

    pub fn write_events<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// States visited by the uniform policy, `steps`-long episodes until
/// `count` states are collected.
pub fn random_states(spec: &EnvSpec, count: usize, steps: usize, seed: u64) -> Result<Vec<Observation>> {
    let mut env = spec.build();
    let policy = UniformPolicy {
        action_count: spec.action_count(),
    };
    let mut out = Vec::with_capacity(count);
    let mut ep = 0u64;
    while out.len() < count {
        let traj = rollout(&mut env, &policy, steps.max(1), rng::derive_seed(seed, &[rng::TAG_NEGATIVES, ep]))?;
        out.extend(traj.transitions.into_iter().map(|t| t.next_state).take(count - out.len()));
        ep += 1;
    }
    Ok(out)
}

/// Pre-train the frozen goal classifier; returns its accuracy on the goal
/// labels plus a fresh set of random-policy states.
fn pretrain_goal_classifier(
    cfg: &ExperimentConfig,
    pair: &mut DiscriminatorPair,
    goals: &GoalLabelSet,
) -> Result<f64> {
    let spec = &cfg.env;
    let negatives = random_states(spec, cfg.discriminator.negatives, cfg.rollout.steps, cfg.seed)?;
    pair.pretrain_fixed_goal(
        goals,
        &negatives,
        cfg.discriminator.pretrain_steps,
        cfg.network.minibatch,
        rng::derive_seed(cfg.seed, &[rng::TAG_NEGATIVES]),
    )?;
    let held_out = random_states(spec, 500, cfg.rollout.steps, rng::derive_seed(cfg.seed, &[rng::TAG_EVAL]))?;
    // Random states that happen to satisfy the goal predicate count as positives.
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in goals.states() {
        correct += usize::from(pair.goal_output(s)?.unwrap_or(0.0) > 0.5);
        total += 1;
    }
    for s in &held_out {
        let says_goal = pair.goal_output(s)?.unwrap_or(0.0) > 0.5;
        correct += usize::from(says_goal == spec.is_goal(s));
        total += 1;
    }
    Ok(correct as f64 / total as f64)
}
