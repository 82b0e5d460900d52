//! Demonstration sources: a teacher trained on the evaluation reward,
//! demo collection from its checkpoints, and goal labeling.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::adversarial::{DemoStore, GoalLabel, GoalLabelSet};
use crate::config::apply_override;
use crate::envs::{evaluate, EnvSpec, Evaluation};
use crate::error::{config, Error, Result};
use crate::generator::{replay_for, Generator, TeachingSignal};
use crate::mdp::{rollout, Trajectory};
use crate::nn::{Mlp, RmsPropConfig};
use crate::rng;
use crate::soft::{PreferenceFunction, SoftPolicyParams, SoftmaxPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSelectionStrategy {
    /// Every demonstration state passing the goal predicate.
    AllGoals,
    /// Final two states of the better-ranked trajectories, filtered by the
    /// goal predicate.
    LastOfBest,
    /// The latest goal state of the best trajectory that has one.
    OneBest,
}

impl GoalSelectionStrategy {
    pub const ALL: [GoalSelectionStrategy; 3] = [Self::AllGoals, Self::LastOfBest, Self::OneBest];

    pub fn name(self) -> &'static str {
        match self {
            Self::AllGoals => "all_goals",
            Self::LastOfBest => "last_of_best",
            Self::OneBest => "one_best",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown goal selection strategy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoQuality {
    /// Some trajectories reach the goal, some do not.
    Imperfect,
    /// Every trajectory reaches the goal.
    Perfect,
}

/// Whether any state of the trajectory passes the goal predicate.
pub fn reaches_goal(traj: &Trajectory, spec: &EnvSpec) -> bool {
    traj.transitions.iter().any(|t| spec.is_goal(&t.next_state))
}

/// Fraction of trajectories that reach a goal state.
pub fn goal_reach_fraction(demos: &DemoStore, spec: &EnvSpec) -> f64 {
    if demos.trajectories.is_empty() {
        return 0.0;
    }
    let hits = demos.trajectories.iter().filter(|t| reaches_goal(t, spec)).count();
    hits as f64 / demos.trajectories.len() as f64
}

/// Classify a demo set, or `None` when no trajectory reaches the goal.
pub fn audit(demos: &DemoStore, spec: &EnvSpec) -> Option<DemoQuality> {
    let f = goal_reach_fraction(demos, spec);
    if f >= 1.0 {
        Some(DemoQuality::Perfect)
    } else if f > 0.0 {
        Some(DemoQuality::Imperfect)
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub signal: TeachingSignal,
    pub soft: SoftPolicyParams,
    pub optimizer: RmsPropConfig,
    pub hidden: Vec<usize>,
    pub episodes: usize,
    pub horizon: usize,
    pub sweeps: usize,
    pub max_iterations: usize,
    pub checkpoint_every: usize,
    pub eval_episodes: usize,
    pub eval_horizon: usize,
    pub success_target: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            signal: TeachingSignal::Edpn,
            soft: SoftPolicyParams {
                eta: 0.25,
                sigma: 0.04,
                gamma: 0.95,
            },
            optimizer: RmsPropConfig::default(),
            hidden: vec![64, 64],
            episodes: 20,
            horizon: 30,
            sweeps: 4,
            max_iterations: 400,
            checkpoint_every: 5,
            eval_episodes: 50,
            eval_horizon: 30,
            success_target: 0.9,
        }
    }
}

/// A teacher run: benchmark, seed and training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachSpec {
    pub seed: u64,
    pub env: EnvSpec,
    #[serde(default)]
    pub teacher: TeacherConfig,
}

impl TeachSpec {
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let spec: Self = toml::Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        spec.teacher.soft.validate()?;
        spec.teacher.optimizer.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// A saved teacher network with its stochastic-policy evaluation.
#[derive(Clone, Debug)]
pub struct TeacherCheckpoint {
    pub iteration: usize,
    pub network: Mlp,
    pub evaluation: Evaluation,
}

/// Train a generator directly on the evaluation reward, checkpointing every
/// `checkpoint_every` iterations, until the softmax policy reaches the goal
/// in at least `success_target` of the evaluation episodes.
pub fn train_teacher(spec: &EnvSpec, cfg: &TeacherConfig, seed: u64) -> Result<Vec<TeacherCheckpoint>> {
    if cfg.episodes == 0 || cfg.horizon == 0 || cfg.checkpoint_every == 0 {
        return config("teacher episodes, horizon and checkpoint interval must be positive");
    }
    let mut gen = Generator::new(
        cfg.signal,
        cfg.soft,
        spec.observation_dim(),
        spec.action_count(),
        &cfg.hidden,
        cfg.optimizer,
        &mut rng::rng_from(seed, &[rng::TAG_INIT]),
    )?;
    let mut memory = replay_for(cfg.episodes * cfg.horizon, 32)?;
    let mut checkpoints = Vec::new();
    let mut last = None;
    for i in 0..cfg.max_iterations {
        let iter_seed = rng::derive_seed(seed, &[i as u64]);
        memory.clear();
        for traj in gen.collect(spec, cfg.episodes, cfg.horizon, iter_seed)? {
            for mut t in traj.transitions {
                t.reward = Some(t.eval_reward);
                memory.store(t);
            }
        }
        gen.train(&memory, cfg.sweeps, iter_seed)?;
        gen.sync_target();
        if (i + 1) % cfg.checkpoint_every == 0 {
            let evaluation = evaluate(
                spec,
                &gen.policy(),
                cfg.eval_episodes,
                cfg.eval_horizon,
                rng::derive_seed(seed, &[rng::TAG_EVAL, i as u64]),
            )?;
            checkpoints.push(TeacherCheckpoint {
                iteration: i + 1,
                network: gen.network().clone(),
                evaluation,
            });
            last = Some(evaluation);
            if evaluation.success_rate >= cfg.success_target {
                return Ok(checkpoints);
            }
        }
    }
    Err(Error::TeacherFailed(format!(
        "after {} iterations the teacher reaches the goal in {:.0}% of episodes (target {:.0}%)",
        cfg.max_iterations,
        100.0 * last.map_or(0.0, |e| e.success_rate),
        100.0 * cfg.success_target
    )))
}

/// Run the softmax policy of `network` for `episodes` x `steps`.
pub fn collect_demos(
    spec: &EnvSpec,
    network: &Mlp,
    soft: SoftPolicyParams,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Result<DemoStore> {
    let prefs = PreferenceFunction::Network(network.clone());
    let policy = SoftmaxPolicy { prefs: &prefs, params: soft };
    let mut env = spec.build();
    let trajectories = (0..episodes)
        .map(|m| rollout(&mut env, &policy, steps, rng::derive_seed(seed, &[rng::TAG_DEMO, m as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(DemoStore::new(trajectories))
}

/// The earliest checkpoint whose collected demos are imperfect, together
/// with those demos.
pub fn select_imperfect(
    spec: &EnvSpec,
    checkpoints: &[TeacherCheckpoint],
    soft: SoftPolicyParams,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Result<Option<(usize, DemoStore)>> {
    for (k, c) in checkpoints.iter().enumerate() {
        let demos = collect_demos(spec, &c.network, soft, episodes, steps, seed)?;
        if audit(&demos, spec) == Some(DemoQuality::Imperfect) {
            return Ok(Some((k, demos)));
        }
    }
    Ok(None)
}

/// Select goal labels from the demonstrations. `top_fraction` sets how many
/// trajectories count as best for `last_of_best` (rounded up).
pub fn label_goals(
    demos: &DemoStore,
    spec: &EnvSpec,
    strategy: GoalSelectionStrategy,
    top_fraction: f64,
) -> Result<GoalLabelSet> {
    if demos.is_empty() {
        return config("cannot label goals on an empty demonstration set");
    }
    let label = |traj: usize, step: usize| GoalLabel {
        traj,
        step,
        state: demos.trajectories[traj].transitions[step].next_state.clone(),
    };
    let is_goal = |traj: usize, step: usize| spec.is_goal(&demos.trajectories[traj].transitions[step].next_state);
    let ranked = ranked_by_return(&demos.trajectories);
    let goals: Vec<GoalLabel> = match strategy {
        GoalSelectionStrategy::AllGoals => demos
            .trajectories
            .iter()
            .enumerate()
            .flat_map(|(k, t)| (0..t.len()).map(move |s| (k, s)))
            .filter(|&(k, s)| is_goal(k, s))
            .map(|(k, s)| label(k, s))
            .collect(),
        GoalSelectionStrategy::LastOfBest => {
            let top = ((ranked.len() as f64 * top_fraction).ceil() as usize).clamp(1, ranked.len());
            let mut picked: Vec<(usize, usize)> = ranked[..top]
                .iter()
                .flat_map(|&k| {
                    let n = demos.trajectories[k].len();
                    (n.saturating_sub(2)..n).map(move |s| (k, s))
                })
                .filter(|&(k, s)| is_goal(k, s))
                .collect();
            picked.sort_unstable();
            picked.into_iter().map(|(k, s)| label(k, s)).collect()
        }
        GoalSelectionStrategy::OneBest => ranked
            .iter()
            .find_map(|&k| {
                (0..demos.trajectories[k].len())
                    .rev()
                    .find(|&s| is_goal(k, s))
                    .map(|s| label(k, s))
            })
            .into_iter()
            .collect(),
    };
    if goals.is_empty() {
        return Err(Error::EmptyGoalSelection(format!(
            "strategy {} selected no goal states; regenerate the demonstrations from a checkpoint that reaches the goal",
            strategy.name()
        )));
    }
    GoalLabelSet::new(strategy.name(), goals, demos)
}

/// Trajectory indices by total evaluation reward, best first; ties keep the
/// earlier trajectory first.
fn ranked_by_return(trajectories: &[Trajectory]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..trajectories.len()).collect();
    idx.sort_by(|&a, &b| {
        trajectories[b]
            .total_eval_reward()
            .partial_cmp(&trajectories[a].total_eval_reward())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{PickPlaceEnv, TwiceReachEnv};
    use crate::mdp::{ActionId, Environment, Transition};

    /// Scripted pick-and-place: reach the block, grasp, carry, release, idle.
    fn scripted_pick_place(stop_after: usize) -> Trajectory {
        let spec = EnvSpec::pick_place();
        let mut env = spec.build();
        let mut s = env.reset(0);
        let mv = |d, l| PickPlaceEnv::move_action(d, l);
        let mut plan = vec![
            mv(0, 0),
            mv(2, 1),
            mv(2, 1),
            ActionId::raw(PickPlaceEnv::PICK_OR_PLACE),
            mv(4, 1),
            mv(4, 1),
            mv(4, 1),
            mv(2, 1),
            ActionId::raw(PickPlaceEnv::PICK_OR_PLACE),
        ];
        plan.truncate(stop_after);
        plan.resize(12, ActionId::raw(PickPlaceEnv::STOP));
        let mut transitions = Vec::new();
        for a in plan {
            let (s2, r) = env.step(a).unwrap();
            transitions.push(Transition::new(s, a, s2.clone(), r));
            s = s2;
        }
        Trajectory { transitions, episode_seed: 0 }
    }

    fn mixed_store() -> DemoStore {
        // 0 succeeds, 1 stops before releasing near the goal, 2 never grasps.
        DemoStore::new(vec![scripted_pick_place(9), scripted_pick_place(7), scripted_pick_place(3)])
    }

    #[test]
    fn strategies_obey_subset_and_cardinality() {
        let spec = EnvSpec::pick_place();
        let demos = mixed_store();
        assert_eq!(audit(&demos, &spec), Some(DemoQuality::Imperfect));
        let all = label_goals(&demos, &spec, GoalSelectionStrategy::AllGoals, 0.5).unwrap();
        let last = label_goals(&demos, &spec, GoalSelectionStrategy::LastOfBest, 0.5).unwrap();
        let one = label_goals(&demos, &spec, GoalSelectionStrategy::OneBest, 0.5).unwrap();
        assert_eq!(one.len(), 1);
        for set in [&all, &last, &one] {
            assert!(set.states().all(|s| spec.is_goal(s)));
            for g in &set.goals {
                assert!(all.goals.contains(g));
            }
        }
        // Last two frames of the two best trajectories.
        assert!(last.goals.iter().all(|g| g.step >= 10));
        assert_eq!(one.goals[0].step, 11);
    }

    #[test]
    fn empty_selection_is_explicit() {
        let spec = EnvSpec::pick_place();
        let demos = DemoStore::new(vec![scripted_pick_place(3)]);
        assert_eq!(audit(&demos, &spec), None);
        let err = label_goals(&demos, &spec, GoalSelectionStrategy::AllGoals, 0.5).unwrap_err();
        assert!(matches!(err, Error::EmptyGoalSelection(_)));
    }

    #[test]
    fn ranking_is_stable_on_ties() {
        let t = scripted_pick_place(9);
        assert_eq!(ranked_by_return(&[t.clone(), t.clone(), t]), vec![0, 1, 2]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in GoalSelectionStrategy::ALL {
            assert_eq!(GoalSelectionStrategy::parse(s.name()).unwrap(), s);
        }
        assert!(GoalSelectionStrategy::parse("best").is_err());
    }

    #[test]
    fn collect_shapes_and_determinism() {
        let spec = EnvSpec::twice_reach();
        let net = Mlp::new(
            crate::nn::MlpSpec::with_hidden(
                TwiceReachEnv::OBS_DIM,
                &[8],
                TwiceReachEnv::ACTIONS,
                crate::nn::OutputActivation::Identity,
            )
            .unwrap(),
            &mut rng::rng_from(0, &[]),
        );
        let soft = SoftPolicyParams::new(0.25, 0.04, 0.9).unwrap();
        let a = collect_demos(&spec, &net, soft, 5, 30, 11).unwrap();
        assert_eq!(a.len(), 150);
        assert_eq!(a, collect_demos(&spec, &net, soft, 5, 30, 11).unwrap());
    }
}
