//! Environment-agnostic MDP plumbing: observations, actions, trajectories,
//! replay memory and seeded rollouts.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::rng::{self, Rng};

/// A real-valued feature vector. Every element is finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if let Some(i) = features.iter().position(|x| !x.is_finite()) {
            return contract(format!("observation feature {i} is not finite"));
        }
        Ok(Self(features))
    }

    pub fn features(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Observation {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Observation::new(v)
    }
}

impl From<Observation> for Vec<f64> {
    fn from(o: Observation) -> Self {
        o.0
    }
}

/// Index of a discrete action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(usize);

impl ActionId {
    /// Checked constructor against an action count.
    pub fn new(index: usize, action_count: usize) -> Result<Self> {
        if index >= action_count {
            return contract(format!(
                "action index {index} out of range for {action_count} actions"
            ));
        }
        Ok(Self(index))
    }

    /// Unchecked constructor; the environment validates on `step`.
    pub const fn raw(index: usize) -> Self {
        Self(index)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// One `(s, a, s')` interaction. `reward` is filled in from the
/// discriminators; `eval_reward` is the environment's own score and never
/// feeds a training signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: ActionId,
    pub next_state: Observation,
    pub reward: Option<f64>,
    pub eval_reward: f64,
}

impl Transition {
    pub fn new(state: Observation, action: ActionId, next_state: Observation, eval_reward: f64) -> Self {
        Self {
            state,
            action,
            next_state,
            reward: None,
            eval_reward,
        }
    }

    /// The filled-in reward, or a contract error when absent.
    pub fn filled_reward(&self) -> Result<f64> {
        match self.reward {
            Some(r) if r.is_finite() => Ok(r),
            Some(r) => contract(format!("transition reward {r} is not finite")),
            None => contract("transition reward has not been filled"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub episode_seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Sum of the evaluation rewards along the trajectory.
    pub fn total_eval_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.eval_reward).sum()
    }

    /// True when every `next_state` equals the following `state`.
    pub fn is_chained(&self) -> bool {
        self.transitions
            .windows(2)
            .all(|w| w[0].next_state == w[1].state)
    }

    /// The state reached at the end of the trajectory.
    pub fn final_state(&self) -> Option<&Observation> {
        self.transitions.last().map(|t| &t.next_state)
    }
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    minibatch_size: usize,
    entries: VecDeque<Transition>,
}

impl ReplayMemory {
    /// `capacity` must be a positive multiple of `minibatch_size`.
    pub fn new(capacity: usize, minibatch_size: usize) -> Result<Self> {
        if minibatch_size == 0 || capacity == 0 {
            return config("replay capacity and minibatch size must be positive");
        }
        if capacity % minibatch_size != 0 {
            return config(format!(
                "replay capacity {capacity} is not a multiple of minibatch size {minibatch_size}"
            ));
        }
        Ok(Self {
            capacity,
            minibatch_size,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn minibatch_size(&self) -> usize {
        self.minibatch_size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Insert, evicting the oldest entry when full.
    pub fn store(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.entries.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Transition> {
        self.entries.iter_mut()
    }

    /// Minibatches per sweep: `floor(len / minibatch_size)`.
    pub fn batches_per_sweep(&self) -> usize {
        self.entries.len() / self.minibatch_size
    }

    /// Seeded permutation of the stored indices cut into disjoint minibatches.
    pub fn shuffled_minibatches(&self, seed: u64) -> MinibatchPlan {
        let n = self.entries.len();
        let b = self.batches_per_sweep();
        if b == 0 {
            return MinibatchPlan {
                batches: Vec::new(),
                warning: Some(format!(
                    "replay holds {n} entries, fewer than one minibatch of {}",
                    self.minibatch_size
                )),
            };
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::rng_from(seed, &[]));
        let batches = idx
            .chunks_exact(self.minibatch_size)
            .take(b)
            .map(<[usize]>::to_vec)
            .collect();
        MinibatchPlan {
            batches,
            warning: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinibatchPlan {
    pub batches: Vec<Vec<usize>>,
    pub warning: Option<String>,
}

/// A discrete-action environment with a fixed observation width.
pub trait Environment {
    fn action_count(&self) -> usize;
    fn observation_dim(&self) -> usize;
    /// Reset to the initial state. Both benchmarks ignore the seed since
    /// their initial states are fixed.
    fn reset(&mut self, seed: u64) -> Observation;
    /// Apply an action; returns the next observation and evaluation reward.
    fn step(&mut self, action: ActionId) -> Result<(Observation, f64)>;
}

/// Draws actions from observations using caller-supplied randomness.
pub trait StochasticPolicy {
    fn action_count(&self) -> usize;
    fn act(&self, obs: &Observation, rng: &mut Rng) -> Result<ActionId>;
}

/// Uniformly random actions.
#[derive(Clone, Copy, Debug)]
pub struct UniformPolicy {
    pub action_count: usize,
}

impl StochasticPolicy for UniformPolicy {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn act(&self, _obs: &Observation, rng: &mut Rng) -> Result<ActionId> {
        Ok(ActionId::raw(rng.gen_range(0..self.action_count)))
    }
}

/// Sample an index from a probability vector.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just below 1; fall back to the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Run `policy` for exactly `horizon` steps from a fresh reset.
pub fn rollout<E, P>(env: &mut E, policy: &P, horizon: usize, seed: u64) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: StochasticPolicy + ?Sized,
{
    if policy.action_count() != env.action_count() {
        return config(format!(
            "policy has {} actions, environment has {}",
            policy.action_count(),
            env.action_count()
        ));
    }
    if horizon == 0 {
        return contract("rollout horizon must be at least 1");
    }
    let mut rng = rng::rng_from(seed, &[rng::TAG_ROLLOUT]);
    let mut state = env.reset(rng::derive_seed(seed, &[rng::TAG_INIT]));
    let mut transitions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = policy.act(&state, &mut rng)?;
        let (next_state, eval_reward) = env.step(action)?;
        transitions.push(Transition::new(state, action, next_state.clone(), eval_reward));
        state = next_state;
    }
    Ok(Trajectory {
        transitions,
        episode_seed: seed,
    })
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    s: Vec<f64>,
    a: usize,
    s2: Vec<f64>,
    r_eval: f64,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    seed: u64,
    steps: Vec<StepRecord>,
}

/// Write trajectories as JSON lines: `{"seed", "steps": [{"s","a","s2","r_eval"}]}`.
pub fn write_trajectories<W: Write>(mut w: W, trajectories: &[Trajectory]) -> Result<()> {
    for traj in trajectories {
        let rec = TrajectoryRecord {
            seed: traj.episode_seed,
            steps: traj
                .transitions
                .iter()
                .map(|t| StepRecord {
                    s: t.state.features().to_vec(),
                    a: t.action.index(),
                    s2: t.next_state.features().to_vec(),
                    r_eval: t.eval_reward,
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Inverse of [`write_trajectories`]. Blank lines are skipped.
pub fn read_trajectories<R: BufRead>(r: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line)?;
        let transitions = rec
            .steps
            .into_iter()
            .map(|s| {
                Ok(Transition::new(
                    Observation::new(s.s)?,
                    ActionId::raw(s.a),
                    Observation::new(s.s2)?,
                    s.r_eval,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Trajectory {
            transitions,
            episode_seed: rec.seed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counter environment: state is the step count, action 0 adds 1,
    /// action 1 adds 2.
    struct Counter {
        x: f64,
    }

    impl Environment for Counter {
        fn action_count(&self) -> usize {
            2
        }
        fn observation_dim(&self) -> usize {
            1
        }
        fn reset(&mut self, _seed: u64) -> Observation {
            self.x = 0.0;
            Observation::new(vec![0.0]).unwrap()
        }
        fn step(&mut self, a: ActionId) -> Result<(Observation, f64)> {
            self.x += (a.index() + 1) as f64;
            Ok((Observation::new(vec![self.x])?, -self.x))
        }
    }

    struct Always(usize, usize);
    impl StochasticPolicy for Always {
        fn action_count(&self) -> usize {
            self.1
        }
        fn act(&self, _: &Observation, _: &mut Rng) -> Result<ActionId> {
            Ok(ActionId::raw(self.0))
        }
    }

    fn tr(x: f64) -> Transition {
        Transition::new(
            Observation::new(vec![x]).unwrap(),
            ActionId::raw(0),
            Observation::new(vec![x + 1.0]).unwrap(),
            0.0,
        )
    }

    #[test]
    fn deterministic_policy_replays_dynamics() {
        let mut env = Counter { x: 0.0 };
        let traj = rollout(&mut env, &Always(0, 2), 3, 11).unwrap();
        assert_eq!(traj.len(), 3);
        let xs: Vec<f64> = traj.transitions.iter().map(|t| t.next_state.features()[0]).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0]);
        assert!(traj.is_chained());
        assert_eq!(traj.total_eval_reward(), -6.0);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mut env = Counter { x: 0.0 };
        let p = UniformPolicy { action_count: 2 };
        let a = rollout(&mut env, &p, 50, 3).unwrap();
        let b = rollout(&mut env, &p, 50, 3).unwrap();
        let c = rollout(&mut env, &p, 50, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn action_count_mismatch_is_config_error() {
        let mut env = Counter { x: 0.0 };
        let err = rollout(&mut env, &Always(0, 3), 3, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut m = ReplayMemory::new(2, 1).unwrap();
        m.store(tr(1.0));
        assert_eq!(m.len(), 1);
        m.store(tr(2.0));
        m.store(tr(3.0));
        let xs: Vec<f64> = m.iter().map(|t| t.state.features()[0]).collect();
        assert_eq!(xs, vec![2.0, 3.0]);
    }

    #[test]
    fn capacity_must_be_multiple_of_minibatch() {
        assert!(ReplayMemory::new(3000, 32).is_err());
        assert!(ReplayMemory::new(3008, 32).is_ok());
    }

    #[test]
    fn ten_episodes_of_three_hundred_fill_exactly() {
        let mut m = ReplayMemory::new(3000, 30).unwrap();
        for ep in 0..10 {
            for t in 0..300 {
                m.store(tr((ep * 300 + t) as f64));
            }
        }
        assert!(m.is_full());
        assert_eq!(m.get(0).unwrap().state.features()[0], 0.0);
    }

    #[test]
    fn minibatches_partition_indices() {
        let mut m = ReplayMemory::new(64, 32).unwrap();
        for i in 0..64 {
            m.store(tr(i as f64));
        }
        let plan = m.shuffled_minibatches(5);
        assert_eq!(plan.batches.len(), 2);
        let mut all: Vec<usize> = plan.batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..64).collect::<Vec<_>>());
        assert_eq!(plan, m.shuffled_minibatches(5));
        assert_ne!(plan, m.shuffled_minibatches(6));
    }

    #[test]
    fn undersized_memory_yields_warning() {
        let mut m = ReplayMemory::new(64, 32).unwrap();
        for i in 0..10 {
            m.store(tr(i as f64));
        }
        let plan = m.shuffled_minibatches(0);
        assert!(plan.batches.is_empty());
        assert!(plan.warning.is_some());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut env = Counter { x: 0.0 };
        let p = UniformPolicy { action_count: 2 };
        let trajs = vec![
            rollout(&mut env, &p, 4, 1).unwrap(),
            rollout(&mut env, &p, 2, 2).unwrap(),
        ];
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &trajs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"seed\":1,\"steps\":[{\"s\":[0.0],\"a\":"));
        let back = read_trajectories(buf.as_slice()).unwrap();
        assert_eq!(back, trajs);
    }

    #[test]
    fn non_finite_observation_rejected() {
        assert!(Observation::new(vec![0.0, f64::NAN]).is_err());
        assert!(ActionId::new(5, 5).is_err());
        assert!(ActionId::new(4, 5).is_ok());
    }
}
