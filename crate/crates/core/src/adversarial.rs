//! The demonstration and goal discriminators, their losses and updates, and
//! the composite reward
//! `r(s') = -ln(1 - D_D(s')) - ln(1 - D_G(s'))`
//! with both outputs clamped to `[eps, 1 - eps]`.
//!
//! State-only discriminators look at the state a transition lands in, the
//! same state the reward is computed from.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::mdp::{Observation, ReplayMemory, Trajectory, Transition};
use crate::nn::{ClampedBinaryCrossEntropy, Mlp, MlpSpec, OutputActivation, RmsProp, RmsPropConfig};
use crate::rng::{self, Rng};

/// Clamp applied to discriminator outputs before any logarithm.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorVariant {
    /// Both discriminators, both trained adversarially.
    Full,
    /// Demonstration discriminator only (plain adversarial imitation).
    NoGoal,
    /// Goal discriminator only.
    NoDemo,
    /// Demonstration discriminator over `(s, a)` plus the goal discriminator.
    DemoStateAction,
    /// Goal discriminator pre-trained as a static classifier and frozen.
    FixedGoal,
}

impl DiscriminatorVariant {
    pub const ALL: [DiscriminatorVariant; 5] = [
        Self::Full,
        Self::NoGoal,
        Self::NoDemo,
        Self::DemoStateAction,
        Self::FixedGoal,
    ];

    pub fn has_demo(self) -> bool {
        self != Self::NoDemo
    }

    pub fn has_goal(self) -> bool {
        self != Self::NoGoal
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoGoal => "no_goal",
            Self::NoDemo => "no_demo",
            Self::DemoStateAction => "demo_state_action",
            Self::FixedGoal => "fixed_goal",
        }
    }
}

/// Demonstration trajectories (the set `M_D`).
#[derive(Clone, Debug, PartialEq)]
pub struct DemoStore {
    pub trajectories: Vec<Trajectory>,
}

impl DemoStore {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        Self { trajectories }
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flat_map(|t| t.transitions.iter())
    }

    pub fn len(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean total evaluation reward per trajectory.
    pub fn mean_return(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.trajectories
            .iter()
            .map(Trajectory::total_eval_reward)
            .sum::<f64>()
            / self.trajectories.len() as f64
    }

    /// Whether the state `traj`/`step` lands in equals `state` exactly.
    pub fn contains_state(&self, traj: usize, step: usize, state: &Observation) -> bool {
        self.trajectories
            .get(traj)
            .and_then(|t| t.transitions.get(step))
            .is_some_and(|t| &t.next_state == state)
    }
}

/// A labeled goal: the state reached by step `step` of demonstration `traj`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalLabel {
    pub traj: usize,
    pub step: usize,
    pub state: Observation,
}

/// Labeled goal states (`M_G`), each a state of the demonstrations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalLabelSet {
    pub strategy: String,
    pub goals: Vec<GoalLabel>,
}

impl GoalLabelSet {
    /// Build a label set, checking every label against the demonstrations.
    pub fn new(strategy: impl Into<String>, goals: Vec<GoalLabel>, demos: &DemoStore) -> Result<Self> {
        for g in &goals {
            if !demos.contains_state(g.traj, g.step, &g.state) {
                return contract(format!(
                    "goal label ({}, {}) is not a demonstration state",
                    g.traj, g.step
                ));
            }
        }
        Ok(Self {
            strategy: strategy.into(),
            goals,
        })
    }

    pub fn empty() -> Self {
        Self {
            strategy: String::new(),
            goals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &Observation> {
        self.goals.iter().map(|g| &g.state)
    }

    /// Sidecar JSON: `{"strategy": str, "goals": [{"traj", "step", "state"}]}`.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    /// Parse a sidecar and re-check it against `demos`.
    pub fn read_json<R: Read>(r: R, demos: &DemoStore) -> Result<Self> {
        let raw: GoalLabelSet = serde_json::from_reader(r)?;
        GoalLabelSet::new(raw.strategy, raw.goals, demos)
    }
}

/// `-ln(1 - D)` with `D` clamped to `[eps, 1 - eps]`.
pub fn reward_term(d: f64, eps: f64) -> f64 {
    -(1.0 - d.clamp(eps, 1.0 - eps)).ln()
}

/// Composite reward from whichever discriminator outputs are present.
pub fn reward_from_outputs(d_demo: Option<f64>, d_goal: Option<f64>, eps: f64) -> f64 {
    d_demo.map_or(0.0, |d| reward_term(d, eps)) + d_goal.map_or(0.0, |d| reward_term(d, eps))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrail {
    pub demo: Vec<f64>,
    pub goal: Vec<f64>,
    pub steps: usize,
}

impl LossTrail {
    pub fn mean_demo(&self) -> Option<f64> {
        mean(&self.demo)
    }

    pub fn mean_goal(&self) -> Option<f64> {
        mean(&self.goal)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// The discriminator pair. The two networks never share parameters.
#[derive(Clone, Debug)]
pub struct DiscriminatorPair {
    pub variant: DiscriminatorVariant,
    pub eps: f64,
    pub action_count: usize,
    pub demo: Option<Mlp>,
    pub goal: Option<Mlp>,
    demo_opt: Option<RmsProp>,
    goal_opt: Option<RmsProp>,
    goal_pretrained: bool,
}

impl DiscriminatorPair {
    /// Sigmoid MLPs `[obs (+ actions), hidden.., 1]` for the active
    /// discriminators.
    pub fn new(
        variant: DiscriminatorVariant,
        obs_dim: usize,
        action_count: usize,
        hidden: &[usize],
        opt: RmsPropConfig,
        eps: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return config("discriminator clamp epsilon must lie in (0, 0.5)");
        }
        let demo_in = if variant == DiscriminatorVariant::DemoStateAction {
            obs_dim + action_count
        } else {
            obs_dim
        };
        let demo = if variant.has_demo() {
            Some(Mlp::new(MlpSpec::with_hidden(demo_in, hidden, 1, OutputActivation::Sigmoid)?, rng))
        } else {
            None
        };
        let goal = if variant.has_goal() {
            Some(Mlp::new(MlpSpec::with_hidden(obs_dim, hidden, 1, OutputActivation::Sigmoid)?, rng))
        } else {
            None
        };
        let demo_opt = demo.as_ref().map(|m| RmsProp::new(opt, &m.params)).transpose()?;
        let goal_opt = goal.as_ref().map(|m| RmsProp::new(opt, &m.params)).transpose()?;
        Ok(Self {
            variant,
            eps,
            action_count,
            demo,
            goal,
            demo_opt,
            goal_opt,
            goal_pretrained: false,
        })
    }

    /// Input of the demonstration discriminator for a transition.
    pub fn demo_input(&self, t: &Transition) -> Vec<f64> {
        demo_input_of(self.variant, self.action_count, t)
    }

    fn clamp(&self, d: f64) -> f64 {
        d.clamp(self.eps, 1.0 - self.eps)
    }

    /// Clamped `D_D` for a transition.
    pub fn demo_output(&self, t: &Transition) -> Result<Option<f64>> {
        self.demo
            .as_ref()
            .map(|m| Ok(self.clamp(m.forward_one(&self.demo_input(t))?[0])))
            .transpose()
    }

    /// Clamped `D_G` for a state.
    pub fn goal_output(&self, state: &Observation) -> Result<Option<f64>> {
        self.goal
            .as_ref()
            .map(|m| Ok(self.clamp(m.forward_one(state.features())?[0])))
            .transpose()
    }

    /// Composite reward of a transition; each term lies in
    /// `[-ln(1 - eps), -ln(eps)]`.
    pub fn reward(&self, t: &Transition) -> Result<f64> {
        let d_demo = self.demo_output(t)?;
        let d_goal = self.goal_output(&t.next_state)?;
        Ok(reward_from_outputs(d_demo, d_goal, self.eps))
    }

    /// `mean_gen[-ln(1 - D_D)] + mean_demo[-ln D_D]` over discriminator inputs.
    pub fn demo_disc_loss(&self, generated: &[Vec<f64>], demos: &[Vec<f64>]) -> Result<f64> {
        let net = self
            .demo
            .as_ref()
            .ok_or_else(|| Error::Unsupported("variant has no demonstration discriminator".into()))?;
        two_sided_loss(net, generated, demos, self.eps)
    }

    /// `mean_gen[-ln(1 - D_G)] + mean_goal[-ln D_G]` over states.
    pub fn goal_disc_loss(&self, generated: &[Vec<f64>], goals: &[Vec<f64>]) -> Result<f64> {
        let net = self
            .goal
            .as_ref()
            .ok_or_else(|| Error::Unsupported("variant has no goal discriminator".into()))?;
        two_sided_loss(net, generated, goals, self.eps)
    }

    /// Whether the goal discriminator receives adversarial updates.
    pub fn goal_trainable(&self) -> bool {
        self.goal.is_some() && self.variant != DiscriminatorVariant::FixedGoal
    }

    pub fn goal_pretrained(&self) -> bool {
        self.goal_pretrained
    }

    /// `J` sweeps over the replay memory. Each minibatch of generated
    /// transitions is paired with equally sized draws (with replacement)
    /// from the demonstrations and the goal labels; both discriminators then
    /// take one step on `J_D + J_G` (parameters are disjoint, so this is one
    /// step per network).
    pub fn update(
        &mut self,
        memory: &ReplayMemory,
        demos: &DemoStore,
        goals: &GoalLabelSet,
        sweeps: usize,
        seed: u64,
    ) -> Result<LossTrail> {
        if self.demo.is_some() && demos.is_empty() {
            return config("demonstration discriminator is active but there are no demonstrations");
        }
        if self.goal.is_some() && goals.is_empty() {
            return config("goal discriminator is active but there are no goal labels");
        }
        let demo_inputs: Vec<Vec<f64>> = demos.transitions().map(|t| self.demo_input(t)).collect();
        let goal_inputs: Vec<&[f64]> = goals.states().map(Observation::features).collect();
        let mut trail = LossTrail::default();
        let mut draw = rng::rng_from(seed, &[rng::TAG_DISC]);
        for j in 0..sweeps {
            let plan = memory.shuffled_minibatches(rng::derive_seed(seed, &[rng::TAG_DISC, j as u64]));
            for batch in &plan.batches {
                let n = batch.len();
                let gen: Vec<&Transition> = batch.iter().map(|&i| memory.get(i).unwrap()).collect();
                if let Some(net) = self.demo.as_mut() {
                    let gen_x: Vec<Vec<f64>> = gen.iter().map(|t| demo_input_of(self.variant, self.action_count, t)).collect();
                    let ref_x: Vec<&[f64]> = (0..n)
                        .map(|_| demo_inputs[draw.gen_range(0..demo_inputs.len())].as_slice())
                        .collect();
                    let (loss, grads) = two_sided_grad(net, &gen_x, &ref_x, self.eps)?;
                    self.demo_opt.as_mut().unwrap().step(&mut net.params, grads)?;
                    trail.demo.push(loss);
                }
                if let Some(net) = self.goal.as_mut() {
                    let gen_x: Vec<&[f64]> = gen.iter().map(|t| t.next_state.features()).collect();
                    let ref_x: Vec<&[f64]> = (0..n)
                        .map(|_| goal_inputs[draw.gen_range(0..goal_inputs.len())])
                        .collect();
                    let (loss, grads) = two_sided_grad(net, &gen_x, &ref_x, self.eps)?;
                    if self.variant != DiscriminatorVariant::FixedGoal {
                        self.goal_opt.as_mut().unwrap().step(&mut net.params, grads)?;
                    }
                    trail.goal.push(loss);
                }
                trail.steps += 1;
            }
        }
        Ok(trail)
    }

    /// Train the frozen goal classifier on goal states against negatives
    /// (states visited by a random policy), then stop updating it.
    pub fn pretrain_fixed_goal(
        &mut self,
        goals: &GoalLabelSet,
        negatives: &[Observation],
        steps: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if self.variant != DiscriminatorVariant::FixedGoal {
            return Err(Error::Unsupported(format!(
                "goal pre-training applies to the fixed_goal variant, not {}",
                self.variant.name()
            )));
        }
        if goals.is_empty() || negatives.is_empty() {
            return config("goal pre-training needs goal labels and negatives");
        }
        let pos: Vec<&[f64]> = goals.states().map(Observation::features).collect();
        let neg: Vec<&[f64]> = negatives.iter().map(Observation::features).collect();
        let net = self.goal.as_mut().expect("fixed_goal has a goal discriminator");
        let opt = self.goal_opt.as_mut().unwrap();
        let mut draw = rng::rng_from(seed, &[rng::TAG_NEGATIVES]);
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let gen_x: Vec<&[f64]> = (0..batch_size).map(|_| neg[draw.gen_range(0..neg.len())]).collect();
            let ref_x: Vec<&[f64]> = (0..batch_size).map(|_| pos[draw.gen_range(0..pos.len())]).collect();
            let (loss, grads) = two_sided_grad(net, &gen_x, &ref_x, self.eps)?;
            opt.step(&mut net.params, grads)?;
            losses.push(loss);
        }
        self.goal_pretrained = true;
        Ok(losses)
    }

    /// Overwrite every stored reward from the current discriminators.
    pub fn fill_rewards(&self, memory: &mut ReplayMemory) -> Result<()> {
        for t in memory.iter_mut() {
            let r = self.reward(t)?;
            t.reward = Some(r);
        }
        Ok(())
    }
}

fn demo_input_of(variant: DiscriminatorVariant, action_count: usize, t: &Transition) -> Vec<f64> {
    if variant == DiscriminatorVariant::DemoStateAction {
        let mut x = t.state.features().to_vec();
        let mut onehot = vec![0.0; action_count];
        onehot[t.action.index()] = 1.0;
        x.extend(onehot);
        x
    } else {
        t.next_state.features().to_vec()
    }
}

fn stack<'a, A: AsRef<[f64]>, B: AsRef<[f64]>>(generated: &'a [A], reference: &'a [B]) -> (Vec<&'a [f64]>, Vec<bool>) {
    let mut inputs: Vec<&[f64]> = generated.iter().map(AsRef::as_ref).collect();
    inputs.extend(reference.iter().map(AsRef::as_ref));
    let mut labels = vec![false; generated.len()];
    labels.extend(std::iter::repeat(true).take(reference.len()));
    (inputs, labels)
}

fn two_sided_loss<A: AsRef<[f64]>, B: AsRef<[f64]>>(net: &Mlp, generated: &[A], reference: &[B], eps: f64) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        return contract("discriminator loss needs nonempty generated and reference batches");
    }
    let (inputs, labels) = stack(generated, reference);
    let outputs = net.forward(&inputs)?;
    Ok(crate::nn::BatchLoss::evaluate(&ClampedBinaryCrossEntropy { labels: &labels, eps }, &outputs).0)
}

fn two_sided_grad<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    net: &Mlp,
    generated: &[A],
    reference: &[B],
    eps: f64,
) -> Result<(f64, crate::nn::ParamSet)> {
    if generated.is_empty() || reference.is_empty() {
        return contract("discriminator loss needs nonempty generated and reference batches");
    }
    let (inputs, labels) = stack(generated, reference);
    let (loss, grads) = net.loss_and_grad(&inputs, &ClampedBinaryCrossEntropy { labels: &labels, eps })?;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("discriminator loss {loss} is not finite")));
    }
    Ok((loss, grads))
}
