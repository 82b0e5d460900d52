//! The two benchmarks on low-dimensional observations: a 2-DoF arm that must
//! touch a switch target before the true target, and a planar pick-and-place.
//! Both are deterministic with fixed initial states.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::mdp::{rollout, ActionId, Environment, Observation, StochasticPolicy, UniformPolicy};
use crate::rng;

/// Joint increments in radians, shared by both joints.
pub const JOINT_INCREMENTS: [f64; 5] = [-0.0875, -0.0175, 0.0, 0.0175, 0.0875];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwiceReachConfig {
    pub link_lengths: [f64; 2],
    pub first_target: [f64; 2],
    pub second_target: [f64; 2],
    pub reach_threshold: f64,
    pub reach_bonus: f64,
}

impl Default for TwiceReachConfig {
    fn default() -> Self {
        let radius = 0.6830;
        let angle = PI / 3.0;
        Self {
            link_lengths: [0.3415, 0.3415],
            first_target: [radius * angle.cos(), radius * angle.sin()],
            second_target: [0.6830, 0.0],
            reach_threshold: 0.2,
            reach_bonus: 5.0,
        }
    }
}

impl TwiceReachConfig {
    /// End-effector position for the given joint angles.
    pub fn tip(&self, theta: [f64; 2]) -> [f64; 2] {
        let [l1, l2] = self.link_lengths;
        [
            l1 * theta[0].cos() + l2 * (theta[0] + theta[1]).cos(),
            l1 * theta[0].sin() + l2 * (theta[0] + theta[1]).sin(),
        ]
    }

    fn tip_from_trig(&self, s1: f64, c1: f64, s2: f64, c2: f64) -> [f64; 2] {
        let [l1, l2] = self.link_lengths;
        // cos/sin of theta1 + theta2 by the angle-sum identities
        let c12 = c1 * c2 - s1 * s2;
        let s12 = s1 * c2 + c1 * s2;
        [l1 * c1 + l2 * c12, l1 * s1 + l2 * s12]
    }

    /// Evaluation reward of an observation: negative L1 distance to the
    /// phase-appropriate target plus the bonus inside the reach threshold.
    pub fn reward_of(&self, obs: &Observation) -> f64 {
        let f = obs.features();
        let tip = self.tip_from_trig(f[0], f[1], f[2], f[3]);
        let target = if f[4] >= 0.5 {
            self.second_target
        } else {
            self.first_target
        };
        let l1 = (target[0] - tip[0]).abs() + (target[1] - tip[1]).abs();
        let bonus = if dist(tip, target) < self.reach_threshold {
            self.reach_bonus
        } else {
            0.0
        };
        -l1 + bonus
    }

    /// Post-switch phase and tip within the threshold of the second target.
    pub fn is_goal(&self, obs: &Observation) -> bool {
        let f = obs.features();
        if f.len() < 5 || f[4] < 0.5 {
            return false;
        }
        let tip = self.tip_from_trig(f[0], f[1], f[2], f[3]);
        dist(tip, self.second_target) < self.reach_threshold
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Clone, Debug)]
pub struct TwiceReachEnv {
    pub config: TwiceReachConfig,
    pub joint_angles: [f64; 2],
    /// False until the tip first comes within the threshold of the first target.
    pub switched: bool,
}

impl TwiceReachEnv {
    pub const ACTIONS: usize = 2 * JOINT_INCREMENTS.len();
    pub const OBS_DIM: usize = 5;

    pub fn new(config: TwiceReachConfig) -> Self {
        Self {
            config,
            joint_angles: [0.0, 0.0],
            switched: false,
        }
    }

    pub fn tip(&self) -> [f64; 2] {
        self.config.tip(self.joint_angles)
    }

    pub fn observation(&self) -> Observation {
        let [t1, t2] = self.joint_angles;
        Observation::new(vec![
            t1.sin(),
            t1.cos(),
            t2.sin(),
            t2.cos(),
            if self.switched { 1.0 } else { 0.0 },
        ])
        .expect("trigonometric features are finite")
    }

    /// `(joint, increment)` for an action index.
    pub fn decode(action: ActionId) -> (usize, f64) {
        let i = action.index();
        (i / JOINT_INCREMENTS.len(), JOINT_INCREMENTS[i % JOINT_INCREMENTS.len()])
    }
}

impl Environment for TwiceReachEnv {
    fn action_count(&self) -> usize {
        Self::ACTIONS
    }

    fn observation_dim(&self) -> usize {
        Self::OBS_DIM
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.joint_angles = [0.0, 0.0];
        self.switched = false;
        self.observation()
    }

    fn step(&mut self, action: ActionId) -> Result<(Observation, f64)> {
        if action.index() >= Self::ACTIONS {
            return contract(format!(
                "twice-reach action {} out of range",
                action.index()
            ));
        }
        let (joint, inc) = Self::decode(action);
        self.joint_angles[joint] = wrap_angle(self.joint_angles[joint] + inc);
        if !self.switched && dist(self.tip(), self.config.first_target) < self.config.reach_threshold {
            self.switched = true;
        }
        let obs = self.observation();
        let r = self.config.reward_of(&obs);
        Ok((obs, r))
    }
}

/// Unit direction vectors, counter-clockwise from east.
const DIRECTIONS: [[f64; 2]; 8] = {
    const D: f64 = std::f64::consts::FRAC_1_SQRT_2;
    [
        [1.0, 0.0],
        [D, D],
        [0.0, 1.0],
        [-D, D],
        [-1.0, 0.0],
        [-D, -D],
        [0.0, -1.0],
        [D, -D],
    ]
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PickPlaceConfig {
    pub hand_start: [f64; 2],
    pub block_start: [f64; 2],
    pub goal: [f64; 2],
    pub step_sizes: [f64; 2],
    pub pick_radius: f64,
    /// `(distance, bonus)` pairs; the largest bonus whose distance bound holds applies.
    pub place_bonus: [(f64, f64); 2],
    pub goal_threshold: f64,
}

impl Default for PickPlaceConfig {
    fn default() -> Self {
        Self {
            hand_start: [0.1, 0.2],
            block_start: [0.8, 0.6],
            goal: [0.2, 0.8],
            step_sizes: [0.7, 0.2],
            pick_radius: 0.1,
            place_bonus: [(0.1, 1.0), (0.05, 2.0)],
            goal_threshold: 0.1,
        }
    }
}

impl PickPlaceConfig {
    /// `r_r + r_d + r_p` from an observation.
    pub fn reward_of(&self, obs: &Observation) -> f64 {
        let f = obs.features();
        let hand = [f[0], f[1]];
        let block = [f[2], f[3]];
        let goal = [f[4], f[5]];
        let reach = -((hand[0] - block[0]).abs() + (hand[1] - block[1]).abs());
        let distance = -((block[0] - goal[0]).abs() + (block[1] - goal[1]).abs());
        let d = dist(block, goal);
        let place = self
            .place_bonus
            .iter()
            .filter(|(bound, _)| d < *bound)
            .map(|(_, b)| *b)
            .fold(0.0, f64::max);
        reach + distance + place
    }

    pub fn is_goal(&self, obs: &Observation) -> bool {
        let f = obs.features();
        f.len() >= 6 && dist([f[2], f[3]], [f[4], f[5]]) < self.goal_threshold
    }
}

#[derive(Clone, Debug)]
pub struct PickPlaceEnv {
    pub config: PickPlaceConfig,
    pub hand: [f64; 2],
    pub block: [f64; 2],
    pub grasping: bool,
}

impl PickPlaceEnv {
    pub const ACTIONS: usize = 18;
    pub const PICK_OR_PLACE: usize = 16;
    pub const STOP: usize = 17;
    pub const OBS_DIM: usize = 7;

    pub fn new(config: PickPlaceConfig) -> Self {
        let hand = config.hand_start;
        let block = config.block_start;
        Self {
            config,
            hand,
            block,
            grasping: false,
        }
    }

    /// Movement action index for `direction` (0..8, counter-clockwise from
    /// east) and step-size level (0 = large, 1 = small).
    pub fn move_action(direction: usize, level: usize) -> ActionId {
        ActionId::raw(level * 8 + direction)
    }

    pub fn observation(&self) -> Observation {
        let g = self.config.goal;
        Observation::new(vec![
            self.hand[0],
            self.hand[1],
            self.block[0],
            self.block[1],
            g[0],
            g[1],
            if self.grasping { 1.0 } else { 0.0 },
        ])
        .expect("positions are finite")
    }
}

impl Environment for PickPlaceEnv {
    fn action_count(&self) -> usize {
        Self::ACTIONS
    }

    fn observation_dim(&self) -> usize {
        Self::OBS_DIM
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.hand = self.config.hand_start;
        self.block = self.config.block_start;
        self.grasping = false;
        self.observation()
    }

    fn step(&mut self, action: ActionId) -> Result<(Observation, f64)> {
        let a = action.index();
        match a {
            0..=15 => {
                let dir = DIRECTIONS[a % 8];
                let size = self.config.step_sizes[a / 8];
                for k in 0..2 {
                    self.hand[k] = (self.hand[k] + size * dir[k]).clamp(0.0, 1.0);
                }
                if self.grasping {
                    self.block = self.hand;
                }
            }
            Self::PICK_OR_PLACE => {
                if self.grasping {
                    self.grasping = false;
                } else if dist(self.hand, self.block) < self.config.pick_radius {
                    self.grasping = true;
                    self.block = self.hand;
                }
            }
            Self::STOP => {}
            _ => return contract(format!("pick-and-place action {a} out of range")),
        }
        let obs = self.observation();
        let r = self.config.reward_of(&obs);
        Ok((obs, r))
    }
}

/// Benchmark selection plus geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    TwiceReach(#[serde(default)] TwiceReachConfig),
    PickPlace(#[serde(default)] PickPlaceConfig),
}

impl EnvSpec {
    pub fn twice_reach() -> Self {
        Self::TwiceReach(TwiceReachConfig::default())
    }

    pub fn pick_place() -> Self {
        Self::PickPlace(PickPlaceConfig::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TwiceReach(_) => "twice_reach",
            Self::PickPlace(_) => "pick_place",
        }
    }

    pub fn build(&self) -> AnyEnv {
        match self {
            Self::TwiceReach(c) => AnyEnv::TwiceReach(TwiceReachEnv::new(c.clone())),
            Self::PickPlace(c) => AnyEnv::PickPlace(PickPlaceEnv::new(c.clone())),
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            Self::TwiceReach(_) => TwiceReachEnv::ACTIONS,
            Self::PickPlace(_) => PickPlaceEnv::ACTIONS,
        }
    }

    pub fn observation_dim(&self) -> usize {
        match self {
            Self::TwiceReach(_) => TwiceReachEnv::OBS_DIM,
            Self::PickPlace(_) => PickPlaceEnv::OBS_DIM,
        }
    }

    /// Goal predicate on an observation.
    pub fn is_goal(&self, obs: &Observation) -> bool {
        match self {
            Self::TwiceReach(c) => c.is_goal(obs),
            Self::PickPlace(c) => c.is_goal(obs),
        }
    }

    /// Evaluation reward recomputed from an observation.
    pub fn reward_of(&self, obs: &Observation) -> f64 {
        match self {
            Self::TwiceReach(c) => c.reward_of(obs),
            Self::PickPlace(c) => c.reward_of(obs),
        }
    }
}

/// Either benchmark behind one type.
#[derive(Clone, Debug)]
pub enum AnyEnv {
    TwiceReach(TwiceReachEnv),
    PickPlace(PickPlaceEnv),
}

impl Environment for AnyEnv {
    fn action_count(&self) -> usize {
        match self {
            Self::TwiceReach(e) => e.action_count(),
            Self::PickPlace(e) => e.action_count(),
        }
    }

    fn observation_dim(&self) -> usize {
        match self {
            Self::TwiceReach(e) => e.observation_dim(),
            Self::PickPlace(e) => e.observation_dim(),
        }
    }

    fn reset(&mut self, seed: u64) -> Observation {
        match self {
            Self::TwiceReach(e) => e.reset(seed),
            Self::PickPlace(e) => e.reset(seed),
        }
    }

    fn step(&mut self, action: ActionId) -> Result<(Observation, f64)> {
        match self {
            Self::TwiceReach(e) => e.step(action),
            Self::PickPlace(e) => e.step(action),
        }
    }
}

/// Mean total evaluation reward of uniformly random rollouts: the zero point
/// of scaled performance.
pub fn random_policy_baseline(spec: &EnvSpec, episodes: usize, horizon: usize, seed: u64) -> Result<f64> {
    if episodes == 0 {
        return contract("random baseline needs at least one episode");
    }
    let mut env = spec.build();
    let policy = UniformPolicy {
        action_count: spec.action_count(),
    };
    let mut total = 0.0;
    for ep in 0..episodes {
        let s = rng::derive_seed(seed, &[rng::TAG_RANDOM_BASELINE, ep as u64]);
        total += rollout(&mut env, &policy, horizon, s)?.total_eval_reward();
    }
    Ok(total / episodes as f64)
}

/// Mean return and goal rate of a batch of evaluation rollouts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    /// Fraction of episodes whose final state passes the goal predicate.
    pub success_rate: f64,
}

/// Roll `policy` out `episodes` times for `horizon` steps.
pub fn evaluate<P: StochasticPolicy + ?Sized>(
    spec: &EnvSpec,
    policy: &P,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Evaluation> {
    if episodes == 0 {
        return contract("evaluation needs at least one episode");
    }
    let mut env = spec.build();
    let mut total = 0.0;
    let mut hits = 0usize;
    for ep in 0..episodes {
        let s = rng::derive_seed(seed, &[rng::TAG_EVAL, ep as u64]);
        let traj = rollout(&mut env, policy, horizon, s)?;
        total += traj.total_eval_reward();
        if traj.final_state().is_some_and(|o| spec.is_goal(o)) {
            hits += 1;
        }
    }
    Ok(Evaluation {
        mean_return: total / episodes as f64,
        success_rate: hits as f64 / episodes as f64,
    })
}
