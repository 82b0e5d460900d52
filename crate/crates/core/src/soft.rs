//! The generator's core: action preferences, the softmax policy and soft
//! value they induce, the tabular preference operator, the sampled
//! entropy-regularized teaching signal, and the Q-learning baseline target.
//!
//! With inverse temperature `eta` and entropy weight `sigma` the effective
//! inverse temperature is `eta' = eta / (1 + sigma * eta)`:
//!
//! ```text
//! pi(a|s) = softmax_a(eta' P(s, a))
//! V(s)    = (1/eta') ln sum_a exp(eta' P(s, a))
//! y       = (1/(1 + sigma eta)) (P(s, a) - V(s)) + r + gamma V(s')
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::mdp::{sample_categorical, ActionId, Observation, StochasticPolicy, Transition};
use crate::nn::{Mlp, RmsProp, SelectedSquaredError, StepInfo};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftPolicyParams {
    pub eta: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl SoftPolicyParams {
    pub fn new(eta: f64, sigma: f64, gamma: f64) -> Result<Self> {
        let p = Self { eta, sigma, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return config(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return config(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return config(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        Ok(())
    }

    /// `eta / (1 + sigma * eta)`.
    pub fn effective_eta(&self) -> f64 {
        self.eta / (1.0 + self.sigma * self.eta)
    }

    /// `1 / (1 + sigma * eta)`, the weight on the advantage term.
    pub fn advantage_weight(&self) -> f64 {
        1.0 / (1.0 + self.sigma * self.eta)
    }
}

/// Soft value of one preference row, via max-subtracted log-sum-exp.
pub fn soft_value_of(prefs: &[f64], params: &SoftPolicyParams) -> f64 {
    let k = params.effective_eta();
    let m = prefs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = prefs.iter().map(|p| (k * (p - m)).exp()).sum();
    m + s.ln() / k
}

/// Softmax policy of one preference row.
pub fn policy_of(prefs: &[f64], params: &SoftPolicyParams) -> Vec<f64> {
    let k = params.effective_eta();
    let m = prefs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = prefs.iter().map(|p| (k * (p - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// First index of the maximum (lowest index wins ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// A preference table indexed by `(state, action)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPreferences {
    pub action_count: usize,
    pub table: Vec<Vec<f64>>,
}

impl TabularPreferences {
    pub fn zeros(state_count: usize, action_count: usize) -> Self {
        Self {
            action_count,
            table: vec![vec![0.0; action_count]; state_count],
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s]
    }
}

/// `P(s, a)` backed by a table or a network.
///
/// The tabular backend reads the state index from the first feature of the
/// observation.
#[derive(Clone, Debug, PartialEq)]
pub enum PreferenceFunction {
    Tabular(TabularPreferences),
    Network(Mlp),
}

impl PreferenceFunction {
    pub fn action_count(&self) -> usize {
        match self {
            Self::Tabular(t) => t.action_count,
            Self::Network(m) => m.output_dim(),
        }
    }

    pub fn preferences(&self, obs: &Observation) -> Result<Vec<f64>> {
        let prefs = match self {
            Self::Tabular(t) => {
                let s = obs.features().first().copied().unwrap_or(-1.0);
                if s < 0.0 || s.fract() != 0.0 || s as usize >= t.table.len() {
                    return contract(format!("{s} is not a valid tabular state index"));
                }
                t.table[s as usize].clone()
            }
            Self::Network(m) => m.forward_one(obs.features())?,
        };
        if prefs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence("non-finite action preference".into()));
        }
        Ok(prefs)
    }

    pub fn soft_value(&self, obs: &Observation, params: &SoftPolicyParams) -> Result<f64> {
        Ok(soft_value_of(&self.preferences(obs)?, params))
    }

    pub fn policy(&self, obs: &Observation, params: &SoftPolicyParams) -> Result<Vec<f64>> {
        Ok(policy_of(&self.preferences(obs)?, params))
    }

    pub fn greedy_action(&self, obs: &Observation) -> Result<ActionId> {
        Ok(ActionId::raw(argmax(&self.preferences(obs)?)))
    }

    pub fn as_network(&self) -> Option<&Mlp> {
        match self {
            Self::Network(m) => Some(m),
            Self::Tabular(_) => None,
        }
    }

    pub fn as_network_mut(&mut self) -> Option<&mut Mlp> {
        match self {
            Self::Network(m) => Some(m),
            Self::Tabular(_) => None,
        }
    }
}

/// A finite MDP with dense transition and reward arrays indexed `[s][a][s']`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub state_count: usize,
    pub action_count: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        gamma: f64,
    ) -> Result<Self> {
        let n = transitions.len();
        let a = transitions.first().map_or(0, Vec::len);
        if n == 0 || a == 0 {
            return config("MDP needs at least one state and one action");
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return config("gamma must lie in (0, 1)");
        }
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != a || rewards.get(s).map_or(true, |r| r.len() != a) {
                return config(format!("state {s} has an inconsistent action count"));
            }
            for (act, dist) in row.iter().enumerate() {
                if dist.len() != n || rewards[s][act].len() != n {
                    return config(format!("T[{s}][{act}] has the wrong width"));
                }
                let total: f64 = dist.iter().sum();
                if dist.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return config(format!("T[{s}][{act}] is not a probability distribution"));
                }
            }
        }
        Ok(Self {
            state_count: n,
            action_count: a,
            transitions,
            rewards,
            gamma,
        })
    }
}

/// One synchronous sweep of the preference operator
/// `OP(s,a) = P(s,a) - L P(s) + sum_s' T(s'|s,a) (r + gamma L P(s'))`
/// where `L` is the soft value at `sigma = 0`. Uses the MDP's discount.
pub fn dpp_operator(
    prefs: &PreferenceFunction,
    mdp: &TabularMdp,
    params: &SoftPolicyParams,
) -> Result<PreferenceFunction> {
    let PreferenceFunction::Tabular(table) = prefs else {
        return Err(Error::Unsupported(
            "the preference operator sweep needs a tabular backend".into(),
        ));
    };
    if params.sigma != 0.0 {
        return contract("the preference operator sweep is defined for sigma = 0");
    }
    if table.table.len() != mdp.state_count || table.action_count != mdp.action_count {
        return config("preference table does not match the MDP");
    }
    let values: Vec<f64> = table
        .table
        .iter()
        .map(|row| soft_value_of(row, params))
        .collect();
    let next = (0..mdp.state_count)
        .map(|s| {
            (0..mdp.action_count)
                .map(|a| {
                    let backup: f64 = mdp.transitions[s][a]
                        .iter()
                        .zip(&mdp.rewards[s][a])
                        .zip(&values)
                        .map(|((p, r), v)| p * (r + mdp.gamma * v))
                        .sum();
                    table.table[s][a] - values[s] + backup
                })
                .collect()
        })
        .collect();
    Ok(PreferenceFunction::Tabular(TabularPreferences {
        action_count: table.action_count,
        table: next,
    }))
}

/// Teaching signal from the target preferences:
/// `y = (P(s,a) - V(s)) / (1 + sigma eta) + r + gamma V(s')`.
pub fn edpn_target(target: &PreferenceFunction, t: &Transition, params: &SoftPolicyParams) -> Result<f64> {
    let r = t.filled_reward()?;
    let p_s = target.preferences(&t.state)?;
    let v_s = soft_value_of(&p_s, params);
    let v_next = target.soft_value(&t.next_state, params)?;
    let y = params.advantage_weight() * (p_s[t.action.index()] - v_s) + r + params.gamma * v_next;
    if !y.is_finite() {
        return Err(Error::Divergence(format!("teaching signal {y} is not finite")));
    }
    Ok(y)
}

/// Q-learning target `r + gamma max_a' Q(s', a')`.
pub fn dqn_target(target: &PreferenceFunction, t: &Transition, gamma: f64) -> Result<f64> {
    let r = t.filled_reward()?;
    let q = target.preferences(&t.next_state)?;
    let y = r + gamma * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !y.is_finite() {
        return Err(Error::Divergence(format!("Q target {y} is not finite")));
    }
    Ok(y)
}

/// One RMSProp step on `mean_i (y_i - P(s_i, a_i))^2`; only the taken
/// action's output receives gradient. Returns the pre-step loss.
pub fn regression_step(net: &mut Mlp, batch: &[&Transition], targets: &[f64], opt: &mut RmsProp) -> Result<(f64, StepInfo)> {
    if batch.len() != targets.len() {
        return contract("minibatch and targets differ in length");
    }
    let inputs: Vec<&[f64]> = batch.iter().map(|t| t.state.features()).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
    let loss_fn = SelectedSquaredError {
        actions: &actions,
        targets,
    };
    let (loss, grads) = net.loss_and_grad(&inputs, &loss_fn)?;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("generator loss {loss} is not finite")));
    }
    let info = opt.step(&mut net.params, grads)?;
    Ok((loss, info))
}

/// One entropy-regularized preference update on a minibatch; returns the
/// pre-step loss.
pub fn edpn_update(
    net: &mut Mlp,
    batch: &[&Transition],
    target: &PreferenceFunction,
    opt: &mut RmsProp,
    params: &SoftPolicyParams,
) -> Result<f64> {
    let ys = batch
        .iter()
        .map(|t| edpn_target(target, t, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(regression_step(net, batch, &ys, opt)?.0)
}

/// One Q-learning update on a minibatch; returns the pre-step loss.
pub fn dqn_update(
    net: &mut Mlp,
    batch: &[&Transition],
    target: &PreferenceFunction,
    opt: &mut RmsProp,
    gamma: f64,
) -> Result<f64> {
    let ys = batch
        .iter()
        .map(|t| dqn_target(target, t, gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(regression_step(net, batch, &ys, opt)?.0)
}

/// Samples from the softmax of the preferences.
pub struct SoftmaxPolicy<'a> {
    pub prefs: &'a PreferenceFunction,
    pub params: SoftPolicyParams,
}

impl StochasticPolicy for SoftmaxPolicy<'_> {
    fn action_count(&self) -> usize {
        self.prefs.action_count()
    }

    fn act(&self, obs: &Observation, rng: &mut Rng) -> Result<ActionId> {
        let probs = self.prefs.policy(obs, &self.params)?;
        Ok(ActionId::raw(sample_categorical(&probs, rng)))
    }
}

/// Argmax of the preferences; ignores the randomness.
pub struct GreedyPolicy<'a> {
    pub prefs: &'a PreferenceFunction,
}

impl StochasticPolicy for GreedyPolicy<'_> {
    fn action_count(&self) -> usize {
        self.prefs.action_count()
    }

    fn act(&self, obs: &Observation, _rng: &mut Rng) -> Result<ActionId> {
        self.prefs.greedy_action(obs)
    }
}

/// Uniform action with probability `epsilon`, greedy otherwise.
pub struct EpsilonGreedyPolicy<'a> {
    pub prefs: &'a PreferenceFunction,
    pub epsilon: f64,
}

impl StochasticPolicy for EpsilonGreedyPolicy<'_> {
    fn action_count(&self) -> usize {
        self.prefs.action_count()
    }

    fn act(&self, obs: &Observation, rng: &mut Rng) -> Result<ActionId> {
        use rand::Rng as _;
        if rng.gen::<f64>() < self.epsilon {
            Ok(ActionId::raw(rng.gen_range(0..self.action_count())))
        } else {
            self.prefs.greedy_action(obs)
        }
    }
}
