//! The policy side of training: an online preference network, its frozen
//! target copy, and the sweep-wise regression updates shared by the
//! adversarial trainer and the teacher.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::envs::EnvSpec;
use crate::error::Result;
use crate::mdp::{rollout, ReplayMemory, Trajectory, Transition};
use crate::nn::{Mlp, MlpSpec, OutputActivation, RmsProp, RmsPropConfig};
use crate::rng::{self, Rng};
use crate::soft::{dqn_update, edpn_update, PreferenceFunction, SoftPolicyParams, SoftmaxPolicy};

/// Which teaching signal drives the regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeachingSignal {
    /// Entropy-regularized preference target.
    Edpn,
    /// Q-learning target; exploration still samples the softmax of the
    /// network outputs so that only the target differs.
    Dqn,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub signal: TeachingSignal,
    pub params: SoftPolicyParams,
    pub online: PreferenceFunction,
    pub target: PreferenceFunction,
    opt: RmsProp,
}

impl Generator {
    pub fn new(
        signal: TeachingSignal,
        params: SoftPolicyParams,
        obs_dim: usize,
        action_count: usize,
        hidden: &[usize],
        opt: RmsPropConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        params.validate()?;
        let spec = MlpSpec::with_hidden(obs_dim, hidden, action_count, OutputActivation::Identity)?;
        let net = Mlp::new(spec, rng);
        let opt = RmsProp::new(opt, &net.params)?;
        Ok(Self {
            signal,
            params,
            target: PreferenceFunction::Network(net.clone()),
            online: PreferenceFunction::Network(net),
            opt,
        })
    }

    /// Resume from a saved network; the target starts equal to it.
    pub fn from_network(signal: TeachingSignal, params: SoftPolicyParams, net: Mlp, opt: RmsPropConfig) -> Result<Self> {
        params.validate()?;
        let opt = RmsProp::new(opt, &net.params)?;
        Ok(Self {
            signal,
            params,
            target: PreferenceFunction::Network(net.clone()),
            online: PreferenceFunction::Network(net),
            opt,
        })
    }

    pub fn network(&self) -> &Mlp {
        self.online.as_network().expect("generator preferences are a network")
    }

    pub fn policy(&self) -> SoftmaxPolicy<'_> {
        SoftmaxPolicy {
            prefs: &self.online,
            params: self.params,
        }
    }

    /// `episodes` softmax rollouts of `horizon` steps, episode `m` seeded
    /// from `(seed, m)`. Episodes run in parallel, each on its own
    /// environment instance; the result does not depend on scheduling.
    pub fn collect(&self, spec: &EnvSpec, episodes: usize, horizon: usize, seed: u64) -> Result<Vec<Trajectory>> {
        let policy = self.policy();
        (0..episodes)
            .into_par_iter()
            .map(|m| {
                let mut env = spec.build();
                rollout(&mut env, &policy, horizon, rng::derive_seed(seed, &[rng::TAG_ROLLOUT, m as u64]))
            })
            .collect()
    }

    /// One regression step on a minibatch against the target network.
    pub fn step(&mut self, batch: &[&Transition]) -> Result<f64> {
        let net = self.online.as_network_mut().expect("generator preferences are a network");
        match self.signal {
            TeachingSignal::Edpn => edpn_update(net, batch, &self.target, &mut self.opt, &self.params),
            TeachingSignal::Dqn => dqn_update(net, batch, &self.target, &mut self.opt, self.params.gamma),
        }
    }

    /// `sweeps` passes of shuffled minibatches over the memory; returns the
    /// per-step losses.
    pub fn train(&mut self, memory: &ReplayMemory, sweeps: usize, seed: u64) -> Result<Vec<f64>> {
        let mut losses = Vec::with_capacity(sweeps * memory.batches_per_sweep());
        for k in 0..sweeps {
            let plan = memory.shuffled_minibatches(rng::derive_seed(seed, &[rng::TAG_GEN, k as u64]));
            for idx in &plan.batches {
                let batch: Vec<&Transition> = idx.iter().map(|&i| memory.get(i).unwrap()).collect();
                losses.push(self.step(&batch)?);
            }
        }
        Ok(losses)
    }

    /// `theta^- = theta`.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}

/// Smallest multiple of `minibatch` holding `samples` entries.
pub fn replay_for(samples: usize, minibatch: usize) -> Result<ReplayMemory> {
    let cap = samples.div_ceil(minibatch.max(1)).max(1) * minibatch.max(1);
    ReplayMemory::new(cap, minibatch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(signal: TeachingSignal) -> Generator {
        let spec = EnvSpec::twice_reach();
        Generator::new(
            signal,
            SoftPolicyParams::new(0.25, 0.04, 0.9).unwrap(),
            spec.observation_dim(),
            spec.action_count(),
            &[16],
            RmsPropConfig::default(),
            &mut rng::rng_from(1, &[]),
        )
        .unwrap()
    }

    #[test]
    fn replay_rounds_up_to_minibatch() {
        let m = replay_for(3000, 32).unwrap();
        assert_eq!(m.capacity(), 3008);
        let m = replay_for(4500, 32).unwrap();
        assert_eq!(m.capacity(), 4512);
    }

    #[test]
    fn collect_is_seeded() {
        let g = gen(TeachingSignal::Edpn);
        let spec = EnvSpec::twice_reach();
        let a = g.collect(&spec, 3, 20, 7).unwrap();
        let b = g.collect(&spec, 3, 20, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|t| t.len() == 20 && t.is_chained()));
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn train_counts_steps_and_target_lags() {
        for signal in [TeachingSignal::Edpn, TeachingSignal::Dqn] {
            let mut g = gen(signal);
            let mut mem = replay_for(100, 32).unwrap();
            for traj in g.collect(&EnvSpec::twice_reach(), 5, 20, 3).unwrap() {
                for mut t in traj.transitions {
                    t.reward = Some(t.eval_reward);
                    mem.store(t);
                }
            }
            let before = g.target.as_network().unwrap().params.fingerprint();
            let losses = g.train(&mem, 2, 0).unwrap();
            assert_eq!(losses.len(), 2 * 3);
            assert_eq!(g.target.as_network().unwrap().params.fingerprint(), before);
            assert_ne!(g.network().params.fingerprint(), before);
            g.sync_target();
            assert_eq!(
                g.target.as_network().unwrap().params.fingerprint(),
                g.network().params.fingerprint()
            );
        }
    }
}
