//! Experiment configuration: a TOML tree with dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::{DiscriminatorVariant, DEFAULT_CLAMP_EPS};
use crate::envs::EnvSpec;
use crate::error::{config, Error, Result};
use crate::generator::TeachingSignal;
use crate::nn::RmsPropConfig;
use crate::soft::SoftPolicyParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GagailEdpn,
    GailEdpn,
    GagailDqn,
    GailDqn,
    Bc,
}

impl Method {
    pub const ALL: [Method; 5] = [Self::GagailEdpn, Self::GailEdpn, Self::GagailDqn, Self::GailDqn, Self::Bc];

    pub fn name(self) -> &'static str {
        match self {
            Self::GagailEdpn => "gagail_edpn",
            Self::GailEdpn => "gail_edpn",
            Self::GagailDqn => "gagail_dqn",
            Self::GailDqn => "gail_dqn",
            Self::Bc => "bc",
        }
    }

    pub fn signal(self) -> Option<TeachingSignal> {
        match self {
            Self::GagailEdpn | Self::GailEdpn => Some(TeachingSignal::Edpn),
            Self::GagailDqn | Self::GailDqn => Some(TeachingSignal::Dqn),
            Self::Bc => None,
        }
    }

    pub fn is_goal_aware(self) -> bool {
        matches!(self, Self::GagailEdpn | Self::GagailDqn)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    /// Episodes per iteration (`M`).
    pub episodes: usize,
    /// Steps per episode (`T`).
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Discriminator sweeps per iteration (`J`).
    pub discriminator: usize,
    /// Generator sweeps per iteration (`K`).
    pub generator: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            discriminator: 1,
            generator: 1,
        }
    }
}

/// RMSProp settings per network family. The discriminator defaults are the
/// published ones; the generator's were chosen by experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub discriminator: RmsPropConfig,
    pub generator: RmsPropConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            discriminator: RmsPropConfig::default(),
            generator: RmsPropConfig {
                learning_rate: 0.001,
                ..RmsPropConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub minibatch: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            generator_hidden: vec![64, 64],
            discriminator_hidden: vec![64, 64],
            minibatch: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Demonstration trajectories (JSON lines).
    pub demos: PathBuf,
    /// Goal-label sidecar; required by goal-aware methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goals: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Greedy evaluation episodes per iteration.
    pub episodes: usize,
    /// Evaluation horizon; also the horizon of the random-policy baseline.
    /// Zero means "the demonstration length".
    pub horizon: usize,
    /// Episodes used to estimate the random-policy return.
    pub random_episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 5,
            horizon: 0,
            random_episodes: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub clamp_eps: f64,
    /// Random-policy states used as negatives for the fixed goal classifier.
    pub negatives: usize,
    pub pretrain_steps: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            clamp_eps: DEFAULT_CLAMP_EPS,
            negatives: 4500,
            pretrain_steps: 3000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    /// Passes over the demonstrations between evaluations.
    pub epochs_per_iteration: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            epochs_per_iteration: 20,
        }
    }
}

/// Everything one training run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Iterations (`I`).
    pub iterations: usize,
    pub method: Method,
    /// Discriminator variant; defaults to `full` for goal-aware methods and
    /// must be `no_goal` (or absent) for plain adversarial imitation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<DiscriminatorVariant>,
    #[serde(default)]
    pub record_wall_time: bool,
    pub env: EnvSpec,
    pub rollout: RolloutConfig,
    #[serde(default)]
    pub sweeps: SweepConfig,
    pub soft: SoftPolicyParams,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    #[serde(default)]
    pub bc: BcConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parse, apply `key.path=value` overrides, and validate.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: Self = toml::Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_with(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Make relative data paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.demos);
        if let Some(g) = self.data.goals.as_mut() {
            fix(g);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The discriminator variant after method defaults, or `None` for BC.
    pub fn resolved_variant(&self) -> Option<DiscriminatorVariant> {
        match self.method {
            Method::Bc => None,
            m if m.is_goal_aware() => Some(self.variant.unwrap_or(DiscriminatorVariant::Full)),
            _ => Some(DiscriminatorVariant::NoGoal),
        }
    }

    pub fn needs_goals(&self) -> bool {
        self.resolved_variant().is_some_and(DiscriminatorVariant::has_goal)
    }

    pub fn validate(&self) -> Result<()> {
        self.soft.validate()?;
        self.optimizer.discriminator.validate()?;
        self.optimizer.generator.validate()?;
        if self.iterations == 0 || self.rollout.episodes == 0 || self.rollout.steps == 0 {
            return config("iterations, rollout.episodes and rollout.steps must be positive");
        }
        if self.network.minibatch == 0 {
            return config("network.minibatch must be positive");
        }
        if self.eval.episodes == 0 || self.eval.random_episodes == 0 {
            return config("eval.episodes and eval.random_episodes must be positive");
        }
        if !(self.discriminator.clamp_eps > 0.0 && self.discriminator.clamp_eps < 0.5) {
            return config("discriminator.clamp_eps must lie in (0, 0.5)");
        }
        match (self.method, self.variant) {
            (Method::Bc, Some(v)) => {
                return config(format!("method bc takes no discriminator variant (got {})", v.name()));
            }
            (m, Some(v)) if !m.is_goal_aware() && m != Method::Bc && v != DiscriminatorVariant::NoGoal => {
                return config(format!(
                    "method {} has no goal discriminator; variant {} is not allowed",
                    m.name(),
                    v.name()
                ));
            }
            _ => {}
        }
        if self.needs_goals() && self.data.goals.is_none() {
            return config(format!("method {} needs data.goals", self.method.name()));
        }
        if self.resolved_variant() == Some(DiscriminatorVariant::FixedGoal)
            && (self.discriminator.negatives == 0 || self.discriminator.pretrain_steps == 0)
        {
            return config("fixed_goal needs discriminator.negatives and pretrain_steps > 0");
        }
        Ok(())
    }

    /// Label used in file names and summaries: method plus non-default variant.
    pub fn label(&self) -> String {
        match (self.method, self.resolved_variant()) {
            (m, Some(v)) if m.is_goal_aware() && v != DiscriminatorVariant::Full => {
                format!("{}-{}", m.name(), v.name())
            }
            (m, _) => m.name().to_string(),
        }
    }
}

/// Set `a.b.c = value` inside a TOML table. The value is parsed as a TOML
/// literal; anything that does not parse is taken as a bare string.
pub fn apply_override(tree: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return config(format!("malformed override key {key:?}"));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut table = tree;
    for p in path {
        let slot = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match slot {
            toml::Value::Table(t) => t,
            _ => return config(format!("override {key:?} descends into a non-table value")),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("probe key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
iterations = 4
method = "gagail_edpn"

[env]
kind = "twice_reach"

[rollout]
episodes = 10
steps = 300

[soft]
eta = 0.25
sigma = 0.04
gamma = 0.95

[data]
demos = "demos.jsonl"
goals = "goals.json"
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.resolved_variant(), Some(DiscriminatorVariant::Full));
        assert_eq!(c.sweeps, SweepConfig::default());
        assert_eq!(c.optimizer.discriminator, RmsPropConfig::default());
        assert_eq!(c.network.minibatch, 32);
        assert_eq!(c.label(), "gagail_edpn");
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let o = vec![
            "soft.eta=0.5".to_string(),
            "soft.sigma = 0.1".into(),
            "variant=no_demo".into(),
            "env.reach_threshold=0.3".into(),
        ];
        let c = ExperimentConfig::from_toml_with(MINIMAL, &o).unwrap();
        assert_eq!(c.soft.eta, 0.5);
        assert_eq!(c.soft.sigma, 0.1);
        assert_eq!(c.variant, Some(DiscriminatorVariant::NoDemo));
        let EnvSpec::TwiceReach(tr) = &c.env else { panic!() };
        assert_eq!(tr.reach_threshold, 0.3);
        assert_eq!(c.label(), "gagail_edpn-no_demo");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml_with(MINIMAL, &["soft.etta=1".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(ExperimentConfig::from_toml_with(MINIMAL, &["soft".into()]).is_err());
    }

    #[test]
    fn method_variant_legality() {
        let bad = ExperimentConfig::from_toml_with(MINIMAL, &["method=gail_edpn".into(), "variant=full".into()]);
        assert!(matches!(bad, Err(Error::Config(_))));
        let ok = ExperimentConfig::from_toml_with(MINIMAL, &["method=gail_dqn".into()]).unwrap();
        assert_eq!(ok.resolved_variant(), Some(DiscriminatorVariant::NoGoal));
        assert!(!ok.needs_goals());
        let bc = ExperimentConfig::from_toml_with(MINIMAL, &["method=bc".into(), "variant=full".into()]);
        assert!(bc.is_err());
    }

    #[test]
    fn goal_aware_methods_need_goal_file() {
        let text = MINIMAL.replace("goals = \"goals.json\"\n", "");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        assert!(ExperimentConfig::from_toml_with(&text, &["method=gail_edpn".into()]).is_ok());
    }

    #[test]
    fn snapshot_round_trips() {
        let c = ExperimentConfig::from_toml_with(MINIMAL, &["soft.gamma=0.9137".into(), "env.kind=pick_place".into()]).unwrap();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.resolve_paths(Path::new("/data/run"));
        assert_eq!(c.data.demos, PathBuf::from("/data/run/demos.jsonl"));
        assert_eq!(c.data.goals, Some(PathBuf::from("/data/run/goals.json")));
    }
}
