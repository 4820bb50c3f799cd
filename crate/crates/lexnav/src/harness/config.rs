//! Run configuration: flat `key = value` text with dotted keys and `#`
//! comments. Unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::HarnessError;

/// Which learner a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Tabular,
    DenseOneHot,
    DenseEmbedding,
}

impl AgentKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "tabular" => Some(AgentKind::Tabular),
            "dense_onehot" => Some(AgentKind::DenseOneHot),
            "dense_embedding" => Some(AgentKind::DenseEmbedding),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Tabular => "tabular",
            AgentKind::DenseOneHot => "dense_onehot",
            AgentKind::DenseEmbedding => "dense_embedding",
        }
    }
}

/// Learner constants. Every field is a config key.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// Tabular learning rate.
    pub lr: f64,
    /// Dense-network Adam learning rate.
    pub net_lr: f64,
    pub batch: usize,
    pub sync: u64,
    pub replay: usize,
    pub warmup: usize,
    /// One minibatch update every this many environment steps.
    pub update_every: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            lr: 0.1,
            net_lr: 1e-3,
            batch: 32,
            sync: 1000,
            replay: 50_000,
            warmup: 1000,
            update_every: 4,
        }
    }
}

/// Transfer block: frozen prior checkpoint plus the new target goal.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub checkpoint: PathBuf,
    /// Explicit prior word; `None` selects by embedding similarity.
    pub prior: Option<String>,
    pub target: String,
    /// Mastered goal set; required only for dense prior checkpoints, which
    /// do not list their goals.
    pub mastered: Option<Vec<String>>,
}

/// Everything a seeded run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub map_path: PathBuf,
    pub goals: Vec<String>,
    pub agent: AgentKind,
    pub embedding_path: Option<PathBuf>,
    pub seed: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay_steps: u64,
    pub alpha: f64,
    pub max_env_steps: u64,
    pub criterion_rate: f64,
    pub criterion_window: usize,
    pub logging_period: u64,
    pub learner: LearnerConfig,
    pub distance_scale: f64,
    pub transfer: Option<TransferConfig>,
    pub out_policy: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for training on one map; callers fill in goals and agent.
    pub fn new(map_path: impl Into<PathBuf>, goals: Vec<String>, agent: AgentKind) -> Self {
        RunConfig {
            map_path: map_path.into(),
            goals,
            agent,
            embedding_path: None,
            seed: 0,
            eps_start: 1.0,
            eps_end: 0.01,
            decay_steps: 150_000,
            alpha: 0.0,
            max_env_steps: 400_000,
            criterion_rate: 0.95,
            criterion_window: 100,
            logging_period: 1000,
            learner: LearnerConfig::default(),
            distance_scale: 1.0,
            transfer: None,
            out_policy: None,
        }
    }

    /// Numeric sanity checks that need no file access. Map- and
    /// embedding-dependent checks happen when a run prepares.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(HarnessError::config(format!(
                    "{name} = {v} is outside [0, 1]"
                )))
            }
        };
        rate("schedule.eps_start", self.eps_start)?;
        rate("schedule.eps_end", self.eps_end)?;
        rate("schedule.alpha", self.alpha)?;
        rate("criterion.rate", self.criterion_rate)?;
        if self.eps_start < self.eps_end {
            return Err(HarnessError::config(
                "schedule.eps_start is below schedule.eps_end",
            ));
        }
        if self.decay_steps == 0 {
            return Err(HarnessError::config(
                "schedule.decay_steps must be positive",
            ));
        }
        if self.criterion_window == 0 {
            return Err(HarnessError::config("criterion.window must be positive"));
        }
        if self.logging_period <= crate::gridworld::STEP_CAP as u64 {
            return Err(HarnessError::config(format!(
                "logging.period must exceed the episode cap of {} so every window closes an episode",
                crate::gridworld::STEP_CAP
            )));
        }
        if self.goals.is_empty() {
            return Err(HarnessError::config("goals must not be empty"));
        }
        if self.learner.batch == 0 || self.learner.replay == 0 || self.learner.update_every == 0 {
            return Err(HarnessError::config(
                "learner.batch, learner.replay and learner.update_every must be positive",
            ));
        }
        if self.agent == AgentKind::DenseEmbedding && self.embedding_path.is_none() {
            return Err(HarnessError::config(
                "agent = dense_embedding requires an embedding file",
            ));
        }
        Ok(())
    }
}

/// Parses config text. Relative paths resolve against `base_dir` (normally
/// the config file's directory).
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<RunConfig, HarnessError> {
    let mut pairs: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            HarnessError::config(format!("line {}: expected `key = value`", idx + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if pairs.insert(key.clone(), (idx + 1, value)).is_some() {
            return Err(HarnessError::config(format!(
                "line {}: duplicate key {key:?}",
                idx + 1
            )));
        }
    }

    let mut take = |key: &str| pairs.remove(key).map(|(_, v)| v);
    let resolve = |p: String| -> PathBuf {
        let path = PathBuf::from(p);
        match (path.is_relative(), base_dir) {
            (true, Some(base)) => base.join(path),
            _ => path,
        }
    };

    let map_path = take("map")
        .map(&resolve)
        .ok_or_else(|| HarnessError::config("missing required key `map`"))?;
    let goals: Vec<String> = take("goals")
        .map(|v| split_list(&v))
        .ok_or_else(|| HarnessError::config("missing required key `goals`"))?;
    let agent_raw =
        take("agent").ok_or_else(|| HarnessError::config("missing required key `agent`"))?;
    let agent = AgentKind::parse(&agent_raw)
        .ok_or_else(|| HarnessError::config(format!("unknown agent kind {agent_raw:?}")))?;

    let mut config = RunConfig::new(map_path, goals, agent);
    config.embedding_path = take("embedding").map(&resolve);
    config.out_policy = take("out.policy").map(&resolve);

    macro_rules! num {
        ($key:literal, $field:expr) => {
            if let Some(v) = take($key) {
                $field = v.parse().map_err(|_| {
                    HarnessError::config(format!(concat!("bad value for ", $key, ": {:?}"), v))
                })?;
            }
        };
    }
    num!("seed", config.seed);
    num!("schedule.eps_start", config.eps_start);
    num!("schedule.eps_end", config.eps_end);
    num!("schedule.decay_steps", config.decay_steps);
    num!("schedule.alpha", config.alpha);
    num!("budget.max_env_steps", config.max_env_steps);
    num!("criterion.rate", config.criterion_rate);
    num!("criterion.window", config.criterion_window);
    num!("logging.period", config.logging_period);
    num!("learner.gamma", config.learner.gamma);
    num!("learner.lr", config.learner.lr);
    num!("learner.net_lr", config.learner.net_lr);
    num!("learner.batch", config.learner.batch);
    num!("learner.sync", config.learner.sync);
    num!("learner.replay", config.learner.replay);
    num!("learner.warmup", config.learner.warmup);
    num!("learner.update_every", config.learner.update_every);
    num!("reward.distance_scale", config.distance_scale);

    let transfer_checkpoint = take("transfer.checkpoint").map(&resolve);
    let transfer_target = take("transfer.target");
    let transfer_prior = take("transfer.prior").filter(|p| p != "auto");
    let transfer_mastered = take("transfer.mastered").map(|v| split_list(&v));
    match (transfer_checkpoint, transfer_target) {
        (Some(checkpoint), Some(target)) => {
            config.transfer = Some(TransferConfig {
                checkpoint,
                prior: transfer_prior,
                target,
                mastered: transfer_mastered,
            });
        }
        (None, None) => {
            if transfer_prior.is_some() || transfer_mastered.is_some() {
                return Err(HarnessError::config(
                    "transfer.prior/transfer.mastered need transfer.checkpoint and transfer.target",
                ));
            }
        }
        _ => {
            return Err(HarnessError::config(
                "transfer.checkpoint and transfer.target must be given together",
            ));
        }
    }

    if let Some((line, _)) = pairs.values().next() {
        let key = pairs.keys().next().expect("non-empty");
        return Err(HarnessError::config(format!(
            "line {line}: unknown key {key:?}"
        )));
    }
    config.validate()?;
    Ok(config)
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}
