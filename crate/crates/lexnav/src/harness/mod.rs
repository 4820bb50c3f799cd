//! Config-driven experiment runner: seeded training and transfer loops, greedy
//! evaluation, metrics emission, and cross-seed aggregation.
//!
//! A run is fully determined by its (config, seed) pair: the spawn, goal,
//! agent, and replay random streams all derive from the one seed, and every
//! container iterates in a fixed order, so repeated runs produce identical
//! CSV bytes.

pub mod config;
pub mod metrics;
pub mod plot;

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embedding::{load_embeddings, EmbeddingError, EmbeddingStore};
use crate::gridworld::{
    ApartmentMap, DistanceField, EnvError, Episode, MapError, ObservationMode, Pos, STEP_CAP,
};
use crate::nn::NnError;
use crate::qlearn::{greedy_action, DenseQ};
use crate::qlearn::{
    load_policy_checkpoint, GoalEncoder, PolicyCheckpoint, QError, ReplayBuffer, TabularQ,
    Transition, ValueAgent,
};
use crate::transfer::{
    explore_action, select_prior, DecisionSource, ExplorationSchedule, PriorPolicy, TransferError,
};

pub use config::{parse_config, AgentKind, LearnerConfig, RunConfig, TransferConfig};
pub use metrics::{
    aggregate_success, parse_csv, steps_to_criterion, AggregatePoint, EpisodeRecord, MetricsRow,
    RunMetrics, CSV_HEADER,
};
pub use plot::{emit_plot, PlotError, PlotSeries};

/// Dense-network hidden sizes for the value trunk.
pub const HIDDEN_SIZES: [usize; 2] = [64, 64];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] QError),
    #[error(transparent)]
    Net(#[from] NnError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Plot(#[from] PlotError),
}

impl HarnessError {
    pub(crate) fn config(reason: impl Into<String>) -> Self {
        HarnessError::Config(reason.into())
    }

    pub(crate) fn csv(reason: impl Into<String>) -> Self {
        HarnessError::Csv(reason.into())
    }

    /// CLI exit code: 1 for validation problems (bad config, bad inputs),
    /// 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Csv(_)
            | HarnessError::Eval(_)
            | HarnessError::Input { .. }
            | HarnessError::Map(_)
            | HarnessError::Embedding(_)
            | HarnessError::Transfer(_)
            | HarnessError::Plot(_) => 1,
            HarnessError::Agent(e) => match e {
                QError::Version(_) | QError::Checkpoint { .. } | QError::UnknownGoal(_) => 1,
                _ => 2,
            },
            HarnessError::Net(e) => match e {
                NnError::Version(_) | NnError::Checkpoint { .. } => 1,
                _ => 2,
            },
            HarnessError::Env(_) | HarnessError::Output { .. } => 2,
        }
    }
}

fn read_file(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Input {
        path: path.to_path_buf(),
        source,
    })
}

/// The learner being trained, either tabular or dense.
pub enum TrainAgent {
    Tabular(TabularQ),
    Dense(DenseQ),
}

impl TrainAgent {
    pub fn save(&self, sink: &mut impl std::io::Write) -> Result<(), QError> {
        match self {
            TrainAgent::Tabular(q) => q.save(sink),
            TrainAgent::Dense(q) => q.save(sink),
        }
    }

    pub fn save_to(&self, path: &Path) -> Result<(), HarnessError> {
        let mut buf = Vec::new();
        self.save(&mut buf)?;
        fs::write(path, buf).map_err(|source| HarnessError::Output {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl ValueAgent for TrainAgent {
    fn q_values(&self, observation: &[f64], goal: &str) -> Result<[f64; 4], QError> {
        match self {
            TrainAgent::Tabular(q) => q.q_values(observation, goal),
            TrainAgent::Dense(q) => q.q_values(observation, goal),
        }
    }
}

/// A finished run: metrics plus the trained policy and the map it ran on.
pub struct TrainingRun {
    pub metrics: RunMetrics,
    pub agent: TrainAgent,
    pub map: ApartmentMap,
    /// The prior goal the exploration policy mixed in, for transfer runs.
    pub prior_goal: Option<String>,
}

// per-purpose random streams derived from the run seed
fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}
const SALT_ENV: u64 = 0x9E37_79B9_7F4A_7C15;
const SALT_GOAL: u64 = 0xD1B5_4A32_D192_ED03;
const SALT_AGENT: u64 = 0x8BB8_15B3_C2B3_4B1B;
const SALT_REPLAY: u64 = 0x2545_F491_4F6C_DD1D;
const SALT_INIT: u64 = 0x94D0_49BB_1331_11EB;

struct Prepared {
    map: ApartmentMap,
    store: Option<EmbeddingStore>,
    agent: TrainAgent,
    schedule: ExplorationSchedule,
}

fn prepare(config: &RunConfig) -> Result<Prepared, HarnessError> {
    config.validate()?;
    let map = ApartmentMap::parse(&read_file(&config.map_path)?)?;
    let vocab = map.object_words();
    for goal in &config.goals {
        if !vocab.contains(goal) {
            return Err(HarnessError::config(format!(
                "goal {goal:?} is not an object on the map"
            )));
        }
    }
    let store = match &config.embedding_path {
        Some(path) => {
            let text = read_file(path)?;
            Some(load_embeddings(text.as_bytes(), None)?)
        }
        None => None,
    };
    let obs_len = map.observation_len(ObservationMode::PositionOneHot);
    let mut init_rng = stream(config.seed, SALT_INIT);
    let agent = match config.agent {
        AgentKind::Tabular => TrainAgent::Tabular(TabularQ::new(map.width(), map.height())),
        AgentKind::DenseOneHot => TrainAgent::Dense(DenseQ::new(
            obs_len,
            GoalEncoder::OneHot(vocab.clone()),
            &HIDDEN_SIZES,
            config.learner.gamma,
            config.learner.net_lr,
            config.learner.sync,
            &mut init_rng,
        )?),
        AgentKind::DenseEmbedding => {
            let store = store
                .as_ref()
                .expect("validate() requires an embedding file for dense_embedding");
            for goal in &config.goals {
                store.vector(goal)?;
            }
            TrainAgent::Dense(DenseQ::new(
                obs_len,
                GoalEncoder::Embedding(store.clone()),
                &HIDDEN_SIZES,
                config.learner.gamma,
                config.learner.net_lr,
                config.learner.sync,
                &mut init_rng,
            )?)
        }
    };
    let schedule = ExplorationSchedule::new(
        config.eps_start,
        config.eps_end,
        config.decay_steps,
        config.alpha,
    )?;
    Ok(Prepared {
        map,
        store,
        agent,
        schedule,
    })
}

/// Trains from scratch on the configured goal set.
pub fn run_training(config: &RunConfig) -> Result<TrainingRun, HarnessError> {
    let prepared = prepare(config)?;
    train_loop(config, prepared, None, &config.goals.clone())
}

/// Loads a frozen prior and trains a fresh agent on the transfer target, with
/// the prior mixed into exploration at rate α.
pub fn run_transfer(config: &RunConfig) -> Result<TrainingRun, HarnessError> {
    let transfer = config
        .transfer
        .as_ref()
        .ok_or_else(|| HarnessError::config("transfer requires a transfer block"))?
        .clone();
    let prepared = prepare(config)?;
    if map_object(&prepared.map, &transfer.target).is_err() {
        return Err(HarnessError::config(format!(
            "transfer target {:?} is not an object on the map",
            transfer.target
        )));
    }
    if config.agent == AgentKind::DenseEmbedding {
        let store = prepared
            .store
            .as_ref()
            .expect("validate() requires an embedding file for dense_embedding");
        store.vector(&transfer.target)?;
    }

    let (prior_agent, mastered) = load_prior(
        &transfer.checkpoint,
        &prepared.map,
        prepared.store.as_ref(),
        transfer.mastered.as_deref(),
    )?;
    if mastered.contains(&transfer.target) {
        return Err(HarnessError::config(format!(
            "transfer target {:?} is already in the prior's mastered set",
            transfer.target
        )));
    }
    let prior_word = match &transfer.prior {
        Some(word) => {
            if !mastered.contains(word) {
                return Err(HarnessError::config(format!(
                    "prior {word:?} is not in the mastered set {mastered:?}"
                )));
            }
            word.clone()
        }
        None => {
            let store = prepared.store.as_ref().ok_or_else(|| {
                HarnessError::config("automatic prior selection requires an embedding file")
            })?;
            select_prior(store, &transfer.target, &mastered)?.0
        }
    };
    let prior = PriorPolicy::new(prior_word, prior_agent);
    let goals = vec![transfer.target.clone()];
    train_loop(config, prepared, Some(prior), &goals)
}

fn map_object(map: &ApartmentMap, word: &str) -> Result<Pos, HarnessError> {
    Ok(map.object_position(word)?)
}

fn load_prior(
    path: &Path,
    map: &ApartmentMap,
    store: Option<&EmbeddingStore>,
    mastered_override: Option<&[String]>,
) -> Result<(Box<dyn ValueAgent>, Vec<String>), HarnessError> {
    let text = read_file(path)?;
    let checkpoint = load_policy_checkpoint(&mut text.as_bytes(), map.width(), map.height())?;
    match checkpoint {
        PolicyCheckpoint::Tabular(q) => {
            let mastered = match mastered_override {
                Some(set) => set.to_vec(),
                None => q.goals(),
            };
            if mastered.is_empty() {
                return Err(HarnessError::config(
                    "prior checkpoint has no mastered goals",
                ));
            }
            Ok((Box::new(q), mastered))
        }
        PolicyCheckpoint::Net(net) => {
            let obs_len = map.observation_len(ObservationMode::PositionOneHot);
            let goal_len = net.input_dim().saturating_sub(obs_len);
            let vocab = map.object_words();
            let encoder = if goal_len == vocab.len() {
                GoalEncoder::OneHot(vocab)
            } else if let Some(store) = store.filter(|s| s.dimension() == goal_len) {
                GoalEncoder::Embedding(store.clone())
            } else {
                return Err(HarnessError::config(format!(
                    "cannot infer the goal encoding of a net checkpoint with goal length {goal_len}"
                )));
            };
            let mastered = mastered_override.map(<[String]>::to_vec).ok_or_else(|| {
                HarnessError::config("transfer.mastered is required for dense prior checkpoints")
            })?;
            if mastered.is_empty() {
                return Err(HarnessError::config("transfer.mastered must not be empty"));
            }
            let frozen = DenseQ::frozen(net, encoder, obs_len)?;
            Ok((Box::new(frozen), mastered))
        }
    }
}

fn train_loop(
    config: &RunConfig,
    prepared: Prepared,
    prior: Option<PriorPolicy>,
    goals: &[String],
) -> Result<TrainingRun, HarnessError> {
    let Prepared {
        map,
        store: _store,
        mut agent,
        schedule,
    } = prepared;

    let mut fields: BTreeMap<String, DistanceField> = BTreeMap::new();
    for goal in goals {
        fields.insert(goal.clone(), map.distance_field(goal)?);
    }

    let mut env_rng = stream(config.seed, SALT_ENV);
    let mut goal_rng = stream(config.seed, SALT_GOAL);
    let mut agent_rng = stream(config.seed, SALT_AGENT);
    let mut replay_rng = stream(config.seed, SALT_REPLAY);
    let mut replay = ReplayBuffer::new(config.learner.replay);

    let mut rows = Vec::new();
    let mut episode_log: Vec<EpisodeRecord> = Vec::new();
    let mut trailing: VecDeque<bool> = VecDeque::with_capacity(config.criterion_window);
    let mut trailing_successes = 0usize;
    let mut steps_to_criterion_hit: Option<u64> = None;

    let mut env_step: u64 = 0;
    // per logging window accumulators
    let mut window_sources = [0u64; 3];
    let mut window_returns = 0.0;
    let mut window_lengths = 0u64;
    let mut window_episodes = 0u64;

    use rand::Rng as _;
    'training: while env_step < config.max_env_steps {
        let goal = &goals[goal_rng.random_range(0..goals.len())];
        let field = &fields[goal];
        let (mut episode, mut obs) =
            Episode::reset(&map, field, &mut env_rng, config.distance_scale);
        let mut ep_return = 0.0;
        let mut ep_len = 0u32;

        while !episode.done() {
            if env_step >= config.max_env_steps {
                break 'training;
            }
            let epsilon = schedule.epsilon_at(env_step);
            let decision = explore_action(
                &agent,
                &obs,
                goal,
                prior.as_ref(),
                epsilon,
                config.alpha,
                &mut agent_rng,
            )?;
            let outcome = episode.step(decision.action)?;
            env_step += 1;
            ep_return += outcome.reward;
            ep_len += 1;
            window_sources[match decision.source {
                DecisionSource::Greedy => 0,
                DecisionSource::Prior => 1,
                DecisionSource::Random => 2,
            }] += 1;

            let transition = Transition {
                observation: obs,
                goal: goal.clone(),
                action: decision.action,
                reward: outcome.reward,
                next_observation: outcome.observation.clone(),
                done: outcome.done,
            };
            match &mut agent {
                TrainAgent::Tabular(q) => {
                    q.update(&transition, config.learner.lr, config.learner.gamma)?;
                }
                TrainAgent::Dense(q) => {
                    replay.push(transition);
                    if replay.len() >= config.learner.warmup.max(config.learner.batch)
                        && env_step.is_multiple_of(config.learner.update_every)
                    {
                        let batch = replay.sample(config.learner.batch, &mut replay_rng)?;
                        q.learn(&batch)?;
                    }
                }
            }
            obs = outcome.observation;

            if env_step.is_multiple_of(config.logging_period) {
                let period = config.logging_period as f64;
                rows.push(MetricsRow {
                    env_step,
                    episodes: episode_log.len() as u64,
                    success_rate: if trailing.is_empty() {
                        0.0
                    } else {
                        trailing_successes as f64 / trailing.len() as f64
                    },
                    mean_return: if window_episodes == 0 {
                        0.0
                    } else {
                        window_returns / window_episodes as f64
                    },
                    mean_ep_len: if window_episodes == 0 {
                        0.0
                    } else {
                        window_lengths as f64 / window_episodes as f64
                    },
                    epsilon: schedule.epsilon_at(env_step),
                    frac_greedy: window_sources[0] as f64 / period,
                    frac_prior: window_sources[1] as f64 / period,
                    frac_random: window_sources[2] as f64 / period,
                });
                window_sources = [0; 3];
                window_returns = 0.0;
                window_lengths = 0;
                window_episodes = 0;
            }
        }

        // episode completed
        let success = episode.succeeded();
        episode_log.push(EpisodeRecord {
            end_step: env_step,
            success,
            ret: ep_return,
            len: ep_len,
        });
        window_returns += ep_return;
        window_lengths += ep_len as u64;
        window_episodes += 1;
        if trailing.len() == config.criterion_window && trailing.pop_front() == Some(true) {
            trailing_successes -= 1;
        }
        trailing.push_back(success);
        if success {
            trailing_successes += 1;
        }
        if trailing.len() == config.criterion_window
            && trailing_successes as f64 / config.criterion_window as f64 >= config.criterion_rate
        {
            steps_to_criterion_hit = Some(env_step);
            break;
        }
    }

    let metrics = RunMetrics {
        rows,
        episodes: episode_log,
        steps_to_criterion: steps_to_criterion_hit,
        total_env_steps: env_step,
    };
    if let Some(path) = &config.out_policy {
        agent.save_to(path)?;
    }
    Ok(TrainingRun {
        metrics,
        agent,
        map,
        prior_goal: prior.map(|p| p.goal().to_string()),
    })
}

/// Greedy evaluation summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub success_rate: f64,
    pub mean_length: f64,
}

/// Greedy (ε = 0) evaluation: `n_episodes` rollouts with goals and spawns
/// drawn from a seeded stream.
pub fn evaluate(
    agent: &dyn ValueAgent,
    map: &ApartmentMap,
    goals: &[String],
    n_episodes: usize,
    seed: u64,
) -> Result<EvalSummary, HarnessError> {
    if n_episodes == 0 {
        return Err(HarnessError::Eval("n_episodes must be positive".into()));
    }
    if goals.is_empty() {
        return Err(HarnessError::Eval("goal set must not be empty".into()));
    }
    let mut fields = BTreeMap::new();
    for goal in goals {
        fields.insert(goal.clone(), map.distance_field(goal)?);
    }
    use rand::Rng as _;
    let mut rng = stream(seed, SALT_ENV);
    let mut greedy_rng = stream(seed, SALT_AGENT);
    let mut successes = 0usize;
    let mut total_len = 0u64;
    for _ in 0..n_episodes {
        let goal = &goals[rng.random_range(0..goals.len())];
        let field = &fields[goal];
        let (mut episode, mut obs) = Episode::reset(map, field, &mut rng, 1.0);
        while !episode.done() {
            let action = greedy_action(agent, &obs, goal, &mut greedy_rng)?;
            let outcome = episode.step(action)?;
            obs = outcome.observation;
        }
        if episode.succeeded() {
            successes += 1;
        }
        total_len += episode.state().steps_taken as u64;
    }
    Ok(EvalSummary {
        success_rate: successes as f64 / n_episodes as f64,
        mean_length: total_len as f64 / n_episodes as f64,
    })
}

/// Greedy rollout from every spawn cell in order. Returns
/// `(spawn, succeeded, steps)` triples; used to check policies against the
/// exact BFS distances.
pub fn evaluate_spawn_sweep(
    agent: &dyn ValueAgent,
    map: &ApartmentMap,
    goal: &str,
    seed: u64,
) -> Result<Vec<(Pos, bool, u32)>, HarnessError> {
    let field = map.distance_field(goal)?;
    let mut greedy_rng = stream(seed, SALT_AGENT);
    let mut out = Vec::with_capacity(map.spawn_cells().len());
    for &spawn in map.spawn_cells() {
        let (mut episode, mut obs) = Episode::reset_at(map, &field, spawn, 1.0)?;
        let mut steps = 0u32;
        while !episode.done() && steps < STEP_CAP {
            let action = greedy_action(agent, &obs, goal, &mut greedy_rng)?;
            let outcome = episode.step(action)?;
            obs = outcome.observation;
            steps += 1;
        }
        out.push((spawn, episode.succeeded(), steps));
    }
    Ok(out)
}

/// Loads a policy checkpoint for evaluation, inferring the goal encoder of
/// dense checkpoints from the input width.
pub fn load_eval_policy(
    path: &Path,
    map: &ApartmentMap,
    store: Option<&EmbeddingStore>,
) -> Result<Box<dyn ValueAgent>, HarnessError> {
    let text = read_file(path)?;
    let checkpoint = load_policy_checkpoint(&mut text.as_bytes(), map.width(), map.height())?;
    match checkpoint {
        PolicyCheckpoint::Tabular(q) => Ok(Box::new(q)),
        PolicyCheckpoint::Net(net) => {
            let obs_len = map.observation_len(ObservationMode::PositionOneHot);
            let goal_len = net.input_dim().saturating_sub(obs_len);
            let vocab = map.object_words();
            let encoder = if goal_len == vocab.len() {
                GoalEncoder::OneHot(vocab)
            } else if let Some(store) = store.filter(|s| s.dimension() == goal_len) {
                GoalEncoder::Embedding(store.clone())
            } else {
                return Err(HarnessError::config(format!(
                    "cannot infer the goal encoding of a net checkpoint with goal length {goal_len}"
                )));
            };
            Ok(Box::new(DenseQ::frozen(net, encoder, obs_len)?))
        }
    }
}

/// Reads an embedding store from a file path.
pub fn load_store(path: &Path) -> Result<EmbeddingStore, HarnessError> {
    let text = read_file(path)?;
    Ok(load_embeddings(text.as_bytes(), None)?)
}

/// Reads and validates a map file.
pub fn load_map(path: &Path) -> Result<ApartmentMap, HarnessError> {
    Ok(ApartmentMap::parse(&read_file(path)?)?)
}

/// Writes text to a file, classifying failures as output errors.
pub fn write_output(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    })
}
