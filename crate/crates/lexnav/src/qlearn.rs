//! Goal-conditional value learners: a tabular learner keyed on (goal, cell)
//! and a dense-network learner over observation ⊕ goal-vector inputs, plus
//! the experience replay and target-network machinery shared between runs.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingStore};
use crate::gridworld::{Action, Pos, ACTIONS};
use crate::nn::{AdamState, DenseNet, Gradients, NnError};

#[derive(Debug, Error)]
pub enum QError {
    #[error("observation does not decode to a grid position")]
    BadObservation,
    #[error("unknown one-hot goal {0:?}")]
    UnknownGoal(String),
    #[error("replay buffer is empty")]
    EmptyReplay,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("checkpoint line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error("unsupported checkpoint header {0:?}")]
    Version(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// How a goal word becomes a network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalMode {
    OneHot,
    Embedding,
}

/// Encoded goal: exactly one 1 for `OneHot`, a stored word vector for
/// `Embedding`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalVector {
    pub mode: GoalMode,
    pub values: Vec<f64>,
}

/// Turns goal words into [`GoalVector`]s. The one-hot vocabulary is the
/// sorted object-word list of the map.
#[derive(Debug, Clone)]
pub enum GoalEncoder {
    OneHot(Vec<String>),
    Embedding(EmbeddingStore),
}

impl GoalEncoder {
    pub fn encode(&self, word: &str) -> Result<GoalVector, QError> {
        match self {
            GoalEncoder::OneHot(vocab) => {
                let idx = vocab
                    .iter()
                    .position(|w| w == word)
                    .ok_or_else(|| QError::UnknownGoal(word.to_string()))?;
                let mut values = vec![0.0; vocab.len()];
                values[idx] = 1.0;
                Ok(GoalVector {
                    mode: GoalMode::OneHot,
                    values,
                })
            }
            GoalEncoder::Embedding(store) => Ok(GoalVector {
                mode: GoalMode::Embedding,
                values: store.vector(word)?.values.clone(),
            }),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GoalEncoder::OneHot(vocab) => vocab.len(),
            GoalEncoder::Embedding(store) => store.dimension(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> GoalMode {
        match self {
            GoalEncoder::OneHot(_) => GoalMode::OneHot,
            GoalEncoder::Embedding(_) => GoalMode::Embedding,
        }
    }
}

/// One buffered experience step. The goal rides along as a word and is
/// encoded lazily, so one buffer serves both encoding modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub goal: String,
    pub action: Action,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

/// FIFO ring of transitions with uniform with-replacement sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.max(1)),
            inserted: 0,
        }
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn contains(&self, t: &Transition) -> bool {
        self.items.contains(t)
    }

    pub fn sample<'a>(
        &'a self,
        batch_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<&'a Transition>, QError> {
        if self.items.is_empty() {
            return Err(QError::EmptyReplay);
        }
        Ok((0..batch_size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}

/// Anything that maps (observation, goal word) to four action values.
pub trait ValueAgent {
    fn q_values(&self, observation: &[f64], goal: &str) -> Result<[f64; 4], QError>;
}

/// Argmax action with uniform random tie-breaking.
pub fn greedy_action(
    agent: &dyn ValueAgent,
    observation: &[f64],
    goal: &str,
    rng: &mut impl Rng,
) -> Result<Action, QError> {
    let q = agent.q_values(observation, goal)?;
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..4).filter(|&i| q[i] == best).collect();
    let pick = ties[rng.random_range(0..ties.len())];
    Ok(Action::from_index(pick).expect("index < 4"))
}

// ---------------------------------------------------------------------------
// Tabular learner
// ---------------------------------------------------------------------------

/// Per-goal action-value table over grid cells, default 0. Observations are
/// decoded back to positions, so the goal encoding mode is irrelevant here.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    width: usize,
    height: usize,
    tables: BTreeMap<String, BTreeMap<Pos, [f64; 4]>>,
}

impl TabularQ {
    pub fn new(width: usize, height: usize) -> Self {
        TabularQ {
            width,
            height,
            tables: BTreeMap::new(),
        }
    }

    fn decode(&self, observation: &[f64]) -> Result<Pos, QError> {
        if observation.len() != self.width + self.height {
            return Err(QError::BadObservation);
        }
        let x = observation[..self.width]
            .iter()
            .position(|&v| v == 1.0)
            .ok_or(QError::BadObservation)?;
        let y = observation[self.width..]
            .iter()
            .position(|&v| v == 1.0)
            .ok_or(QError::BadObservation)?;
        Ok(Pos::new(x, y))
    }

    /// Goals with at least one visited cell.
    pub fn goals(&self) -> Vec<String> {
        self.tables.keys().cloned().collect()
    }

    pub fn visited_cells(&self, goal: &str) -> usize {
        self.tables.get(goal).map_or(0, BTreeMap::len)
    }

    /// Q-learning backup: `Q(s,a) += lr (r + γ max_a' Q(s',a') [¬done] - Q(s,a))`.
    pub fn update(&mut self, t: &Transition, lr: f64, gamma: f64) -> Result<(), QError> {
        let pos = self.decode(&t.observation)?;
        let bootstrap = if t.done {
            0.0
        } else {
            let next = self.decode(&t.next_observation)?;
            self.tables
                .get(&t.goal)
                .and_then(|table| table.get(&next))
                .map_or(0.0, |q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        };
        let entry = self
            .tables
            .entry(t.goal.clone())
            .or_default()
            .entry(pos)
            .or_insert([0.0; 4]);
        let a = t.action.index();
        entry[a] += lr * (t.reward + gamma * bootstrap - entry[a]);
        Ok(())
    }

    /// Text checkpoint: `lexnav-tab v1` header, then `goal x y q0 q1 q2 q3`
    /// per visited cell in sorted order.
    pub fn save(&self, sink: &mut impl Write) -> Result<(), QError> {
        writeln!(sink, "lexnav-tab v1")?;
        for (goal, table) in &self.tables {
            for (pos, q) in table {
                writeln!(
                    sink,
                    "{goal} {} {} {} {} {} {}",
                    pos.x, pos.y, q[0], q[1], q[2], q[3]
                )?;
            }
        }
        Ok(())
    }

    pub fn load(source: &mut impl BufRead, width: usize, height: usize) -> Result<Self, QError> {
        let mut lines = source.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| QError::Version("<empty>".into()))?;
        if header.trim() != "lexnav-tab v1" {
            return Err(QError::Version(header));
        }
        let mut q = TabularQ::new(width, height);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let line_no = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 7 {
                return Err(QError::Checkpoint {
                    line: line_no,
                    reason: format!("expected 7 fields, got {}", toks.len()),
                });
            }
            let bad = |t: &str| QError::Checkpoint {
                line: line_no,
                reason: format!("bad number {t:?}"),
            };
            let x: usize = toks[1].parse().map_err(|_| bad(toks[1]))?;
            let y: usize = toks[2].parse().map_err(|_| bad(toks[2]))?;
            let mut vals = [0.0; 4];
            for (slot, tok) in vals.iter_mut().zip(&toks[3..]) {
                *slot = tok.parse().map_err(|_| bad(tok))?;
            }
            q.tables
                .entry(toks[0].to_string())
                .or_default()
                .insert(Pos::new(x, y), vals);
        }
        Ok(q)
    }
}

impl ValueAgent for TabularQ {
    fn q_values(&self, observation: &[f64], goal: &str) -> Result<[f64; 4], QError> {
        let pos = self.decode(observation)?;
        Ok(self
            .tables
            .get(goal)
            .and_then(|table| table.get(&pos))
            .copied()
            .unwrap_or([0.0; 4]))
    }
}

// ---------------------------------------------------------------------------
// Dense learner
// ---------------------------------------------------------------------------

/// DQN-style learner: online and target nets over observation ⊕ goal-vector,
/// Huber loss, Adam, periodic target sync.
pub struct DenseQ {
    online: DenseNet,
    target: DenseNet,
    optimizer: AdamState,
    encoder: GoalEncoder,
    obs_len: usize,
    gamma: f64,
    sync_period: u64,
    updates: u64,
}

impl DenseQ {
    /// Builds online/target nets `input → hidden… → 4` with the target
    /// initialized as a snapshot of the online net.
    pub fn new(
        obs_len: usize,
        encoder: GoalEncoder,
        hidden: &[usize],
        gamma: f64,
        learning_rate: f64,
        sync_period: u64,
        rng: &mut impl Rng,
    ) -> Result<Self, QError> {
        let mut sizes = vec![obs_len + encoder.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(ACTIONS.len());
        let online = DenseNet::init(&sizes, rng)?;
        let target = online.clone();
        let optimizer = AdamState::new(&online, learning_rate);
        Ok(DenseQ {
            online,
            target,
            optimizer,
            encoder,
            obs_len,
            gamma,
            sync_period: sync_period.max(1),
            updates: 0,
        })
    }

    /// Wraps an already-trained net as a frozen policy (no optimizer state).
    pub fn frozen(net: DenseNet, encoder: GoalEncoder, obs_len: usize) -> Result<Self, QError> {
        if net.input_dim() != obs_len + encoder.len() {
            return Err(NnError::InputLength {
                got: net.input_dim(),
                expected: obs_len + encoder.len(),
            }
            .into());
        }
        let optimizer = AdamState::new(&net, 0.0);
        Ok(DenseQ {
            target: net.clone(),
            online: net,
            optimizer,
            encoder,
            obs_len,
            gamma: 0.0,
            sync_period: 1,
            updates: 0,
        })
    }

    pub fn encoder(&self) -> &GoalEncoder {
        &self.encoder
    }

    pub fn online(&self) -> &DenseNet {
        &self.online
    }

    pub fn input_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn input_for(&self, observation: &[f64], goal: &str) -> Result<Vec<f64>, QError> {
        let goal_vec = self.encoder.encode(goal)?;
        let mut input = Vec::with_capacity(self.obs_len + goal_vec.values.len());
        input.extend_from_slice(observation);
        input.extend_from_slice(&goal_vec.values);
        Ok(input)
    }

    fn target_q(&self, observation: &[f64], goal: &str) -> Result<[f64; 4], QError> {
        let out = self.target.forward(&self.input_for(observation, goal)?)?;
        let mut q = [0.0; 4];
        q.copy_from_slice(&out);
        Ok(q)
    }

    /// Whether the target net currently equals the online net.
    pub fn target_in_sync(&self) -> bool {
        self.target == self.online
    }

    /// One minibatch update. Returns the mean Huber loss over the batch.
    pub fn learn(&mut self, batch: &[&Transition]) -> Result<f64, QError> {
        if batch.is_empty() {
            return Err(QError::EmptyBatch);
        }
        let mut total: Option<Gradients> = None;
        let mut loss_sum = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for t in batch {
            let target_value = if t.done {
                t.reward
            } else {
                let next_q = self.target_q(&t.next_observation, &t.goal)?;
                t.reward + self.gamma * next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let input = self.input_for(&t.observation, &t.goal)?;
            let trace = self.online.forward_cached(&input)?;
            let prediction = trace.output()[t.action.index()];
            let (loss, dpred) = crate::nn::huber(prediction, target_value, 1.0);
            loss_sum += loss;
            let mut out_grad = vec![0.0; ACTIONS.len()];
            out_grad[t.action.index()] = dpred * scale;
            let grads = self.online.backward(&trace, &out_grad)?;
            total = Some(match total {
                None => grads,
                Some(mut acc) => {
                    accumulate(&mut acc, &grads);
                    acc
                }
            });
        }
        let grads = total.expect("batch is non-empty");
        self.optimizer.step(&mut self.online, &grads)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.sync_period) {
            self.target = self.online.clone();
        }
        Ok(loss_sum * scale)
    }

    /// Forces `target ← online` (used at explicit sync points in tests).
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn save(&self, sink: &mut impl Write) -> Result<(), QError> {
        Ok(self.online.save(sink)?)
    }
}

fn accumulate(acc: &mut Gradients, other: &Gradients) {
    for (a, b) in acc.layers.iter_mut().zip(&other.layers) {
        for (x, y) in a.weights.iter_mut().zip(&b.weights) {
            *x += y;
        }
        for (x, y) in a.bias.iter_mut().zip(&b.bias) {
            *x += y;
        }
    }
}

impl ValueAgent for DenseQ {
    fn q_values(&self, observation: &[f64], goal: &str) -> Result<[f64; 4], QError> {
        let out = self.online.forward(&self.input_for(observation, goal)?)?;
        let mut q = [0.0; 4];
        q.copy_from_slice(&out);
        Ok(q)
    }
}

/// A policy checkpoint read back from disk, identified by its header line.
pub enum PolicyCheckpoint {
    Tabular(TabularQ),
    Net(DenseNet),
}

/// Sniffs the header line and loads either checkpoint format.
pub fn load_policy_checkpoint(
    source: &mut impl BufRead,
    width: usize,
    height: usize,
) -> Result<PolicyCheckpoint, QError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    if text.starts_with("lexnav-tab") {
        Ok(PolicyCheckpoint::Tabular(TabularQ::load(
            &mut text.as_bytes(),
            width,
            height,
        )?))
    } else if text.starts_with("lexnav-net") {
        Ok(PolicyCheckpoint::Net(DenseNet::load(&mut text.as_bytes())?))
    } else {
        let header = text.lines().next().unwrap_or("").to_string();
        Err(QError::Version(header))
    }
}
