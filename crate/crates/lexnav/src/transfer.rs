//! Transfer exploration: the three-way policy that, instead of exploring
//! purely at random, redirects a fraction of the exploration probability mass
//! toward the greedy actions of a previously mastered prior policy.
//!
//! Per decision, with exploration rate ε and prior sampling rate α:
//!
//! * probability `1 - ε`     — greedy action of the learning agent,
//! * probability `ε · α`     — the prior policy's action for its own goal ω,
//! * probability `ε · (1-α)` — a uniformly random action.
//!
//! The prior goal ω is the mastered goal whose word vector has the highest
//! cosine similarity to the target goal.

use rand::Rng;
use thiserror::Error;

use crate::embedding::{nearest_prior, EmbeddingError, EmbeddingStore};
use crate::gridworld::{Action, ACTIONS};
use crate::qlearn::{greedy_action, QError, ValueAgent};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("{name} = {value} is outside [0, 1]")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("eps_start {start} is below eps_end {end}")]
    InvertedSchedule { start: f64, end: f64 },
    #[error("decay_steps must be positive")]
    ZeroDecay,
    #[error(transparent)]
    Agent(#[from] QError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn check_rate(name: &'static str, value: f64) -> Result<(), TransferError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(TransferError::RateOutOfRange { name, value })
    }
}

/// Linear ε decay plus the prior sampling rate α.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub decay_steps: u64,
    pub alpha: f64,
}

impl ExplorationSchedule {
    pub fn new(
        eps_start: f64,
        eps_end: f64,
        decay_steps: u64,
        alpha: f64,
    ) -> Result<Self, TransferError> {
        check_rate("eps_start", eps_start)?;
        check_rate("eps_end", eps_end)?;
        check_rate("alpha", alpha)?;
        if eps_start < eps_end {
            return Err(TransferError::InvertedSchedule {
                start: eps_start,
                end: eps_end,
            });
        }
        if decay_steps == 0 {
            return Err(TransferError::ZeroDecay);
        }
        Ok(ExplorationSchedule {
            eps_start,
            eps_end,
            decay_steps,
            alpha,
        })
    }

    /// `ε(t) = ε_start - (ε_start - ε_end) · min(t / decay_steps, 1)`.
    pub fn epsilon_at(&self, t: u64) -> f64 {
        let frac = (t as f64 / self.decay_steps as f64).min(1.0);
        self.eps_start - (self.eps_start - self.eps_end) * frac
    }
}

/// A frozen, previously mastered policy queried with its mastered goal ω.
pub struct PriorPolicy {
    goal: String,
    agent: Box<dyn ValueAgent>,
}

impl PriorPolicy {
    pub fn new(goal: impl Into<String>, agent: Box<dyn ValueAgent>) -> Self {
        PriorPolicy {
            goal: goal.into(),
            agent,
        }
    }

    pub fn goal(&self) -> &str {
        &self.goal
    }

    /// The prior's greedy action for (observation, ω).
    pub fn action(&self, observation: &[f64], rng: &mut impl Rng) -> Result<Action, QError> {
        greedy_action(self.agent.as_ref(), observation, &self.goal, rng)
    }
}

/// Which branch of the three-way policy produced an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionSource {
    Greedy,
    Prior,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionDecision {
    pub action: Action,
    pub source: DecisionSource,
}

/// Picks the mastered goal closest to `target` in embedding space.
/// Fixed for a whole transfer run, since target and mastered set are constant.
pub fn select_prior(
    store: &EmbeddingStore,
    target: &str,
    mastered: &[String],
) -> Result<(String, f64), TransferError> {
    Ok(nearest_prior(store, target, mastered)?)
}

/// One decision of the three-way exploration policy.
///
/// A single uniform variate is partitioned as `[0, 1-ε)`, `[1-ε, 1-ε+εα)`,
/// `[1-ε+εα, 1)`, so exactly one branch fires per call. Without a prior, α is
/// treated as 0 and the policy reduces to textbook ε-greedy.
pub fn explore_action(
    agent: &dyn ValueAgent,
    observation: &[f64],
    goal: &str,
    prior: Option<&PriorPolicy>,
    epsilon: f64,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<ActionDecision, TransferError> {
    check_rate("epsilon", epsilon)?;
    check_rate("alpha", alpha)?;
    let alpha = if prior.is_some() { alpha } else { 0.0 };

    let u: f64 = rng.random();
    let greedy_bound = 1.0 - epsilon;
    let prior_bound = greedy_bound + epsilon * alpha;

    if u < greedy_bound {
        let action = greedy_action(agent, observation, goal, rng)?;
        Ok(ActionDecision {
            action,
            source: DecisionSource::Greedy,
        })
    } else if u < prior_bound {
        let prior = prior.expect("alpha is zero without a prior");
        let action = prior.action(observation, rng)?;
        Ok(ActionDecision {
            action,
            source: DecisionSource::Prior,
        })
    } else {
        let action = ACTIONS[rng.random_range(0..ACTIONS.len())];
        Ok(ActionDecision {
            action,
            source: DecisionSource::Random,
        })
    }
}
