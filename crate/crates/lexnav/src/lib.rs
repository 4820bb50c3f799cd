//! lexnav: language-guided object navigation on a desk-scale gridworld.
//!
//! An agent spawns in the corridor of a small apartment map and must walk to
//! a named object. Goals enter the learner either as one-hot indices or as
//! pretrained word vectors; when a new goal arrives, exploration can be
//! biased toward the frozen policy of the previously mastered goal that is
//! closest in embedding space.
//!
//! Modules:
//!
//! * [`embedding`] — word-vector store, cosine similarity, prior selection
//! * [`gridworld`] — ASCII apartment maps, BFS distances, shaped rewards
//! * [`nn`] — minimal dense network with Adam and gradient checking
//! * [`qlearn`] — tabular and dense goal-conditional Q-learners, replay
//! * [`transfer`] — the three-way exploration policy (greedy / prior / random)
//! * [`harness`] — seeded experiment runner, metrics CSV, SVG curves

// index-based loops stay readable in the dense-matrix kernels
#![allow(clippy::needless_range_loop)]

pub mod embedding;
pub mod gridworld;
pub mod harness;
pub mod nn;
pub mod qlearn;
pub mod transfer;
