//! Core algorithms for an episodic intraday trading research stack.
//!
//! Everything in this crate is pure computation over owned buffers: a small
//! f64 tensor engine with tape-based reverse-mode differentiation, an LSTM
//! cell and Adam optimizer built on it, per-minute bar normalization and
//! technical indicators, a flat-only trading environment with exit-triggered
//! rewards, hand-crafted candlestick pattern detectors, a run-pattern miner
//! over primary and derived features, a random-forest reward ranker, and a
//! recurrent PPO trainer with an RL2 feedback channel.
//!
//! The crate is `no_std` (with `alloc`); file formats, CSV ingest, the
//! synthetic data generator, and the experiment harness live in the
//! companion `crows-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

mod fmath;

pub mod agent;
pub mod env;
pub mod episode;
pub mod error;
pub mod forest;
pub mod indicators;
pub mod miner;
pub mod nn;
pub mod patterns;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::Error;
pub use tensor::Tensor;
