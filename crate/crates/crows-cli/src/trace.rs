//! Per-trade trace logs from a greedy evaluation pass.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crows_core::env::Action;
use crows_core::episode::Episode;
use crows_core::trainer::{Evaluation, IterationStats};

use crate::error::{CliError, Result};

pub const TRACE_HEADER: &str = "symbol,date,t,action,entry_price,exit_t,exit_price,reward";

pub const TRAINING_LOG_HEADER: &str =
    "iteration,mean_trial_return,policy_loss,value_loss,entropy,clip_fraction";

/// One CSV row per training iteration.
pub fn write_training_log(path: &Path, log: &[IterationStats]) -> Result<()> {
    let mut out = File::create(path)?;
    writeln!(out, "{TRAINING_LOG_HEADER}")?;
    for row in log {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.iteration,
            row.mean_trial_return,
            row.policy_loss,
            row.value_loss,
            row.entropy,
            row.clip_fraction
        )?;
    }
    Ok(())
}

pub fn action_name(a: Action) -> &'static str {
    match a {
        Action::Hold => "hold",
        Action::Buy => "buy",
        Action::Sell => "sell",
    }
}

/// One CSV row per completed order, in episode order. `episodes` must be
/// the same slice the evaluation ran over.
pub fn write_trace(path: &Path, episodes: &[Episode], evaluation: &Evaluation) -> Result<()> {
    if episodes.len() != evaluation.orders.len() {
        return Err(CliError::runtime(format!(
            "trace mismatch: {} episodes, {} order lists",
            episodes.len(),
            evaluation.orders.len()
        )));
    }
    let mut out = File::create(path)?;
    writeln!(out, "{TRACE_HEADER}")?;
    for (episode, orders) in episodes.iter().zip(&evaluation.orders) {
        for o in orders {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                episode.symbol,
                episode.date,
                o.t,
                action_name(o.action),
                o.entry_price,
                o.exit_t,
                o.exit_price,
                o.reward
            )?;
        }
    }
    Ok(())
}
