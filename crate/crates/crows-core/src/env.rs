//! The intraday trading environment.
//!
//! The agent only ever acts while flat. Doing nothing advances the clock one
//! bar. Entering a position (buy or sell) scans forward for the first close
//! that moves far enough against or in favor of the entry, pays the
//! position's whole return as one reward, and jumps the clock to that exit
//! bar; if no close triggers, the position is closed on the day's final bar.
//! The episode ends when the clock reaches the last bar.
//!
//! Triggers compare close prices only. Entry is at the raw close of the bar
//! on which the order is issued; rewards are fractional returns of that
//! entry price. With the symmetric default rule, a buy and a sell issued at
//! the same bar exit on the same bar with exactly opposite rewards.

use alloc::vec::Vec;

use crate::episode::Episode;
use crate::error::{Error, Result};

/// The three legal actions. Index order (hold first) is also the policy
/// head's output order, so a full tie in greedy evaluation resolves to
/// doing nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Hold,
    Buy,
    Sell,
}

/// All actions in policy-head index order.
pub const ACTIONS: [Action; 3] = [Action::Hold, Action::Buy, Action::Sell];

impl Action {
    /// Position in the policy head's output vector.
    pub fn index(self) -> usize {
        match self {
            Action::Hold => 0,
            Action::Buy => 1,
            Action::Sell => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        ACTIONS.get(i).copied()
    }

    /// Signed market value: buy +1, sell -1, do nothing 0.
    pub fn value(self) -> i8 {
        match self {
            Action::Hold => 0,
            Action::Buy => 1,
            Action::Sell => -1,
        }
    }
}

/// Exit thresholds as fractions of the entry price.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitRule {
    pub stop_loss_frac: f64,
    pub target_frac: f64,
}

impl Default for ExitRule {
    fn default() -> Self {
        ExitRule {
            stop_loss_frac: 0.01,
            target_frac: 0.01,
        }
    }
}

impl ExitRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_loss_frac > 0.0) || !self.stop_loss_frac.is_finite() {
            return Err(Error::BadParameter {
                what: "stop_loss_frac must be > 0",
            });
        }
        if !(self.target_frac > 0.0) || !self.target_frac.is_finite() {
            return Err(Error::BadParameter {
                what: "target_frac must be > 0",
            });
        }
        Ok(())
    }
}

/// One acting step as seen by the agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Bar index at which the action was issued.
    pub t: usize,
    /// Feature row at `t` (without the recurrent feedback extras).
    pub observation: Vec<f64>,
    pub action: Action,
    /// Fractional return of the order this step opened, 0 for do-nothing.
    pub reward: f64,
    /// Action of the previous acting step (do-nothing right after reset).
    pub prev_action: Action,
    pub prev_reward: f64,
    pub done: bool,
}

/// One completed round trip, for the audit trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderRecord {
    pub t: usize,
    pub action: Action,
    pub entry_price: f64,
    pub exit_t: usize,
    pub exit_price: f64,
    pub reward: f64,
}

/// Finds the exit bar and reward for a position entered at bar `t`.
///
/// `dir` is +1.0 for a buy, -1.0 for a sell. Returns `None` only when `t`
/// is the last bar (nothing to scan). A buy exits at the first close `C`
/// with `C >= P0*(1+target)` or `C <= P0*(1-stop)`; a sell swaps the two
/// fractions. Failing both, the position closes at the day's final bar.
/// Either way the reward is `dir * (C_exit - P0) / P0`.
pub fn scan_exit(raw_close: &[f64], t: usize, dir: f64, rule: &ExitRule) -> Option<(usize, f64)> {
    if t + 1 >= raw_close.len() {
        return None;
    }
    let p0 = raw_close[t];
    let (up_frac, down_frac) = if dir > 0.0 {
        (rule.target_frac, rule.stop_loss_frac)
    } else {
        (rule.stop_loss_frac, rule.target_frac)
    };
    let upper = p0 * (1.0 + up_frac);
    let lower = p0 * (1.0 - down_frac);
    let exit_t = raw_close[t + 1..]
        .iter()
        .position(|&c| c >= upper || c <= lower)
        .map(|i| t + 1 + i)
        .unwrap_or(raw_close.len() - 1);
    Some((exit_t, dir * (raw_close[exit_t] - p0) / p0))
}

/// Reward of a hypothetical buy issued at bar `t` (0 on the last bar).
/// Used as the regression label when ranking features.
pub fn hypothetical_buy_reward(episode: &Episode, rule: &ExitRule, t: usize) -> f64 {
    scan_exit(&episode.raw_close, t, 1.0, rule)
        .map(|(_, r)| r)
        .unwrap_or(0.0)
}

/// Environment over one episode. Create, step until done, read the order
/// trace; `reset` rewinds to an identical fresh run.
pub struct TradingEnv<'a> {
    episode: &'a Episode,
    rule: ExitRule,
    cost_frac: f64,
    clock: usize,
    done: bool,
    prev_action: Action,
    prev_reward: f64,
    orders: Vec<OrderRecord>,
}

impl<'a> TradingEnv<'a> {
    pub fn new(episode: &'a Episode, rule: ExitRule) -> Result<Self> {
        rule.validate()?;
        if episode.len() < 2 {
            return Err(Error::EpisodeTooShort {
                have: episode.len(),
                need: 2,
            });
        }
        Ok(TradingEnv {
            episode,
            rule,
            cost_frac: 0.0,
            clock: 0,
            done: false,
            prev_action: Action::Hold,
            prev_reward: 0.0,
            orders: Vec::new(),
        })
    }

    /// Sets a per-round-trip transaction cost subtracted from each order's
    /// reward. Default 0.
    pub fn with_cost(mut self, cost_frac: f64) -> Self {
        self.cost_frac = cost_frac;
        self
    }

    /// Rewinds to the first bar with no history. Two resets observe the
    /// same episode identically.
    pub fn reset(&mut self) {
        self.clock = 0;
        self.done = false;
        self.prev_action = Action::Hold;
        self.prev_reward = 0.0;
        self.orders.clear();
    }

    pub fn episode(&self) -> &Episode {
        self.episode
    }

    /// Current bar index.
    pub fn t(&self) -> usize {
        self.clock
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Feature row at the current bar.
    pub fn observation(&self) -> Vec<f64> {
        self.episode.feature_row(self.clock)
    }

    /// Feedback inputs for the next acting step: previous action and its
    /// reward.
    pub fn feedback(&self) -> (Action, f64) {
        (self.prev_action, self.prev_reward)
    }

    pub fn orders(&self) -> &[OrderRecord] {
        &self.orders
    }

    pub fn step(&mut self, action: Action) -> Result<Transition> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        let t0 = self.clock;
        let mut reward = 0.0;
        match action {
            Action::Hold => self.clock += 1,
            Action::Buy | Action::Sell => {
                let dir = action.value() as f64;
                let (exit_t, raw_reward) =
                    scan_exit(&self.episode.raw_close, t0, dir, &self.rule)
                        .expect("acting bar is never the last bar");
                reward = raw_reward - self.cost_frac;
                self.orders.push(OrderRecord {
                    t: t0,
                    action,
                    entry_price: self.episode.raw_close[t0],
                    exit_t,
                    exit_price: self.episode.raw_close[exit_t],
                    reward,
                });
                self.clock = exit_t;
            }
        }
        if self.clock >= self.episode.len() - 1 {
            self.done = true;
        }
        let transition = Transition {
            t: t0,
            observation: self.episode.feature_row(t0),
            action,
            reward,
            prev_action: self.prev_action,
            prev_reward: self.prev_reward,
            done: self.done,
        };
        self.prev_action = action;
        self.prev_reward = reward;
        Ok(transition)
    }
}
