//! PPO training over trials of tasks.
//!
//! A trial is an ordered list of episodes shown to one agent. In `rl2`
//! mode the hidden state persists across the tasks of a trial, so the
//! whole trial is one replay sequence; in `vanilla` mode the hidden state
//! resets per episode and each task is its own sequence. Either way every
//! sequence starts from the all-zero hidden state and ends on a terminal
//! step, so updates replay full sequences and never bootstrap.
//!
//! The update is full-batch recurrent PPO: each epoch replays every
//! sequence on a fresh tape, accumulates gradients of the summed loss,
//! and takes one Adam step. The clipped surrogate enters the tape as the
//! ratio path when the unclipped branch attains the min, and as a
//! constant otherwise; that is the exact gradient of `min(r·A, clip(r)·A)`
//! because the clipped branch is locally constant in the parameters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::agent::{Agent, Mode};
use crate::env::{Action, ExitRule, OrderRecord, TradingEnv};
use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::fmath;
use crate::nn::Adam;
use crate::rng;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// PPO hyperparameters. Everything is exposed to configuration; the
/// defaults are the usual PPO settings plus the two-episode trial
/// convention for fast in-trial adaptation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpoHyper {
    /// Surrogate clip width (the ε in `clip(ratio, 1-ε, 1+ε)`).
    pub clip: f64,
    pub gamma: f64,
    pub lam: f64,
    /// Optimizer epochs per collected buffer.
    pub epochs: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub iterations: usize,
    pub trials_per_iter: usize,
    pub tasks_per_trial: usize,
}

impl Default for PpoHyper {
    fn default() -> Self {
        PpoHyper {
            clip: 0.2,
            gamma: 0.99,
            lam: 0.95,
            epochs: 4,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            iterations: 100,
            trials_per_iter: 16,
            tasks_per_trial: 2,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::BadParameter {
                what: "clip must lie in (0, 1)",
            });
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return Err(Error::BadParameter {
                what: "gamma and lam must lie in [0, 1]",
            });
        }
        if self.epochs == 0 || self.trials_per_iter == 0 || self.tasks_per_trial == 0 {
            return Err(Error::BadParameter {
                what: "epochs, trials_per_iter and tasks_per_trial must be >= 1",
            });
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::BadParameter {
                what: "learning_rate must be positive and finite",
            });
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(Error::BadParameter {
                what: "value_coef and entropy_coef must be >= 0",
            });
        }
        Ok(())
    }
}

/// One environment step as stored for replay. `input` is the full network
/// input row, so replay never needs the environment again.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub input: Vec<f64>,
    pub action: Action,
    /// Log-probability of `action` under the collecting policy.
    pub logp_old: f64,
    /// Value estimate under the collecting policy.
    pub value_old: f64,
    pub reward: f64,
    /// True exactly at task ends.
    pub done: bool,
}

/// A maximal stretch of steps sharing one hidden-state unroll. The
/// checkpoint at a sequence start is always the all-zero hidden state.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SequenceRecord {
    pub steps: Vec<StepRecord>,
}

/// Everything one iteration collected, in trial order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RolloutBuffer {
    pub sequences: Vec<SequenceRecord>,
    /// Total reward of each trial, for the training log.
    pub trial_returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn n_steps(&self) -> usize {
        self.sequences.iter().map(|s| s.steps.len()).sum()
    }

    /// Flattened (rewards, values, dones) in sequence order, ready for
    /// advantage estimation.
    pub fn flatten(&self) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let n = self.n_steps();
        let mut rewards = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        for seq in &self.sequences {
            for s in &seq.steps {
                rewards.push(s.reward);
                values.push(s.value_old);
                dones.push(s.done);
            }
        }
        (rewards, values, dones)
    }
}

/// Runs every trial to completion and records all step data.
///
/// Action choice is a categorical draw from the policy (or the greedy
/// argmax when `greedy` is set, as evaluation does). Each trial gets its
/// own rng stream keyed by trial index, so trajectories do not depend on
/// how trials would be distributed over workers.
pub fn collect(
    agent: &Agent,
    episodes: &[Episode],
    trials: &[Vec<usize>],
    rule: &ExitRule,
    cost_frac: f64,
    seed: u64,
    greedy: bool,
) -> Result<RolloutBuffer> {
    if trials.is_empty() || trials.iter().any(Vec::is_empty) {
        return Err(Error::BadParameter {
            what: "every trial needs at least one task",
        });
    }
    let mut buffer = RolloutBuffer::default();
    for (trial_idx, trial) in trials.iter().enumerate() {
        let mut trial_rng = rng::stream(seed, trial_idx as u64);
        let mut trial_return = 0.0;
        let mut hidden = agent.initial_hidden();
        let mut seq = SequenceRecord::default();
        for &task in trial {
            let episode = episodes.get(task).ok_or(Error::BadParameter {
                what: "trial references an episode index out of range",
            })?;
            let mut env = TradingEnv::new(episode, *rule)?.with_cost(cost_frac);
            if agent.config.mode == Mode::Vanilla {
                hidden = agent.initial_hidden();
            }
            loop {
                let obs = env.observation();
                let (pa, pr) = env.feedback();
                let input = agent.build_input(&obs, pa, pr)?;
                let (out, next) = agent.forward_input(&input, &hidden)?;
                let action = if greedy {
                    out.greedy()
                } else {
                    out.sample(&mut trial_rng)
                };
                let tr = env.step(action)?;
                seq.steps.push(StepRecord {
                    input,
                    action,
                    logp_old: fmath::ln(out.probs[action.index()]),
                    value_old: out.value,
                    reward: tr.reward,
                    done: tr.done,
                });
                trial_return += tr.reward;
                hidden = next;
                if tr.done {
                    break;
                }
            }
            if agent.config.mode == Mode::Vanilla {
                buffer.sequences.push(core::mem::take(&mut seq));
            }
        }
        if agent.config.mode == Mode::Rl2 {
            buffer.sequences.push(seq);
        }
        buffer.trial_returns.push(trial_return);
    }
    Ok(buffer)
}

/// Generalized advantage estimation with resets at done flags.
///
/// The value after a terminal step bootstraps as 0, and so does the value
/// past the end of the buffer. Returns `(advantages, returns)` where
/// `returns[t] = advantages[t] + values[t]`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n, "values length");
    assert_eq!(dones.len(), n, "dones length");
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value * mask - values[t];
        acc = delta + gamma * lam * mask * acc;
        advantages[t] = acc;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// In-place normalization to mean 0 and standard deviation 1. When the
/// spread is below 1e-8 the advantages are only centered, never blown up
/// by a near-zero divisor.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = fmath::sqrt(var);
    let denom = if std < 1e-8 { 1.0 } else { std };
    for a in advantages.iter_mut() {
        *a = (*a - mean) / denom;
    }
}

/// Value of the per-step clipped surrogate `min(r·A, clip(r, 1-ε, 1+ε)·A)`
/// and whether the clipped branch is the strict minimum. When it is, the
/// surrogate is locally constant and contributes no gradient.
pub fn clipped_term(ratio: f64, advantage: f64, clip: f64) -> (f64, bool) {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    let unclipped_value = ratio * advantage;
    let clipped_value = clipped * advantage;
    if unclipped_value <= clipped_value {
        (unclipped_value, false)
    } else {
        (clipped_value, true)
    }
}

/// Aggregate statistics of one optimizer epoch.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LossStats {
    /// Negated mean clipped surrogate.
    pub policy_loss: f64,
    /// Mean squared error of the value head against GAE returns.
    pub value_loss: f64,
    /// Mean policy entropy.
    pub entropy: f64,
    /// Fraction of steps with `|ratio - 1| > clip`.
    pub clip_fraction: f64,
}

/// One full-batch gradient evaluation of the PPO loss at the agent's
/// current parameters: total loss value, flat gradients in parameter
/// order, and the epoch statistics. Sequences are replayed whole from
/// their zero hidden checkpoints; no step crosses a tape boundary.
pub fn epoch_gradients(
    agent: &Agent,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    hyper: &PpoHyper,
    iteration: usize,
) -> Result<(f64, Vec<Vec<f64>>, LossStats)> {
    let n_total = buffer.n_steps();
    if n_total == 0 {
        return Err(Error::BadParameter {
            what: "rollout buffer is empty",
        });
    }
    assert_eq!(advantages.len(), n_total, "advantages length");
    assert_eq!(returns.len(), n_total, "returns length");

    let sizes = agent.param_sizes();
    let mut grad_acc: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut total_loss = 0.0;
    let mut surrogate_sum = 0.0;
    let mut mse_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut clip_count = 0usize;

    let mut offset = 0;
    for (seq_idx, seq) in buffer.sequences.iter().enumerate() {
        let len = seq.steps.len();
        let adv = &advantages[offset..offset + len];
        let ret = &returns[offset..offset + len];
        offset += len;

        let mut tape = Tape::new();
        let nodes = agent.nodes(&mut tape);
        let mut h = tape.constant(Tensor::zeros(&[1, agent.config.hidden_dim]));
        let mut c = tape.constant(Tensor::zeros(&[1, agent.config.hidden_dim]));
        let mut contributions = Vec::with_capacity(len);

        for (t, step) in seq.steps.iter().enumerate() {
            let x = tape.constant(Tensor::row(&step.input));
            let out = nodes.step(&mut tape, x, h, c)?;
            h = out.h;
            c = out.c;

            let logp_a = tape.slice(out.log_probs, step.action.index(), 1)?;
            let old = tape.constant(Tensor::row(&[step.logp_old]));
            let diff = tape.sub(logp_a, old)?;
            let ratio = tape.exp(diff);
            let ratio_value = tape.value(ratio).item();

            let (term_value, clipped) = clipped_term(ratio_value, adv[t], hyper.clip);
            let surrogate = if clipped {
                tape.constant(Tensor::scalar(term_value))
            } else {
                let r_sum = tape.sum(ratio);
                tape.scale(r_sum, adv[t])
            };
            surrogate_sum += term_value;
            if (ratio_value - 1.0).abs() > hyper.clip {
                clip_count += 1;
            }

            let target = tape.constant(Tensor::row(&[ret[t]]));
            let err = tape.sub(out.value, target)?;
            let sq = tape.mul(err, err)?;
            let mse = tape.sum(sq);
            mse_sum += tape.value(mse).item();

            let plogp = tape.mul(out.probs, out.log_probs)?;
            let plogp_sum = tape.sum(plogp);
            let entropy = tape.scale(plogp_sum, -1.0);
            entropy_sum += tape.value(entropy).item();

            let neg_surrogate = tape.scale(surrogate, -1.0);
            let weighted_mse = tape.scale(mse, hyper.value_coef);
            let weighted_entropy = tape.scale(entropy, -hyper.entropy_coef);
            let partial = tape.add(neg_surrogate, weighted_mse)?;
            contributions.push(tape.add(partial, weighted_entropy)?);
        }

        let mut sum = contributions[0];
        for &ct in &contributions[1..] {
            sum = tape.add(sum, ct)?;
        }
        let loss = tape.scale(sum, 1.0 / n_total as f64);
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                detail: format!("sequence {seq_idx} produced loss {loss_value}"),
            });
        }
        total_loss += loss_value;

        let grads = tape.backward(loss)?;
        for (acc, g) in grad_acc
            .iter_mut()
            .zip(crate::agent::harvest_grads(&tape, &grads, &nodes))
        {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }

    let n = n_total as f64;
    let stats = LossStats {
        policy_loss: -surrogate_sum / n,
        value_loss: mse_sum / n,
        entropy: entropy_sum / n,
        clip_fraction: clip_count as f64 / n,
    };
    Ok((total_loss, grad_acc, stats))
}

/// Runs `hyper.epochs` full-batch epochs, one Adam step each. Advantages
/// must already be normalized for the iteration. Returns the statistics
/// of the final epoch.
pub fn ppo_update(
    agent: &mut Agent,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    hyper: &PpoHyper,
    iteration: usize,
) -> Result<LossStats> {
    let mut last = LossStats::default();
    for _ in 0..hyper.epochs {
        let (_, grads, stats) = epoch_gradients(agent, buffer, advantages, returns, hyper, iteration)?;
        adam.step(&mut agent.params_mut(), &grads);
        last = stats;
    }
    Ok(last)
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_trial_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Draws trials for one iteration: a uniform group per trial, then
/// uniform tasks within that group.
pub fn sample_trials(
    groups: &[Vec<usize>],
    trials_per_iter: usize,
    tasks_per_trial: usize,
    rng: &mut rng::Rng,
) -> Vec<Vec<usize>> {
    (0..trials_per_iter)
        .map(|_| {
            let group = &groups[rng.gen_range(0..groups.len())];
            (0..tasks_per_trial)
                .map(|_| group[rng.gen_range(0..group.len())])
                .collect()
        })
        .collect()
}

/// The full training loop: sample trials from the episode pool, collect,
/// estimate advantages, update. Deterministic for a fixed seed.
///
/// `groups` constrains trial composition: each trial first draws one
/// group, then draws all its tasks from inside that group. `None` treats
/// the whole pool as a single group. Grouping is how a caller expresses
/// "tasks of a trial share a day", which is what makes reward feedback
/// from an early task informative about a later one.
pub fn train(
    agent: &mut Agent,
    episodes: &[Episode],
    groups: Option<&[Vec<usize>]>,
    rule: &ExitRule,
    cost_frac: f64,
    hyper: &PpoHyper,
    seed: u64,
) -> Result<Vec<IterationStats>> {
    hyper.validate()?;
    if episodes.is_empty() {
        return Err(Error::BadParameter {
            what: "training pool is empty",
        });
    }
    let whole_pool: Vec<Vec<usize>>;
    let groups = match groups {
        Some(g) => g,
        None => {
            whole_pool = vec![(0..episodes.len()).collect()];
            &whole_pool
        }
    };
    if groups.iter().any(Vec::is_empty)
        || groups.is_empty()
        || groups.iter().flatten().any(|&i| i >= episodes.len())
    {
        return Err(Error::BadParameter {
            what: "groups must be non-empty and reference the episode pool",
        });
    }
    let mut adam = Adam::new(hyper.learning_rate, &agent.param_sizes());
    let mut log = Vec::with_capacity(hyper.iterations);
    for iteration in 0..hyper.iterations {
        let iter_seed = rng::derive_seed(seed, iteration as u64);
        let mut sample_rng = rng::stream(iter_seed, 0);
        let trials = sample_trials(
            groups,
            hyper.trials_per_iter,
            hyper.tasks_per_trial,
            &mut sample_rng,
        );
        let buffer = collect(
            agent,
            episodes,
            &trials,
            rule,
            cost_frac,
            rng::derive_seed(iter_seed, 1),
            false,
        )?;
        let (rewards, values, dones) = buffer.flatten();
        let (mut advantages, returns) = gae(&rewards, &values, &dones, hyper.gamma, hyper.lam);
        normalize_advantages(&mut advantages);
        let stats = ppo_update(agent, &mut adam, &buffer, &advantages, &returns, hyper, iteration)?;
        let mean_return =
            buffer.trial_returns.iter().sum::<f64>() / buffer.trial_returns.len() as f64;
        log.push(IterationStats {
            iteration,
            mean_trial_return: mean_return,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
        });
    }
    Ok(log)
}

/// Greedy evaluation result over a list of episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Sum of per-trade fractional returns for each episode.
    pub episode_returns: Vec<f64>,
    /// Completed orders for each episode, for trace logs.
    pub orders: Vec<Vec<OrderRecord>>,
}

/// Deterministic greedy rollout of the episode list. Vanilla agents start
/// every episode from a fresh zero hidden state; rl2 agents treat the list
/// as one trial and thread hidden state across episode boundaries, exactly
/// as collection does, so whatever the recurrent state inferred on earlier
/// episodes carries into later ones.
pub fn evaluate(
    agent: &Agent,
    episodes: &[Episode],
    rule: &ExitRule,
    cost_frac: f64,
) -> Result<Evaluation> {
    let mut episode_returns = Vec::with_capacity(episodes.len());
    let mut orders = Vec::with_capacity(episodes.len());
    let mut hidden = agent.initial_hidden();
    for episode in episodes {
        let mut env = TradingEnv::new(episode, *rule)?.with_cost(cost_frac);
        if agent.config.mode == Mode::Vanilla {
            hidden = agent.initial_hidden();
        }
        let mut total = 0.0;
        while !env.is_done() {
            let obs = env.observation();
            let (pa, pr) = env.feedback();
            let input = agent.build_input(&obs, pa, pr)?;
            let (out, next) = agent.forward_input(&input, &hidden)?;
            let tr = env.step(out.greedy())?;
            total += tr.reward;
            hidden = next;
        }
        episode_returns.push(total);
        orders.push(env.orders().to_vec());
    }
    Ok(Evaluation {
        episode_returns,
        orders,
    })
}
