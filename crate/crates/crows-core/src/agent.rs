//! The recurrent policy/value agent.
//!
//! One LSTM trunk feeds a softmax policy head over the three actions and a
//! scalar value head. In `rl2` mode the observation is extended with the
//! previous action (one-hot over 3) and the previous reward (raw scalar,
//! already in fractional-return units); in `vanilla` mode those inputs do
//! not exist. Policy and value heads start at zero, so an untrained agent
//! is exactly uniform over actions regardless of input.
//!
//! Hidden state is owned by the caller: the trainer threads it across the
//! tasks of a trial (`rl2`) or resets it per episode (`vanilla`).

use alloc::vec::Vec;

use rand::Rng as _;

use crate::env::{Action, ACTIONS};
use crate::error::{Error, Result};
use crate::nn::{Linear, LinearNodes, Lstm, LstmNodes};
use crate::rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Extra inputs in `rl2` mode: one-hot previous action plus previous reward.
pub const RL2_EXTRAS: usize = ACTIONS.len() + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Vanilla,
    Rl2,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Rl2 => "rl2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentConfig {
    pub mode: Mode,
    /// Number of feature columns in an observation.
    pub feature_dim: usize,
    pub hidden_dim: usize,
}

impl AgentConfig {
    pub fn new(mode: Mode, feature_dim: usize) -> Self {
        AgentConfig {
            mode,
            feature_dim,
            hidden_dim: 64,
        }
    }

    /// Width of the network input row.
    pub fn input_dim(&self) -> usize {
        self.feature_dim
            + match self.mode {
                Mode::Vanilla => 0,
                Mode::Rl2 => RL2_EXTRAS,
            }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::BadParameter {
                what: "feature_dim and hidden_dim must be >= 1",
            });
        }
        Ok(())
    }
}

/// Recurrent state `(h, c)`, both `[1, hidden_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hidden {
    pub h: Tensor,
    pub c: Tensor,
}

/// Policy distribution and value estimate at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyOutput {
    /// Probabilities in [`ACTIONS`] order; non-negative, summing to 1.
    pub probs: [f64; 3],
    pub value: f64,
}

impl PolicyOutput {
    /// Deterministic evaluation choice: highest probability, ties to the
    /// lowest index, hence to doing nothing on a full tie.
    pub fn greedy(&self) -> Action {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        Action::from_index(best).expect("index in range")
    }

    /// Categorical draw by cumulative probability in index order.
    pub fn sample(&self, rng: &mut rng::Rng) -> Action {
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::from_index(i).expect("index in range");
            }
        }
        Action::Sell
    }
}

/// Policy/value network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub config: AgentConfig,
    pub lstm: Lstm,
    pub policy: Linear,
    pub value: Linear,
}

/// Parameter names in [`Agent::params`] order, used by checkpoints.
pub const PARAM_NAMES: [&str; 7] = [
    "lstm.wx",
    "lstm.wh",
    "lstm.b",
    "policy.w",
    "policy.b",
    "value.w",
    "value.b",
];

impl Agent {
    /// Random LSTM trunk, zero heads: the initial policy is exactly
    /// uniform and the initial value estimate is exactly 0.
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, 0x6167656e);
        Ok(Agent {
            config,
            lstm: Lstm::init(config.input_dim(), config.hidden_dim, &mut r),
            policy: Linear::zeros(config.hidden_dim, ACTIONS.len()),
            value: Linear::zeros(config.hidden_dim, 1),
        })
    }

    /// All-zero recurrent state.
    pub fn initial_hidden(&self) -> Hidden {
        Hidden {
            h: Tensor::zeros(&[1, self.config.hidden_dim]),
            c: Tensor::zeros(&[1, self.config.hidden_dim]),
        }
    }

    /// Builds the network input row: the observation, plus the feedback
    /// extras in `rl2` mode. Vanilla mode ignores the feedback entirely.
    pub fn build_input(
        &self,
        observation: &[f64],
        prev_action: Action,
        prev_reward: f64,
    ) -> Result<Vec<f64>> {
        if observation.len() != self.config.feature_dim {
            return Err(Error::DimensionMismatch {
                what: "observation width",
                expected: self.config.feature_dim,
                got: observation.len(),
            });
        }
        let mut input = observation.to_vec();
        if self.config.mode == Mode::Rl2 {
            let mut one_hot = [0.0; 3];
            one_hot[prev_action.index()] = 1.0;
            input.extend_from_slice(&one_hot);
            input.push(prev_reward);
        }
        Ok(input)
    }

    /// One inference step; the caller threads the returned hidden state.
    pub fn act(
        &self,
        observation: &[f64],
        prev_action: Action,
        prev_reward: f64,
        hidden: &Hidden,
    ) -> Result<(PolicyOutput, Hidden)> {
        let input = self.build_input(observation, prev_action, prev_reward)?;
        self.forward_input(&input, hidden)
    }

    /// Forward pass on a prebuilt input row (rl2 extras already appended).
    pub fn forward_input(&self, input: &[f64], hidden: &Hidden) -> Result<(PolicyOutput, Hidden)> {
        if input.len() != self.config.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input width",
                expected: self.config.input_dim(),
                got: input.len(),
            });
        }
        let mut tape = Tape::new();
        let nodes = self.nodes(&mut tape);
        let x = tape.leaf(Tensor::row(input));
        let h = tape.leaf(hidden.h.clone());
        let c = tape.leaf(hidden.c.clone());
        let step = nodes.step(&mut tape, x, h, c)?;
        let probs_v = tape.value(step.probs);
        let out = PolicyOutput {
            probs: [probs_v.data()[0], probs_v.data()[1], probs_v.data()[2]],
            value: tape.value(step.value).item(),
        };
        let next = Hidden {
            h: tape.value(step.h).clone(),
            c: tape.value(step.c).clone(),
        };
        Ok((out, next))
    }

    /// Records all parameters on a tape for a training pass.
    pub fn nodes(&self, tape: &mut Tape) -> AgentNodes {
        AgentNodes {
            lstm: self.lstm.nodes(tape),
            policy: self.policy.nodes(tape),
            value: self.value.nodes(tape),
        }
    }

    /// Parameters in checkpoint order.
    pub fn params(&self) -> [&Tensor; 7] {
        [
            &self.lstm.wx,
            &self.lstm.wh,
            &self.lstm.b,
            &self.policy.w,
            &self.policy.b,
            &self.value.w,
            &self.value.b,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 7] {
        [
            &mut self.lstm.wx,
            &mut self.lstm.wh,
            &mut self.lstm.b,
            &mut self.policy.w,
            &mut self.policy.b,
            &mut self.value.w,
            &mut self.value.b,
        ]
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().iter().map(|t| t.numel()).collect()
    }
}

/// On-tape parameter handles for one training pass.
pub struct AgentNodes {
    pub lstm: LstmNodes,
    pub policy: LinearNodes,
    pub value: LinearNodes,
}

/// Node ids produced by one on-tape agent step.
pub struct StepNodes {
    /// `[1, 3]` action probabilities.
    pub probs: NodeId,
    /// `[1, 3]` log-probabilities.
    pub log_probs: NodeId,
    /// `[1, 1]` value estimate.
    pub value: NodeId,
    pub h: NodeId,
    pub c: NodeId,
}

impl AgentNodes {
    /// LSTM step plus both heads. `x` is the `[1, input_dim]` input row.
    pub fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId, c: NodeId) -> Result<StepNodes> {
        let (h2, c2) = self.lstm.step(tape, x, h, c)?;
        let logits = self.policy.apply(tape, h2)?;
        let probs = tape.softmax(logits);
        let log_probs = tape.log(probs);
        let value = self.value.apply(tape, h2)?;
        Ok(StepNodes {
            probs,
            log_probs,
            value,
            h: h2,
            c: c2,
        })
    }

    /// The seven parameter node ids, in [`Agent::params`] order.
    pub fn param_ids(&self) -> [NodeId; 7] {
        [
            self.lstm.wx,
            self.lstm.wh,
            self.lstm.b,
            self.policy.w,
            self.policy.b,
            self.value.w,
            self.value.b,
        ]
    }
}

/// The seven parameter node ids of [`AgentNodes::param_ids`] paired with
/// gradients harvested from a finished tape, as flat buffers. Parameters
/// that did not reach the loss produce zero gradients.
pub fn harvest_grads(
    tape: &Tape,
    grads: &crate::tape::Gradients,
    nodes: &AgentNodes,
) -> Vec<Vec<f64>> {
    nodes
        .param_ids()
        .iter()
        .map(|&id| match grads.get(id) {
            Some(g) => g.data().to_vec(),
            None => alloc::vec![0.0; tape.value(id).numel()],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn agent(mode: Mode) -> Agent {
        Agent::new(
            AgentConfig {
                mode,
                feature_dim: 5,
                hidden_dim: 8,
            },
            4,
        )
        .unwrap()
    }

    #[test]
    fn fresh_agent_is_uniform() {
        let a = agent(Mode::Vanilla);
        let (out, _) = a
            .act(&[0.4, -1.0, 2.0, 0.0, 3.3], Action::Hold, 0.0, &a.initial_hidden())
            .unwrap();
        for p in out.probs {
            assert!((p - 1.0 / 3.0).abs() < 0.05);
        }
        assert_eq!(out.value, 0.0);
        let sum: f64 = out.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn act_is_bitwise_deterministic() {
        let a = agent(Mode::Rl2);
        let h = a.initial_hidden();
        let obs = [0.1, 0.2, 0.3, 0.4, 0.5];
        let (o1, h1) = a.act(&obs, Action::Buy, 0.01, &h).unwrap();
        let (o2, h2) = a.act(&obs, Action::Buy, 0.01, &h).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn wrong_observation_width_is_an_error() {
        let a = agent(Mode::Vanilla);
        let r = a.act(&[1.0, 2.0], Action::Hold, 0.0, &a.initial_hidden());
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn vanilla_ignores_feedback_inputs() {
        let a = agent(Mode::Vanilla);
        let h = a.initial_hidden();
        let obs = [0.5, 0.5, 0.5, 0.5, 0.5];
        let (o1, _) = a.act(&obs, Action::Hold, 0.0, &h).unwrap();
        let (o2, _) = a.act(&obs, Action::Sell, -0.9, &h).unwrap();
        assert_eq!(o1, o2);
    }

    #[test]
    fn rl2_input_layout() {
        let a = agent(Mode::Rl2);
        assert_eq!(a.config.input_dim(), 5 + 4);
        let input = a
            .build_input(&[1.0, 2.0, 3.0, 4.0, 5.0], Action::Sell, -0.01)
            .unwrap();
        assert_eq!(input, vec![1.0, 2.0, 3.0, 4.0, 5.0, 0.0, 0.0, 1.0, -0.01]);
    }

    #[test]
    fn greedy_full_tie_does_nothing() {
        let out = PolicyOutput {
            probs: [1.0 / 3.0; 3],
            value: 0.0,
        };
        assert_eq!(out.greedy(), Action::Hold);
        let buyish = PolicyOutput {
            probs: [0.2, 0.5, 0.3],
            value: 0.0,
        };
        assert_eq!(buyish.greedy(), Action::Buy);
    }

    #[test]
    fn initial_hidden_is_zero() {
        let a = agent(Mode::Rl2);
        let h = a.initial_hidden();
        assert!(h.h.iter().all(|&v| v == 0.0));
        assert!(h.c.iter().all(|&v| v == 0.0));
        assert_eq!(h.h.shape(), &[1, 8]);
    }

    #[test]
    fn log_probs_are_finite_for_modest_inputs() {
        let a = agent(Mode::Vanilla);
        let (out, _) = a
            .act(&[5.0, -5.0, 2.0, 0.0, 1.0], Action::Hold, 0.0, &a.initial_hidden())
            .unwrap();
        for p in out.probs {
            assert!(p >= 1e-12);
            assert!(crate::fmath::ln(p).is_finite());
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let out = PolicyOutput {
            probs: [0.1, 0.6, 0.3],
            value: 0.0,
        };
        let mut r1 = rng::stream(5, 1);
        let mut r2 = rng::stream(5, 1);
        let s1: Vec<Action> = (0..20).map(|_| out.sample(&mut r1)).collect();
        let s2: Vec<Action> = (0..20).map(|_| out.sample(&mut r2)).collect();
        assert_eq!(s1, s2);
        assert!(s1.contains(&Action::Buy));
    }
}
