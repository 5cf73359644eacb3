//! LSTM cell, linear layer, and Adam, built on the [`Tape`](crate::tape::Tape).
//!
//! Parameters live off-tape as plain [`Tensor`]s. A forward pass leafs them
//! onto a fresh tape once (so gradients from every timestep accumulate into
//! one buffer per parameter) and then emits primitive ops per step.
//!
//! The LSTM uses the standard four-gate cell. The pre-activation block is
//! laid out as `[input | forget | cell | output]` along the last axis:
//!
//! ```text
//! z = x Wx + h Wh + b            z in [1, 4H]
//! i = sigmoid(z[0..H])     f = sigmoid(z[H..2H])
//! g = tanh(z[2H..3H])      o = sigmoid(z[3H..4H])
//! c' = f * c + i * g       h' = o * tanh(c')
//! ```

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::Result;
use crate::fmath;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Number of LSTM gates.
pub const GATES: usize = 4;

/// LSTM cell parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl Lstm {
    /// Uniform `±1/sqrt(fan_in)` weights; forget-gate biases start at 1.0
    /// so early training does not erase the cell state.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let wx = uniform_tensor(&[input_dim, GATES * hidden_dim], input_dim, rng);
        let wh = uniform_tensor(&[hidden_dim, GATES * hidden_dim], hidden_dim, rng);
        let mut b = vec![0.0; GATES * hidden_dim];
        for v in &mut b[hidden_dim..2 * hidden_dim] {
            *v = 1.0;
        }
        Lstm {
            wx,
            wh,
            b: Tensor::vector(&b),
            input_dim,
            hidden_dim,
        }
    }

    /// All-zero parameters, for tests that want a fully inert cell.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Lstm {
            wx: Tensor::zeros(&[input_dim, GATES * hidden_dim]),
            wh: Tensor::zeros(&[hidden_dim, GATES * hidden_dim]),
            b: Tensor::zeros(&[GATES * hidden_dim]),
            input_dim,
            hidden_dim,
        }
    }

    /// Records the parameters on a tape for one forward pass.
    pub fn nodes(&self, tape: &mut Tape) -> LstmNodes {
        LstmNodes {
            wx: tape.leaf(self.wx.clone()),
            wh: tape.leaf(self.wh.clone()),
            b: tape.leaf(self.b.clone()),
            hidden_dim: self.hidden_dim,
        }
    }
}

/// On-tape handles to one [`Lstm`]'s parameters.
pub struct LstmNodes {
    pub wx: NodeId,
    pub wh: NodeId,
    pub b: NodeId,
    hidden_dim: usize,
}

impl LstmNodes {
    /// One cell step. `x` is `[1, input_dim]`; `h` and `c` are `[1, H]`.
    /// Returns the next `(h, c)`.
    pub fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId, c: NodeId) -> Result<(NodeId, NodeId)> {
        let hd = self.hidden_dim;
        let zx = tape.matmul(x, self.wx)?;
        let zh = tape.matmul(h, self.wh)?;
        let z = tape.add(zx, zh)?;
        let z = tape.add(z, self.b)?;

        let i_pre = tape.slice(z, 0, hd)?;
        let f_pre = tape.slice(z, hd, hd)?;
        let g_pre = tape.slice(z, 2 * hd, hd)?;
        let o_pre = tape.slice(z, 3 * hd, hd)?;

        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);

        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let c_act = tape.tanh(c_next);
        let h_next = tape.mul(o, c_act)?;
        Ok((h_next, c_next))
    }
}

/// Dense layer `y = x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Linear {
            w: uniform_tensor(&[in_dim, out_dim], in_dim, rng),
            b: Tensor::zeros(&[out_dim]),
        }
    }

    /// All-zero layer; with softmax on top this yields an exactly uniform
    /// distribution regardless of input.
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: Tensor::zeros(&[in_dim, out_dim]),
            b: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn nodes(&self, tape: &mut Tape) -> LinearNodes {
        LinearNodes {
            w: tape.leaf(self.w.clone()),
            b: tape.leaf(self.b.clone()),
        }
    }
}

/// On-tape handles to one [`Linear`]'s parameters.
pub struct LinearNodes {
    pub w: NodeId,
    pub b: NodeId,
}

impl LinearNodes {
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let y = tape.matmul(x, self.w)?;
        tape.add(y, self.b)
    }
}

fn uniform_tensor(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let bound = 1.0 / fmath::sqrt(fan_in as f64);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape/len agree by construction")
}

/// Adam optimizer over an ordered list of parameter tensors.
///
/// First and second moments are kept per entry with shared step count `t`;
/// bias correction follows the original formulation, so with a fresh state
/// the first update moves each entry by about `lr * sign(grad)` and a zero
/// gradient leaves parameters untouched.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update. `grads[k]` is the flat gradient for `params[k]` and must
    /// match its length.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - fmath::powi(self.beta1, t);
        let bc2 = 1.0 - fmath::powi(self.beta2, t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(param.numel(), grad.len(), "gradient length mismatch");
            for ((p, g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= self.lr * mhat / (fmath::sqrt(vhat) + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn run_cell(lstm: &Lstm, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let nodes = lstm.nodes(&mut tape);
        let x = tape.leaf(Tensor::row(x));
        let h = tape.leaf(Tensor::zeros(&[1, lstm.hidden_dim]));
        let c = tape.leaf(Tensor::zeros(&[1, lstm.hidden_dim]));
        let (h2, c2) = nodes.step(&mut tape, x, h, c).unwrap();
        (
            tape.value(h2).data().to_vec(),
            tape.value(c2).data().to_vec(),
        )
    }

    #[test]
    fn zero_parameters_give_zero_state() {
        let lstm = Lstm::zeros(3, 4);
        let (h, c) = run_cell(&lstm, &[1.0, -2.0, 0.5]);
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cell_is_deterministic() {
        let lstm = Lstm::init(3, 4, &mut stream(9, 0));
        let (h1, c1) = run_cell(&lstm, &[0.1, 0.2, 0.3]);
        let (h2, c2) = run_cell(&lstm, &[0.1, 0.2, 0.3]);
        assert_eq!(h1, h2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let lstm = Lstm::init(2, 5, &mut stream(1, 0));
        let b = lstm.b.data();
        assert!(b[..5].iter().all(|&v| v == 0.0));
        assert!(b[5..10].iter().all(|&v| v == 1.0));
        assert!(b[10..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_head_is_uniform_after_softmax() {
        let head = Linear::zeros(4, 3);
        let mut tape = Tape::new();
        let nodes = head.nodes(&mut tape);
        let x = tape.leaf(Tensor::row(&[3.0, -1.0, 0.5, 2.0]));
        let logits = nodes.apply(&mut tape, x).unwrap();
        let probs = tape.softmax(logits);
        for p in tape.value(probs).iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut p = Tensor::vector(&[1.0, -2.0, 3.0]);
        let before = p.data().to_vec();
        let mut adam = Adam::new(0.1, &[3]);
        adam.step(&mut [&mut p], &[vec![0.0; 3]]);
        assert_eq!(p.data(), &before[..]);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut p = Tensor::vector(&[1.0, 1.0]);
        let mut adam = Adam::new(0.05, &[2]);
        adam.step(&mut [&mut p], &[vec![0.3, -700.0]]);
        // mhat = g, vhat = g^2, so the move is lr * g/(|g| + eps).
        assert!((p.data()[0] - (1.0 - 0.05)).abs() < 1e-6);
        assert!((p.data()[1] - (1.0 + 0.05)).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_a_parabola() {
        let mut x = Tensor::scalar(5.0);
        let mut adam = Adam::new(0.1, &[1]);
        for _ in 0..500 {
            let g = 2.0 * x.item();
            adam.step(&mut [&mut x], &[vec![g]]);
        }
        assert!(x.item().abs() < 0.01, "ended at {}", x.item());
    }
}
