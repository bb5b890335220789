//! Standard LSTM gating (input/forget/output gates, cell state) and the
//! bidirectional wrapper shared by the text and graph encoders.
//!
//! Initial hidden and cell states are zero vectors.

use rand::Rng;

use crate::autodiff::{concat, Param, ParamSet, Tape, Tensor, TensorError};
use crate::scalar::Real;

/// Per-gate weights of one LSTM direction.
pub struct LstmCell<S: Real> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    // gate order: input, forget, output, candidate
    w: [Param<S>; 4],
    u: [Param<S>; 4],
    b: [Param<S>; 4],
}

impl<S: Real> LstmCell<S> {
    pub fn new<R: Rng>(
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        params: &mut ParamSet<S>,
        rng: &mut R,
    ) -> Self {
        let gate = ["i", "f", "o", "c"];
        let w = gate.map(|g| params.add_uniform(format!("{prefix}.w_{g}"), &[hidden_dim, input_dim], rng));
        let u = gate.map(|g| params.add_uniform(format!("{prefix}.u_{g}"), &[hidden_dim, hidden_dim], rng));
        let b = gate.map(|g| params.add_uniform(format!("{prefix}.b_{g}"), &[hidden_dim], rng));
        LstmCell {
            input_dim,
            hidden_dim,
            w,
            u,
            b,
        }
    }

    pub fn bind(&self, tape: &Tape<S>) -> BoundLstmCell<S> {
        BoundLstmCell {
            hidden_dim: self.hidden_dim,
            w: [0, 1, 2, 3].map(|i| tape.leaf(&self.w[i])),
            u: [0, 1, 2, 3].map(|i| tape.leaf(&self.u[i])),
            b: [0, 1, 2, 3].map(|i| tape.leaf(&self.b[i])),
        }
    }
}

/// Cell weights materialized as leaves on one tape.
pub struct BoundLstmCell<S: Real> {
    hidden_dim: usize,
    w: [Tensor<S>; 4],
    u: [Tensor<S>; 4],
    b: [Tensor<S>; 4],
}

impl<S: Real> BoundLstmCell<S> {
    fn gate(&self, idx: usize, x: &Tensor<S>, h: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
        self.w[idx]
            .matmul(x)?
            .add(&self.u[idx].matmul(h)?)?
            .add(&self.b[idx])
    }

    pub fn step(
        &self,
        x: &Tensor<S>,
        h: &Tensor<S>,
        c: &Tensor<S>,
    ) -> Result<(Tensor<S>, Tensor<S>), TensorError> {
        let i = self.gate(0, x, h)?.sigmoid();
        let f = self.gate(1, x, h)?.sigmoid();
        let o = self.gate(2, x, h)?.sigmoid();
        let g = self.gate(3, x, h)?.tanh();
        let c_next = f.mul(c)?.add(&i.mul(&g)?)?;
        let h_next = o.mul(&c_next.tanh())?;
        Ok((h_next, c_next))
    }

    /// Run over a sequence from zero states; returns per-step hidden states.
    pub fn run(&self, tape: &Tape<S>, inputs: &[Tensor<S>]) -> Result<Vec<Tensor<S>>, TensorError> {
        let mut h = tape.constant(&[self.hidden_dim], vec![S::zero(); self.hidden_dim]);
        let mut c = h.clone();
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (h_next, c_next) = self.step(x, &h, &c)?;
            outputs.push(h_next.clone());
            h = h_next;
            c = c_next;
        }
        Ok(outputs)
    }
}

/// Forward and backward cells over the same input sequence.
pub struct BiLstm<S: Real> {
    pub forward: LstmCell<S>,
    pub backward: LstmCell<S>,
}

impl<S: Real> BiLstm<S> {
    pub fn new<R: Rng>(
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        params: &mut ParamSet<S>,
        rng: &mut R,
    ) -> Self {
        BiLstm {
            forward: LstmCell::new(&format!("{prefix}.fwd"), input_dim, hidden_dim, params, rng),
            backward: LstmCell::new(&format!("{prefix}.bwd"), input_dim, hidden_dim, params, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim
    }

    /// Per-position outputs, forward and backward states concatenated (2h).
    pub fn outputs(&self, tape: &Tape<S>, inputs: &[Tensor<S>]) -> Result<Vec<Tensor<S>>, TensorError> {
        let fwd = self.forward.bind(tape).run(tape, inputs)?;
        let reversed: Vec<Tensor<S>> = inputs.iter().rev().cloned().collect();
        let mut bwd = self.backward.bind(tape).run(tape, &reversed)?;
        bwd.reverse();
        fwd.iter()
            .zip(bwd.iter())
            .map(|(f, b)| concat(&[f.clone(), b.clone()]))
            .collect()
    }

    /// Concatenation of the two final hidden states (2h).
    pub fn final_states(&self, tape: &Tape<S>, inputs: &[Tensor<S>]) -> Result<Tensor<S>, TensorError> {
        let fwd = self.forward.bind(tape).run(tape, inputs)?;
        let reversed: Vec<Tensor<S>> = inputs.iter().rev().cloned().collect();
        let bwd = self.backward.bind(tape).run(tape, &reversed)?;
        concat(&[
            fwd.last().expect("non-empty sequence").clone(),
            bwd.last().expect("non-empty sequence").clone(),
        ])
    }
}
