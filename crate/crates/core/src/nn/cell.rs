//! Recurrent cells. With `x` the input, `h`/`c` the previous state and `σ` the
//! logistic function, one step computes:
//!
//! * Elman: `h' = tanh(W x + U h + b)`
//! * GRU:
//!   `r = σ(W_r x + U_r h + b_r)`, `z = σ(W_z x + U_z h + b_z)`,
//!   `n = tanh(W_n x + U_n (r ∘ h) + b_n)`, `h' = z ∘ h + (1 - z) ∘ n`
//! * LSTM:
//!   `i = σ(W_i x + U_i h + b_i)`, `f = σ(W_f x + U_f h + b_f)`,
//!   `g = tanh(W_g x + U_g h + b_g)`, `o = σ(W_o x + U_o h + b_o)`,
//!   `c' = f ∘ c + i ∘ g`, `h' = o ∘ tanh(c')`
//!
//! Input weights are initialized with fan-in `input_size`, recurrent weights
//! with fan-in `hidden_size`, biases at zero.

use serde::{Deserialize, Serialize};

use super::{uniform_weight, zero_bias, Module, NamedParams};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Elman,
    Gru,
    Lstm,
}

impl CellKind {
    fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Elman => &["h"],
            CellKind::Gru => &["r", "z", "n"],
            CellKind::Lstm => &["i", "f", "g", "o"],
        }
    }
}

#[derive(Clone, Debug)]
struct Gate {
    name: &'static str,
    w_input: Tensor,
    w_hidden: Tensor,
    bias: Tensor,
}

impl Gate {
    fn pre(&self, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        x.linear(&self.w_input, Some(&self.bias))?.add(&h.linear(&self.w_hidden, None)?)
    }
}

/// Recurrent state; `c` is present only for LSTM cells.
#[derive(Clone, Debug)]
pub struct CellState {
    pub h: Tensor,
    pub c: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct RnnCell {
    kind: CellKind,
    input_size: usize,
    hidden_size: usize,
    gates: Vec<Gate>,
}

impl RnnCell {
    pub fn new(kind: CellKind, input_size: usize, hidden_size: usize, rng: &mut Rng) -> Result<Self> {
        let gates = kind
            .gate_names()
            .iter()
            .map(|&name| {
                Ok(Gate {
                    name,
                    w_input: uniform_weight(hidden_size, input_size, rng)?,
                    w_hidden: uniform_weight(hidden_size, hidden_size, rng)?,
                    bias: zero_bias(hidden_size)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(RnnCell {
            kind,
            input_size,
            hidden_size,
            gates,
        })
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    /// State whose hidden part is `h` (and a zero cell state for LSTMs).
    pub fn state_from(&self, h: Tensor) -> Result<CellState> {
        self.check_hidden("initial state", &h)?;
        let c = (self.kind == CellKind::Lstm).then(|| Tensor::zeros(h.shape()));
        Ok(CellState { h, c })
    }

    pub fn zero_state(&self, batch: usize) -> CellState {
        let h = Tensor::zeros(&[batch, self.hidden_size]);
        let c = (self.kind == CellKind::Lstm).then(|| Tensor::zeros(&[batch, self.hidden_size]));
        CellState { h, c }
    }

    fn check_hidden(&self, what: &'static str, t: &Tensor) -> Result<()> {
        if t.rank() != 2 || t.shape()[1] != self.hidden_size {
            return Err(Error::BadShape {
                op: what,
                expected: format!("[batch x {}]", self.hidden_size),
                got: t.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn step(&self, x: &Tensor, state: &CellState) -> Result<CellState> {
        if x.rank() != 2 || x.shape()[1] != self.input_size {
            return Err(Error::BadShape {
                op: "cell input",
                expected: format!("[batch x {}]", self.input_size),
                got: x.shape().to_vec(),
            });
        }
        let h = &state.h;
        self.check_hidden("cell state", h)?;
        if h.shape()[0] != x.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "cell step",
                lhs: x.shape().to_vec(),
                rhs: h.shape().to_vec(),
            });
        }
        match self.kind {
            CellKind::Elman => Ok(CellState {
                h: self.gates[0].pre(x, h)?.tanh()?,
                c: None,
            }),
            CellKind::Gru => {
                let [r, z, n] = [&self.gates[0], &self.gates[1], &self.gates[2]];
                let r = r.pre(x, h)?.sigmoid()?;
                let z = z.pre(x, h)?.sigmoid()?;
                let reset_h = r.mul(h)?;
                let cand = x
                    .linear(&n.w_input, Some(&n.bias))?
                    .add(&reset_h.linear(&n.w_hidden, None)?)?
                    .tanh()?;
                let h_new = z.mul(h)?.add(&z.one_minus()?.mul(&cand)?)?;
                Ok(CellState { h: h_new, c: None })
            }
            CellKind::Lstm => {
                let c = state.c.as_ref().ok_or_else(|| Error::invalid("LSTM step without cell state"))?;
                self.check_hidden("cell state", c)?;
                let i = self.gates[0].pre(x, h)?.sigmoid()?;
                let f = self.gates[1].pre(x, h)?.sigmoid()?;
                let g = self.gates[2].pre(x, h)?.tanh()?;
                let o = self.gates[3].pre(x, h)?.sigmoid()?;
                let c_new = f.mul(c)?.add(&i.mul(&g)?)?;
                let h_new = o.mul(&c_new.tanh()?)?;
                Ok(CellState {
                    h: h_new,
                    c: Some(c_new),
                })
            }
        }
    }
}

impl Module for RnnCell {
    fn parameters(&self) -> NamedParams {
        self.gates
            .iter()
            .flat_map(|g| {
                [
                    (format!("{}.w_input", g.name), g.w_input.clone()),
                    (format!("{}.w_hidden", g.name), g.w_hidden.clone()),
                    (format!("{}.bias", g.name), g.bias.clone()),
                ]
            })
            .collect()
    }
}
