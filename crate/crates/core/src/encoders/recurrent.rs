//! GRU and LSTM layers unrolled on the tape.

use crate::error::{Error, Result};
use crate::params::{InitRng, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    /// Gate order: GRU `z, r, n`; LSTM `i, f, o, g`.
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "n"],
            CellKind::Lstm => &["i", "f", "o", "g"],
        }
    }

    pub fn gate_count(self) -> usize {
        self.gate_names().len()
    }

    /// Trainable scalars of one layer.
    pub fn param_count(self, input_dim: usize, hidden: usize) -> usize {
        self.gate_count() * (input_dim * hidden + hidden * hidden + hidden)
    }
}

/// Input weight `W` (in×H), recurrent weight `U` (H×H) and bias `b` (H)
/// of one gate.
#[derive(Clone, Debug)]
pub struct GateWeights {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct RecurrentLayer {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub gates: Vec<GateWeights>,
}

impl RecurrentLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        input_dim: usize,
        hidden: usize,
        rng: &mut InitRng,
    ) -> Self {
        let gates = kind
            .gate_names()
            .iter()
            .map(|g| GateWeights {
                input: store.uniform(format!("{name}.w_{g}"), vec![input_dim, hidden], hidden, rng),
                recurrent: store.uniform(format!("{name}.u_{g}"), vec![hidden, hidden], hidden, rng),
                bias: store.uniform(format!("{name}.b_{g}"), vec![hidden], hidden, rng),
            })
            .collect();
        Self {
            kind,
            input_dim,
            hidden,
            gates,
        }
    }

    pub fn param_count(&self) -> usize {
        self.kind.param_count(self.input_dim, self.hidden)
    }

    /// Runs over every row of `inputs` (len×in) from a zero state and
    /// returns the len×H matrix of hidden states.
    pub fn run<'t>(&self, tape: &'t Tape, store: &ParamStore, inputs: &Var<'t>) -> Result<Var<'t>> {
        let shape = inputs.shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::dim("rnn", &shape, &[self.input_dim, self.hidden]));
        }
        let steps = shape[0];
        // Input projections for all timesteps at once, bias folded in.
        let mut projected = Vec::with_capacity(self.gates.len());
        let mut recurrent = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let w = tape.param(store, g.input);
            let b = tape.param(store, g.bias);
            projected.push(inputs.matmul(&w)?.add_row(&b)?);
            recurrent.push(tape.param(store, g.recurrent));
        }
        let mut h = tape.constant(Tensor::zeros(vec![self.hidden]));
        let mut c = h;
        let mut states = Vec::with_capacity(steps);
        for t in 0..steps {
            let pre = |gate: usize, state: &Var<'t>| -> Result<Var<'t>> {
                projected[gate].row(t)?.add(&state.matmul(&recurrent[gate])?)
            };
            match self.kind {
                CellKind::Gru => {
                    let z = pre(0, &h)?.sigmoid();
                    let r = pre(1, &h)?.sigmoid();
                    let n = pre(2, &r.mul(&h)?)?.tanh();
                    h = z.one_minus().mul(&n)?.add(&z.mul(&h)?)?;
                }
                CellKind::Lstm => {
                    let i = pre(0, &h)?.sigmoid();
                    let f = pre(1, &h)?.sigmoid();
                    let o = pre(2, &h)?.sigmoid();
                    let g = pre(3, &h)?.tanh();
                    c = f.mul(&c)?.add(&i.mul(&g)?)?;
                    h = o.mul(&c.tanh())?;
                }
            }
            states.push(h.reshape(vec![1, self.hidden])?);
        }
        Var::concat_all(&states, 0)
    }
}

/// One direction: a stack of layers where layer `l+1` reads layer `l`'s
/// states.
#[derive(Clone, Debug)]
pub struct RecurrentStack {
    pub layers: Vec<RecurrentLayer>,
}

impl RecurrentStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        rng: &mut InitRng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { hidden };
                RecurrentLayer::new(store, &format!("{name}.l{l}"), kind, in_dim, hidden, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(RecurrentLayer::param_count).sum()
    }

    pub fn run<'t>(&self, tape: &'t Tape, store: &ParamStore, inputs: &Var<'t>) -> Result<Var<'t>> {
        let mut x = *inputs;
        for layer in &self.layers {
            x = layer.run(tape, store, &x)?;
        }
        Ok(x)
    }
}

/// Hidden states of a padded sequence plus the final state.
#[derive(Clone, Copy, Debug)]
pub struct RnnOutput<'t> {
    /// n×H; rows at PAD positions are zero.
    pub states: Var<'t>,
    pub last: Var<'t>,
}

fn valid_rows<'t>(feats: &Var<'t>, valid_len: usize) -> Result<Var<'t>> {
    let n = feats.shape()[0];
    if valid_len == n {
        Ok(*feats)
    } else {
        let ids: Vec<usize> = (0..valid_len).collect();
        feats.gather_rows(&ids, None)
    }
}

fn pad_rows<'t>(tape: &'t Tape, states: Var<'t>, total: usize) -> Result<Var<'t>> {
    let [len, width] = states.shape()[..] else {
        return Err(Error::dim("pad_rows", &states.shape(), &[total]));
    };
    if len == total {
        return Ok(states);
    }
    let zeros = tape.constant(Tensor::zeros(vec![total - len, width]));
    states.concat(&zeros, 0)
}

fn check_sequence(feats: &Var<'_>, valid_len: usize) -> Result<usize> {
    let shape = feats.shape();
    if shape.len() != 2 {
        return Err(Error::dim("rnn_encode", &shape, &[]));
    }
    if valid_len > shape[0] {
        return Err(Error::Index {
            what: "sequence length",
            index: valid_len,
            len: shape[0],
        });
    }
    Ok(shape[0])
}

/// Runs `stack` over the first `valid_len` rows of `feats` (n×E). The
/// final state is the one at the last valid position; an all-PAD input
/// gives zero states.
pub fn rnn_encode<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    stack: &RecurrentStack,
    feats: &Var<'t>,
    valid_len: usize,
) -> Result<RnnOutput<'t>> {
    let n = check_sequence(feats, valid_len)?;
    let hidden = stack.hidden();
    if valid_len == 0 {
        let states = tape.constant(Tensor::zeros(vec![n, hidden]));
        let last = tape.constant(Tensor::zeros(vec![hidden]));
        return Ok(RnnOutput { states, last });
    }
    let states = stack.run(tape, store, &valid_rows(feats, valid_len)?)?;
    let last = states.row(valid_len - 1)?;
    Ok(RnnOutput {
        states: pad_rows(tape, states, n)?,
        last,
    })
}

/// Forward stack over the valid tokens, backward stack over them in
/// reverse. States are concatenated per position (n×2H) and the final
/// vector is `[forward last ; backward last]`.
pub fn bidirectional_encode<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    forward: &RecurrentStack,
    backward: &RecurrentStack,
    feats: &Var<'t>,
    valid_len: usize,
) -> Result<RnnOutput<'t>> {
    let n = check_sequence(feats, valid_len)?;
    if valid_len == 0 {
        let width = forward.hidden() + backward.hidden();
        let states = tape.constant(Tensor::zeros(vec![n, width]));
        let last = tape.constant(Tensor::zeros(vec![width]));
        return Ok(RnnOutput { states, last });
    }
    let fwd = rnn_encode(tape, store, forward, feats, valid_len)?;
    let reversed: Vec<usize> = (0..valid_len).rev().collect();
    let bwd_states = backward.run(tape, store, &feats.gather_rows(&reversed, None)?)?;
    let bwd_last = bwd_states.row(valid_len - 1)?;
    // Re-align backward states with token positions.
    let bwd_aligned = pad_rows(tape, bwd_states.gather_rows(&reversed, None)?, n)?;
    Ok(RnnOutput {
        states: fwd.states.concat(&bwd_aligned, 1)?,
        last: fwd.last.concat(&bwd_last, 0)?,
    })
}
