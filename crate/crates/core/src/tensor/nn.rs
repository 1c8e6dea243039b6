//! Layers built from tape primitives.

use rand::Rng;

use super::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

/// `y = W x + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Result<Linear, TensorError> {
        let w = store.add_matrix(&format!("{name}.w"), output, input, rng)?;
        let b = store.add_zeros(&format!("{name}.b"), &[output])?;
        Ok(Linear { w, b, input, output })
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, TensorError> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(w, x)?;
        tape.add(y, b)
    }
}

/// Single LSTM cell with gates stacked as `[i, f, g, o]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<LstmCell, TensorError> {
        let w = store.add_matrix(&format!("{name}.w"), 4 * hidden, input + hidden, rng)?;
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        let b = store.add(&format!("{name}.b"), Tensor::vector(bias))?;
        Ok(LstmCell { w, b, input, hidden })
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (Var, Var) {
        let h = tape.constant(Tensor::zeros(&[self.hidden]));
        let c = tape.constant(Tensor::zeros(&[self.hidden]));
        (h, c)
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        (h, c): (Var, Var),
    ) -> Result<(Var, Var), TensorError> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let xh = tape.concat(&[x, h], 0)?;
        let z = tape.matmul(w, xh)?;
        let z = tape.add(z, b)?;
        let n = self.hidden;
        let gates = tape.split(z, 0, &[n, n, n, n])?;
        let i = tape.sigmoid(gates[0]);
        let f = tape.sigmoid(gates[1]);
        let g = tape.tanh(gates[2]);
        let o = tape.sigmoid(gates[3]);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }

    /// Runs over `xs` and returns every hidden state.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, xs: &[Var]) -> Result<Vec<Var>, TensorError> {
        let mut state = self.zero_state(tape);
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            state = self.step(tape, store, *x, state)?;
            out.push(state.0);
        }
        Ok(out)
    }
}

/// Stacked bidirectional LSTM. Layer `l > 0` reads the concatenated forward
/// and backward states of layer `l - 1`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub layers: Vec<(LstmCell, LstmCell)>,
    pub hidden: usize,
}

/// Per-position outputs of the top layer of a [`BiLstm`].
#[derive(Debug, Clone)]
pub struct BiOutput {
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

impl BiOutput {
    /// `[fwd_t; bwd_t]` at every position.
    pub fn joined(&self, tape: &mut Tape) -> Result<Vec<Var>, TensorError> {
        self.forward
            .iter()
            .zip(&self.backward)
            .map(|(f, b)| tape.concat(&[*f, *b], 0))
            .collect()
    }
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        depth: usize,
        rng: &mut impl Rng,
    ) -> Result<BiLstm, TensorError> {
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let inp = if l == 0 { input } else { 2 * hidden };
            let f = LstmCell::new(store, &format!("{name}.l{l}.fwd"), inp, hidden, rng)?;
            let b = LstmCell::new(store, &format!("{name}.l{l}.bwd"), inp, hidden, rng)?;
            layers.push((f, b));
        }
        Ok(BiLstm { layers, hidden })
    }

    pub fn run(&self, tape: &mut Tape, store: &ParamStore, xs: &[Var]) -> Result<BiOutput, TensorError> {
        let mut input = xs.to_vec();
        let mut out = BiOutput {
            forward: Vec::new(),
            backward: Vec::new(),
        };
        for (l, (f, b)) in self.layers.iter().enumerate() {
            let forward = f.run(tape, store, &input)?;
            let rev: Vec<Var> = input.iter().rev().copied().collect();
            let mut backward = b.run(tape, store, &rev)?;
            backward.reverse();
            out = BiOutput { forward, backward };
            if l + 1 < self.layers.len() {
                input = out.joined(tape)?;
            }
        }
        Ok(out)
    }
}
