//! LSTM cells and bidirectional sequence readers.

use super::{param_rng, xavier_uniform, Param, Tape, Tensor, TensorError, VarId};

/// One LSTM cell: four gates, each an affine map from the concatenated
/// `[input ‖ hidden]` vector to the hidden dimension. Weights are stored
/// `[(input_dim + hidden_dim) × hidden_dim]`, biases `[hidden_dim]`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_input: Param,
    pub b_input: Param,
    pub w_forget: Param,
    pub b_forget: Param,
    pub w_output: Param,
    pub b_output: Param,
    pub w_cand: Param,
    pub b_cand: Param,
}

impl LstmCell {
    /// Fresh cell with Xavier-uniform weights and zero biases. `name` keys
    /// the per-parameter init streams and the checkpoint entries.
    pub fn new(input_dim: usize, hidden_dim: usize, seed: u64, name: &str) -> Self {
        assert!(input_dim >= 1 && hidden_dim >= 1);
        let w_shape = [input_dim + hidden_dim, hidden_dim];
        let weight = |gate: &str| {
            let mut rng = param_rng(seed, &format!("{name}.{gate}.weight"));
            Param::new(xavier_uniform(&w_shape, &mut rng))
        };
        let bias = || Param::new(Tensor::zeros(&[hidden_dim]));
        Self {
            input_dim,
            hidden_dim,
            w_input: weight("input"),
            b_input: bias(),
            w_forget: weight("forget"),
            b_forget: bias(),
            w_output: weight("output"),
            b_output: bias(),
            w_cand: weight("cand"),
            b_cand: bias(),
        }
    }

    pub fn params(&self) -> Vec<Param> {
        vec![
            self.w_input.clone(),
            self.b_input.clone(),
            self.w_forget.clone(),
            self.b_forget.clone(),
            self.w_output.clone(),
            self.b_output.clone(),
            self.w_cand.clone(),
            self.b_cand.clone(),
        ]
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Param)> {
        [
            ("input.weight", &self.w_input),
            ("input.bias", &self.b_input),
            ("forget.weight", &self.w_forget),
            ("forget.bias", &self.b_forget),
            ("output.weight", &self.w_output),
            ("output.bias", &self.b_output),
            ("cand.weight", &self.w_cand),
            ("cand.bias", &self.b_cand),
        ]
        .into_iter()
        .map(|(n, p)| (format!("{prefix}.{n}"), p.clone()))
        .collect()
    }

    /// Lease the cell's parameters onto a tape once, so repeated steps
    /// share the nodes.
    pub fn vars(&self, tape: &mut Tape) -> LstmCellVars {
        LstmCellVars {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            w_input: tape.param(&self.w_input),
            b_input: tape.param(&self.b_input),
            w_forget: tape.param(&self.w_forget),
            b_forget: tape.param(&self.b_forget),
            w_output: tape.param(&self.w_output),
            b_output: tape.param(&self.b_output),
            w_cand: tape.param(&self.w_cand),
            b_cand: tape.param(&self.b_cand),
        }
    }
}

/// Tape-resident handles for one cell's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LstmCellVars {
    pub input_dim: usize,
    pub hidden_dim: usize,
    w_input: VarId,
    b_input: VarId,
    w_forget: VarId,
    b_forget: VarId,
    w_output: VarId,
    b_output: VarId,
    w_cand: VarId,
    b_cand: VarId,
}

/// One step of the forget-gate LSTM:
/// `i,f,o = σ(...)`, `g = tanh(...)`, `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub fn lstm_step(
    tape: &mut Tape,
    cell: &LstmCellVars,
    x: VarId,
    h: VarId,
    c: VarId,
) -> (VarId, VarId) {
    assert_eq!(tape.value(x).len(), cell.input_dim, "input width mismatch");
    assert_eq!(tape.value(h).len(), cell.hidden_dim, "hidden width mismatch");
    assert_eq!(tape.value(c).len(), cell.hidden_dim, "cell width mismatch");
    let xh = tape.concat(&[x, h]);
    let mut gate = |w: VarId, b: VarId| {
        let z = tape.vecmat(xh, w);
        tape.add(z, b)
    };
    let zi = gate(cell.w_input, cell.b_input);
    let zf = gate(cell.w_forget, cell.b_forget);
    let zo = gate(cell.w_output, cell.b_output);
    let zg = gate(cell.w_cand, cell.b_cand);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let o = tape.sigmoid(zo);
    let g = tape.tanh(zg);
    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_new = tape.add(fc, ig);
    let c_act = tape.tanh(c_new);
    let h_new = tape.mul(o, c_act);
    (h_new, c_new)
}

fn run_direction(
    tape: &mut Tape,
    cell: &LstmCellVars,
    rows: &[VarId],
    reverse: bool,
) -> Vec<VarId> {
    let mut h = tape.leaf(&[cell.hidden_dim], vec![0.0; cell.hidden_dim]);
    let mut c = tape.leaf(&[cell.hidden_dim], vec![0.0; cell.hidden_dim]);
    let mut states = vec![VarId(0); rows.len()];
    let order: Vec<usize> = if reverse {
        (0..rows.len()).rev().collect()
    } else {
        (0..rows.len()).collect()
    };
    for t in order {
        let (h_new, c_new) = lstm_step(tape, cell, rows[t], h, c);
        h = h_new;
        c = c_new;
        states[t] = h;
    }
    states
}

fn sequence_rows(tape: &mut Tape, xs: VarId) -> Result<Vec<VarId>, TensorError> {
    let shape = tape.shape(xs);
    assert_eq!(shape.len(), 2, "sequence input must be a [T×in] matrix");
    let t = shape[0];
    if t == 0 {
        return Err(TensorError::EmptySequence);
    }
    Ok((0..t).map(|i| tape.row(xs, i)).collect())
}

/// Read `xs[T×in]` in both directions and concatenate the two final hidden
/// states into a `[2·hidden]` vector.
pub fn bilstm_final(
    tape: &mut Tape,
    fwd: &LstmCellVars,
    bwd: &LstmCellVars,
    xs: VarId,
) -> Result<VarId, TensorError> {
    let rows = sequence_rows(tape, xs)?;
    let fwd_states = run_direction(tape, fwd, &rows, false);
    let bwd_states = run_direction(tape, bwd, &rows, true);
    let last_fwd = *fwd_states.last().unwrap();
    let first_bwd = bwd_states[0];
    Ok(tape.concat(&[last_fwd, first_bwd]))
}

/// Read `xs[T×in]` in both directions and emit the time-aligned state at
/// every position: row `t` is `[forward h at t ‖ backward h at t]`.
pub fn bilstm_all(
    tape: &mut Tape,
    fwd: &LstmCellVars,
    bwd: &LstmCellVars,
    xs: VarId,
) -> Result<VarId, TensorError> {
    let rows = sequence_rows(tape, xs)?;
    let fwd_states = run_direction(tape, fwd, &rows, false);
    let bwd_states = run_direction(tape, bwd, &rows, true);
    let combined: Vec<VarId> = fwd_states
        .iter()
        .zip(&bwd_states)
        .map(|(&f, &b)| tape.concat(&[f, b]))
        .collect();
    Ok(tape.stack_rows(&combined))
}
