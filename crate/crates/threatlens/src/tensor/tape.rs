//! Dynamic computation tape with reverse-mode gradients.
//!
//! A [`Tape`] records one forward computation as a flat list of nodes;
//! [`Tape::backward`] sweeps it in reverse, accumulating gradients into
//! every reachable node and depositing them into [`Param`] handles.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Param, TensorError};
use crate::crf as crf_math;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

/// Non-linearity applied by the convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// Whether dropout actually drops. Training needs the RNG; inference is an
/// exact identity.
pub enum DropoutMode<'a> {
    Infer,
    Train(&'a mut ChaCha8Rng),
}

pub(crate) enum Op {
    Leaf,
    Param(Param),
    Row { src: VarId, row: usize },
    Reshape { src: VarId },
    StackRows { rows: Vec<VarId> },
    Concat { parts: Vec<VarId> },
    VecMat { x: VarId, w: VarId },
    Add { a: VarId, b: VarId },
    Mul { a: VarId, b: VarId },
    Sigmoid { x: VarId },
    Tanh { x: VarId },
    Relu { x: VarId },
    Embed { table: VarId, ids: Vec<u32> },
    ConvText { s: VarId, w: VarId, b: VarId },
    MaxOverTime { x: VarId, argmax: usize },
    Dropout { x: VarId, mask: Vec<f64> },
    SoftmaxXent { logits: VarId, target: usize, probs: Vec<f64> },
    Sum { x: VarId },
    MeanStack { xs: Vec<VarId> },
    CrfNll { emissions: VarId, transitions: VarId, labels: Vec<usize> },
}

#[derive(Default)]
pub struct Tape {
    ops: Vec<Op>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> VarId {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let id = VarId(self.ops.len());
        self.grads.push(vec![0.0; values.len()]);
        self.values.push(values);
        self.shapes.push(shape);
        self.ops.push(op);
        id
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: VarId) -> &[f64] {
        &self.values[v.0]
    }

    pub fn shape(&self, v: VarId) -> &[usize] {
        &self.shapes[v.0]
    }

    pub fn scalar_value(&self, v: VarId) -> f64 {
        debug_assert_eq!(self.values[v.0].len(), 1);
        self.values[v.0][0]
    }

    /// Gradient accumulated at a node by the latest backward pass.
    pub fn grad_of(&self, v: VarId) -> &[f64] {
        &self.grads[v.0]
    }

    /// Constant input; gradients flow to it but are not propagated further.
    pub fn leaf(&mut self, shape: &[usize], values: Vec<f64>) -> VarId {
        self.push(shape.to_vec(), values, Op::Leaf)
    }

    pub fn leaf_scalar(&mut self, v: f64) -> VarId {
        self.leaf(&[1], vec![v])
    }

    /// Lease a trainable parameter onto the tape. Backward accumulates into
    /// the parameter's gradient slot.
    pub fn param(&mut self, p: &Param) -> VarId {
        let (shape, values) = {
            let t = p.borrow();
            (t.shape().to_vec(), t.values().to_vec())
        };
        self.push(shape, values, Op::Param(p.clone()))
    }

    /// Row `row` of a matrix as a vector.
    pub fn row(&mut self, m: VarId, row: usize) -> VarId {
        let shape = &self.shapes[m.0];
        assert_eq!(shape.len(), 2, "row() needs a matrix");
        let cols = shape[1];
        assert!(row < shape[0], "row out of range");
        let values = self.values[m.0][row * cols..(row + 1) * cols].to_vec();
        self.push(vec![cols], values, Op::Row { src: m, row })
    }

    /// Same values, new shape.
    pub fn reshape(&mut self, v: VarId, shape: &[usize]) -> VarId {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.values[v.0].len(),
            "reshape must preserve the element count"
        );
        let values = self.values[v.0].clone();
        self.push(shape.to_vec(), values, Op::Reshape { src: v })
    }

    /// Stack equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&mut self, rows: &[VarId]) -> VarId {
        assert!(!rows.is_empty(), "cannot stack zero rows");
        let width = self.values[rows[0].0].len();
        let mut values = Vec::with_capacity(rows.len() * width);
        for r in rows {
            assert_eq!(self.values[r.0].len(), width, "ragged rows");
            values.extend_from_slice(&self.values[r.0]);
        }
        self.push(
            vec![rows.len(), width],
            values,
            Op::StackRows { rows: rows.to_vec() },
        )
    }

    /// Concatenate vectors.
    pub fn concat(&mut self, parts: &[VarId]) -> VarId {
        assert!(!parts.is_empty(), "cannot concat zero parts");
        let mut values = Vec::new();
        for p in parts {
            values.extend_from_slice(&self.values[p.0]);
        }
        self.push(
            vec![values.len()],
            values,
            Op::Concat { parts: parts.to_vec() },
        )
    }

    /// Row-vector times matrix: `x[n] · w[n×m] -> [m]`.
    pub fn vecmat(&mut self, x: VarId, w: VarId) -> VarId {
        let n = self.values[x.0].len();
        let w_shape = &self.shapes[w.0];
        assert_eq!(w_shape.len(), 2, "vecmat needs a matrix");
        assert_eq!(w_shape[0], n, "inner dimensions must agree");
        let m = w_shape[1];
        let xv = &self.values[x.0];
        let wv = &self.values[w.0];
        let mut out = vec![0.0; m];
        for (i, &xi) in xv.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &wv[i * m..(i + 1) * m];
            for (o, wij) in out.iter_mut().zip(row) {
                *o += xi * wij;
            }
        }
        self.push(vec![m], out, Op::VecMat { x, w })
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.values[a.0].len(), self.values[b.0].len());
        let values = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shapes[a.0].clone();
        self.push(shape, values, Op::Add { a, b })
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.values[a.0].len(), self.values[b.0].len());
        let values = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shapes[a.0].clone();
        self.push(shape, values, Op::Mul { a, b })
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        let values = self.values[x.0]
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let shape = self.shapes[x.0].clone();
        self.push(shape, values, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: VarId) -> VarId {
        let values = self.values[x.0].iter().map(|v| v.tanh()).collect();
        let shape = self.shapes[x.0].clone();
        self.push(shape, values, Op::Tanh { x })
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let values = self.values[x.0].iter().map(|v| v.max(0.0)).collect();
        let shape = self.shapes[x.0].clone();
        self.push(shape, values, Op::Relu { x })
    }

    /// Row lookup: output row `i` equals `table` row `ids[i]`. Gradients
    /// scatter-add back into the looked-up rows.
    pub fn embed(&mut self, table: VarId, ids: &[u32]) -> Result<VarId, TensorError> {
        let shape = &self.shapes[table.0];
        assert_eq!(shape.len(), 2, "embedding table must be a matrix");
        let (rows, d) = (shape[0], shape[1]);
        let mut values = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            if id >= rows {
                return Err(TensorError::IndexError { id, rows });
            }
            values.extend_from_slice(&self.values[table.0][id * d..(id + 1) * d]);
        }
        Ok(self.push(
            vec![ids.len(), d],
            values,
            Op::Embed { table, ids: ids.to_vec() },
        ))
    }

    /// Text convolution: slide `w[h×d]` down `s[n×d]`, producing
    /// `activation(sum(w ⊙ window) + b)` per window, `n−h+1` in total.
    pub fn conv_text(
        &mut self,
        s: VarId,
        w: VarId,
        b: VarId,
        activation: Activation,
    ) -> Result<VarId, TensorError> {
        let s_shape = &self.shapes[s.0];
        let w_shape = &self.shapes[w.0];
        assert_eq!(s_shape.len(), 2, "conv input must be a matrix");
        assert_eq!(w_shape.len(), 2, "conv filter must be a matrix");
        assert_eq!(s_shape[1], w_shape[1], "filter width must match embedding dim");
        assert_eq!(self.values[b.0].len(), 1, "conv bias must be a scalar");
        let (n, d) = (s_shape[0], s_shape[1]);
        let h = w_shape[0];
        if n < h {
            return Err(TensorError::WindowTooLarge { n, h });
        }
        let sv = &self.values[s.0];
        let wv = &self.values[w.0];
        let bias = self.values[b.0][0];
        let windows = n - h + 1;
        let mut out = Vec::with_capacity(windows);
        for i in 0..windows {
            let window = &sv[i * d..(i + h) * d];
            let dot: f64 = window.iter().zip(wv).map(|(x, y)| x * y).sum();
            out.push(dot + bias);
        }
        let raw = self.push(vec![windows], out, Op::ConvText { s, w, b });
        Ok(match activation {
            Activation::Identity => raw,
            Activation::Relu => self.relu(raw),
        })
    }

    /// Maximum of a feature map. The gradient routes to the first maximal
    /// index only.
    pub fn max_over_time(&mut self, x: VarId) -> Result<VarId, TensorError> {
        let xs = &self.values[x.0];
        if xs.is_empty() {
            return Err(TensorError::EmptyFeatureMap);
        }
        let mut argmax = 0;
        let mut best = xs[0];
        for (i, &v) in xs.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                argmax = i;
            }
        }
        Ok(self.push(vec![1], vec![best], Op::MaxOverTime { x, argmax }))
    }

    /// Inverted dropout: in training each element is zeroed independently
    /// with probability `p` and survivors are scaled by `1/(1−p)`; at
    /// inference this is the identity (the input node is returned as-is).
    pub fn dropout(
        &mut self,
        x: VarId,
        p: f64,
        mode: &mut DropoutMode,
    ) -> Result<VarId, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidProbability(p));
        }
        match mode {
            DropoutMode::Infer => Ok(x),
            DropoutMode::Train(rng) => {
                let scale = 1.0 / (1.0 - p);
                let mask: Vec<f64> = self.values[x.0]
                    .iter()
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
                    .collect();
                let values = self.values[x.0]
                    .iter()
                    .zip(&mask)
                    .map(|(v, m)| v * m)
                    .collect();
                let shape = self.shapes[x.0].clone();
                Ok(self.push(shape, values, Op::Dropout { x, mask }))
            }
        }
    }

    /// Numerically stabilized softmax + cross-entropy against `target`.
    /// Returns the probability vector (plain values) and the scalar loss
    /// node.
    pub fn softmax_xent(&mut self, logits: VarId, target: usize) -> (Vec<f64>, VarId) {
        let xs = &self.values[logits.0];
        let m = xs.len();
        assert!(target < m, "target class out of range");
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = xs.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum_exp.ln();
        let probs: Vec<f64> = xs.iter().map(|v| (v - lse).exp()).collect();
        let loss = lse - xs[target];
        let node = self.push(
            vec![1],
            vec![loss],
            Op::SoftmaxXent {
                logits,
                target,
                probs: probs.clone(),
            },
        );
        (probs, node)
    }

    /// Affine layer into a stabilized softmax cross-entropy:
    /// `softmax(features · w + b)` with loss `−log p[target]`.
    pub fn affine_softmax_xent(
        &mut self,
        features: VarId,
        w: VarId,
        b: VarId,
        target: usize,
    ) -> (Vec<f64>, VarId) {
        let z = self.vecmat(features, w);
        let logits = self.add(z, b);
        self.softmax_xent(logits, target)
    }

    /// Sum of all elements.
    pub fn sum(&mut self, x: VarId) -> VarId {
        let total: f64 = self.values[x.0].iter().sum();
        self.push(vec![1], vec![total], Op::Sum { x })
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, xs: &[VarId]) -> VarId {
        assert!(!xs.is_empty(), "mean of zero terms");
        let total: f64 = xs.iter().map(|x| self.scalar_value(*x)).sum();
        let mean = total / xs.len() as f64;
        self.push(vec![1], vec![mean], Op::MeanStack { xs: xs.to_vec() })
    }

    /// Negative log-likelihood of a label path under a linear-chain CRF:
    /// `log_partition(e, t) − sequence_score(e, y, t)`. The emission node
    /// must be `[n×m]` and the transition node `[(m+2)×(m+2)]` with the
    /// virtual start/stop states in the last two slots.
    pub fn crf_nll(
        &mut self,
        emissions: VarId,
        transitions: VarId,
        labels: &[usize],
    ) -> Result<VarId, crf_math::CrfError> {
        let e_shape = &self.shapes[emissions.0];
        assert_eq!(e_shape.len(), 2, "emissions must be a matrix");
        let (n, m) = (e_shape[0], e_shape[1]);
        assert_eq!(
            self.values[transitions.0].len(),
            (m + 2) * (m + 2),
            "transition matrix must be (m+2)x(m+2)"
        );
        let em = crf_math::EmissionMatrix::from_values(n, m, self.values[emissions.0].clone())?;
        let trans = &self.values[transitions.0];
        let score = crf_math::sequence_score(&em, labels, trans)?;
        let log_z = crf_math::log_partition(&em, trans);
        let loss = log_z - score;
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrfNll {
                emissions,
                transitions,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Reverse sweep seeded with `d loss = 1`.
    pub fn backward(&mut self, loss: VarId) {
        self.backward_seeded(loss, 1.0);
    }

    /// Reverse sweep with an explicit seed gradient, used to fold a
    /// `1/batch` factor into per-example passes.
    pub fn backward_seeded(&mut self, loss: VarId, seed: f64) {
        assert_eq!(self.values[loss.0].len(), 1, "loss must be a scalar");
        self.grads[loss.0][0] += seed;
        for i in (0..=loss.0).rev() {
            let g = self.grads[i].clone();
            if g.iter().all(|&v| v == 0.0) {
                // Parameters still need their (zero) gradient deposited so
                // the optimizer sees a populated slot.
                if let Op::Param(p) = &self.ops[i] {
                    p.borrow_mut().accumulate_grad(&g);
                }
                continue;
            }
            self.propagate(i, &g);
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let Tape {
            ops,
            shapes,
            values,
            grads,
        } = self;
        match &ops[i] {
            Op::Leaf => {}
            Op::Param(p) => p.borrow_mut().accumulate_grad(g),
            Op::Row { src, row } => {
                let cols = g.len();
                let dst = &mut grads[src.0][row * cols..(row + 1) * cols];
                for (d, gv) in dst.iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::Reshape { src } => {
                for (d, gv) in grads[src.0].iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::StackRows { rows } => {
                let width = g.len() / rows.len();
                for (t, r) in rows.iter().enumerate() {
                    let chunk = &g[t * width..(t + 1) * width];
                    for (d, gv) in grads[r.0].iter_mut().zip(chunk) {
                        *d += gv;
                    }
                }
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for p in parts {
                    let len = grads[p.0].len();
                    let chunk = &g[offset..offset + len];
                    for (d, gv) in grads[p.0].iter_mut().zip(chunk) {
                        *d += gv;
                    }
                    offset += len;
                }
            }
            Op::VecMat { x, w } => {
                let n = values[x.0].len();
                let m = g.len();
                for row in 0..n {
                    let w_row = &values[w.0][row * m..(row + 1) * m];
                    let mut acc = 0.0;
                    for (gv, wv) in g.iter().zip(w_row) {
                        acc += gv * wv;
                    }
                    grads[x.0][row] += acc;
                }
                for row in 0..n {
                    let xi = values[x.0][row];
                    if xi == 0.0 {
                        continue;
                    }
                    let dst = &mut grads[w.0][row * m..(row + 1) * m];
                    for (d, gv) in dst.iter_mut().zip(g) {
                        *d += xi * gv;
                    }
                }
            }
            Op::Add { a, b } => {
                for (d, gv) in grads[a.0].iter_mut().zip(g) {
                    *d += gv;
                }
                for (d, gv) in grads[b.0].iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::Mul { a, b } => {
                // First b's contribution (reads a), then a's (reads b).
                for (idx, gv) in g.iter().enumerate() {
                    grads[b.0][idx] += gv * values[a.0][idx];
                }
                for (idx, gv) in g.iter().enumerate() {
                    grads[a.0][idx] += gv * values[b.0][idx];
                }
            }
            Op::Sigmoid { x } => {
                for (idx, gv) in g.iter().enumerate() {
                    let y = values[i][idx];
                    grads[x.0][idx] += gv * y * (1.0 - y);
                }
            }
            Op::Tanh { x } => {
                for (idx, gv) in g.iter().enumerate() {
                    let y = values[i][idx];
                    grads[x.0][idx] += gv * (1.0 - y * y);
                }
            }
            Op::Relu { x } => {
                for (idx, gv) in g.iter().enumerate() {
                    if values[x.0][idx] > 0.0 {
                        grads[x.0][idx] += gv;
                    }
                }
            }
            Op::Embed { table, ids } => {
                let d = shapes[table.0][1];
                for (row, &id) in ids.iter().enumerate() {
                    let src = &g[row * d..(row + 1) * d];
                    let dst = &mut grads[table.0][id as usize * d..(id as usize + 1) * d];
                    for (dg, gv) in dst.iter_mut().zip(src) {
                        *dg += gv;
                    }
                }
            }
            Op::ConvText { s, w, b } => {
                let d = shapes[s.0][1];
                let h = shapes[w.0][0];
                for (win, &gi) in g.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    grads[b.0][0] += gi;
                    let window = win * d..(win + h) * d;
                    for (offset, idx) in window.enumerate() {
                        grads[s.0][idx] += gi * values[w.0][offset];
                        grads[w.0][offset] += gi * values[s.0][idx];
                    }
                }
            }
            Op::MaxOverTime { x, argmax } => {
                grads[x.0][*argmax] += g[0];
            }
            Op::Dropout { x, mask } => {
                for (idx, gv) in g.iter().enumerate() {
                    grads[x.0][idx] += gv * mask[idx];
                }
            }
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            } => {
                for (idx, p) in probs.iter().enumerate() {
                    let indicator = if idx == *target { 1.0 } else { 0.0 };
                    grads[logits.0][idx] += g[0] * (p - indicator);
                }
            }
            Op::Sum { x } => {
                for d in grads[x.0].iter_mut() {
                    *d += g[0];
                }
            }
            Op::MeanStack { xs } => {
                let share = g[0] / xs.len() as f64;
                for x in xs {
                    grads[x.0][0] += share;
                }
            }
            Op::CrfNll {
                emissions,
                transitions,
                labels,
            } => {
                let e_shape = &shapes[emissions.0];
                let (n, m) = (e_shape[0], e_shape[1]);
                let em = crf_math::EmissionMatrix::from_values(
                    n,
                    m,
                    values[emissions.0].clone(),
                )
                .expect("validated at forward");
                let (d_em, d_trans) =
                    crf_math::nll_gradients(&em, labels, &values[transitions.0]);
                for (d, dv) in grads[emissions.0].iter_mut().zip(&d_em) {
                    *d += g[0] * dv;
                }
                for (d, dv) in grads[transitions.0].iter_mut().zip(&d_trans) {
                    *d += g[0] * dv;
                }
            }
        }
    }
}
