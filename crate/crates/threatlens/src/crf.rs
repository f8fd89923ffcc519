//! Linear-chain CRF layer: path scoring, log-partition via the forward
//! algorithm, negative log-likelihood with exact gradients, and Viterbi
//! decoding.
//!
//! Transition matrices are `(m+2)×(m+2)` with two virtual states appended
//! after the `m` real labels: `start = m`, `stop = m+1`. Paths always leave
//! `start` first and enter `stop` last, so boundary preferences are learned
//! like any other transition.

use thiserror::Error;

use crate::tensor::{param_rng, xavier_uniform, Param, Tape, VarId};

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("label {label} at position {position} is outside 0..{label_count}")]
    InvalidLabel {
        position: usize,
        label: usize,
        label_count: usize,
    },
    #[error("label sequence has length {got}, emissions have {expected} rows")]
    LengthMismatch { got: usize, expected: usize },
    #[error("emission matrix must have at least one row")]
    EmptyEmissions,
    #[error("emission matrix contains a non-finite score")]
    NonFiniteEmissions,
}

/// Per-position label scores from the projection layer, row-major `n×m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    n: usize,
    m: usize,
    scores: Vec<f64>,
}

impl EmissionMatrix {
    pub fn from_values(n: usize, m: usize, scores: Vec<f64>) -> Result<Self, CrfError> {
        if n == 0 || m == 0 {
            return Err(CrfError::EmptyEmissions);
        }
        assert_eq!(scores.len(), n * m, "emission buffer has the wrong size");
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(CrfError::NonFiniteEmissions);
        }
        Ok(Self { n, m, scores })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn label_count(&self) -> usize {
        self.m
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    fn at(&self, t: usize, label: usize) -> f64 {
        self.scores[t * self.m + label]
    }
}

/// Learnable CRF parameters: the transition matrix including the virtual
/// start/stop states.
#[derive(Debug, Clone)]
pub struct CrfParams {
    pub transitions: Param,
    pub label_count: usize,
}

impl CrfParams {
    pub fn new(label_count: usize, seed: u64) -> Self {
        assert!(label_count >= 1);
        let side = label_count + 2;
        let mut rng = param_rng(seed, "crf.transitions");
        Self {
            transitions: Param::new(xavier_uniform(&[side, side], &mut rng)),
            label_count,
        }
    }

    pub fn start_state(&self) -> usize {
        self.label_count
    }

    pub fn stop_state(&self) -> usize {
        self.label_count + 1
    }
}

#[inline]
fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[inline]
fn trans_at(transitions: &[f64], side: usize, from: usize, to: usize) -> f64 {
    transitions[from * side + to]
}

fn check_labels(em: &EmissionMatrix, labels: &[usize]) -> Result<(), CrfError> {
    if labels.len() != em.n {
        return Err(CrfError::LengthMismatch {
            got: labels.len(),
            expected: em.n,
        });
    }
    for (position, &label) in labels.iter().enumerate() {
        if label >= em.m {
            return Err(CrfError::InvalidLabel {
                position,
                label,
                label_count: em.m,
            });
        }
    }
    Ok(())
}

/// Score of one label path: emissions along the path plus transitions,
/// including start→first and last→stop.
pub fn sequence_score(
    em: &EmissionMatrix,
    labels: &[usize],
    transitions: &[f64],
) -> Result<f64, CrfError> {
    check_labels(em, labels)?;
    let side = em.m + 2;
    let (start, stop) = (em.m, em.m + 1);
    let mut score = trans_at(transitions, side, start, labels[0]);
    for (t, &label) in labels.iter().enumerate() {
        score += em.at(t, label);
        if t + 1 < labels.len() {
            score += trans_at(transitions, side, label, labels[t + 1]);
        }
    }
    score += trans_at(transitions, side, labels[em.n - 1], stop);
    Ok(score)
}

/// Log of the summed exponentiated scores over all `m^n` label paths,
/// computed by the forward algorithm in log space.
pub fn log_partition(em: &EmissionMatrix, transitions: &[f64]) -> f64 {
    let side = em.m + 2;
    let (start, stop) = (em.m, em.m + 1);
    let mut alpha: Vec<f64> = (0..em.m)
        .map(|j| trans_at(transitions, side, start, j) + em.at(0, j))
        .collect();
    let mut scratch = vec![0.0; em.m];
    for t in 1..em.n {
        let mut next = vec![0.0; em.m];
        for (j, slot) in next.iter_mut().enumerate() {
            for (i, s) in scratch.iter_mut().enumerate() {
                *s = alpha[i] + trans_at(transitions, side, i, j);
            }
            *slot = logsumexp(&scratch) + em.at(t, j);
        }
        alpha = next;
    }
    for (j, s) in scratch.iter_mut().enumerate() {
        *s = alpha[j] + trans_at(transitions, side, j, stop);
    }
    logsumexp(&scratch)
}

/// Highest-scoring label path and its score. Ties break toward the lowest
/// label index at every step.
pub fn viterbi(em: &EmissionMatrix, transitions: &[f64]) -> (Vec<usize>, f64) {
    let side = em.m + 2;
    let (start, stop) = (em.m, em.m + 1);
    let mut delta: Vec<f64> = (0..em.m)
        .map(|j| trans_at(transitions, side, start, j) + em.at(0, j))
        .collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(em.n.saturating_sub(1));
    for t in 1..em.n {
        let mut next = vec![f64::NEG_INFINITY; em.m];
        let mut ptr = vec![0usize; em.m];
        for j in 0..em.m {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for (i, &d) in delta.iter().enumerate() {
                let cand = d + trans_at(transitions, side, i, j);
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            next[j] = best + em.at(t, j);
            ptr[j] = best_i;
        }
        delta = next;
        back.push(ptr);
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_j = 0;
    for (j, &d) in delta.iter().enumerate() {
        let cand = d + trans_at(transitions, side, j, stop);
        if cand > best {
            best = cand;
            best_j = j;
        }
    }
    let mut labels = vec![best_j];
    for ptr in back.iter().rev() {
        labels.push(ptr[*labels.last().unwrap()]);
    }
    labels.reverse();
    (labels, best)
}

/// Differentiable CRF negative log-likelihood on a tape:
/// `log_partition − sequence_score`, always ≥ 0 because the partition sum
/// includes the scored path itself.
pub fn nll_loss(
    tape: &mut Tape,
    emissions: VarId,
    transitions: VarId,
    labels: &[usize],
) -> Result<VarId, CrfError> {
    tape.crf_nll(emissions, transitions, labels)
}

/// Gradients of the NLL with respect to emissions and transitions:
/// posterior marginals (from the forward–backward recursion) minus the
/// indicator counts of the gold path.
pub(crate) fn nll_gradients(
    em: &EmissionMatrix,
    labels: &[usize],
    transitions: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (em.n, em.m);
    let side = m + 2;
    let (start, stop) = (m, m + 1);

    let mut alpha = vec![f64::NEG_INFINITY; n * m];
    for (j, slot) in alpha.iter_mut().enumerate().take(m) {
        *slot = trans_at(transitions, side, start, j) + em.at(0, j);
    }
    let mut scratch = vec![0.0; m];
    for t in 1..n {
        for j in 0..m {
            for (i, s) in scratch.iter_mut().enumerate() {
                *s = alpha[(t - 1) * m + i] + trans_at(transitions, side, i, j);
            }
            alpha[t * m + j] = logsumexp(&scratch) + em.at(t, j);
        }
    }

    let mut beta = vec![f64::NEG_INFINITY; n * m];
    for i in 0..m {
        beta[(n - 1) * m + i] = trans_at(transitions, side, i, stop);
    }
    for t in (0..n - 1).rev() {
        for i in 0..m {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = trans_at(transitions, side, i, j) + em.at(t + 1, j) + beta[(t + 1) * m + j];
            }
            beta[t * m + i] = logsumexp(&scratch);
        }
    }

    for (j, s) in scratch.iter_mut().enumerate() {
        *s = alpha[(n - 1) * m + j] + trans_at(transitions, side, j, stop);
    }
    let log_z = logsumexp(&scratch);

    // Emission gradient: unary marginals minus gold indicators.
    let mut d_em = vec![0.0; n * m];
    for t in 0..n {
        for j in 0..m {
            let marginal = (alpha[t * m + j] + beta[t * m + j] - log_z).exp();
            d_em[t * m + j] = marginal - f64::from(labels[t] == j);
        }
    }

    // Transition gradient: pairwise marginals minus gold transition counts,
    // plus the start/stop boundary terms.
    let mut d_trans = vec![0.0; side * side];
    for j in 0..m {
        let marginal = (alpha[j] + beta[j] - log_z).exp();
        d_trans[start * side + j] = marginal - f64::from(labels[0] == j);
    }
    for i in 0..m {
        let marginal = (alpha[(n - 1) * m + i] + beta[(n - 1) * m + i] - log_z).exp();
        d_trans[i * side + stop] = marginal - f64::from(labels[n - 1] == i);
    }
    for t in 0..n - 1 {
        for i in 0..m {
            for j in 0..m {
                let pair = (alpha[t * m + i]
                    + trans_at(transitions, side, i, j)
                    + em.at(t + 1, j)
                    + beta[(t + 1) * m + j]
                    - log_z)
                    .exp();
                d_trans[i * side + j] += pair;
            }
        }
        d_trans[labels[t] * side + labels[t + 1]] -= 1.0;
    }

    (d_em, d_trans)
}
