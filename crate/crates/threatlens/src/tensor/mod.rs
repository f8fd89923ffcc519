//! Minimal dense-tensor numeric core with reverse-mode gradients.
//!
//! Exactly the operations the two networks need: embedding lookup, text
//! convolution, max-over-time pooling, dropout, a softmax cross-entropy
//! head, LSTM cells with bidirectional readers, and the Adam optimizer.
//! Everything is `f64`, row-major, and single-threaded; determinism under a
//! fixed seed is favored over speed.

mod adam;
mod gradcheck;
mod lstm;
mod tape;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use lstm::{bilstm_all, bilstm_final, lstm_step, LstmCell, LstmCellVars};
pub use tape::{Activation, DropoutMode, Tape, VarId};

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("embedding id {id} out of range for table with {rows} rows")]
    IndexError { id: usize, rows: usize },
    #[error("convolution window of height {h} does not fit a {n}-row input")]
    WindowTooLarge { n: usize, h: usize },
    #[error("max-over-time on an empty feature map")]
    EmptyFeatureMap,
    #[error("dropout probability {0} is outside [0, 1)")]
    InvalidProbability(f64),
    #[error("bidirectional read over an empty sequence")]
    EmptySequence,
    #[error("parameter {index} has no gradient")]
    GradientUnavailable { index: usize },
    #[error("non-finite value produced by {context}")]
    NonFinite { context: &'static str },
}

/// An n-dimensional numeric array with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: &[usize], values: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "value count must match the shape"
        );
        Self {
            shape: shape.to_vec(),
            values,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(&[1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Add `delta` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.values.len(), "gradient length mismatch");
        let grad = self.grad.get_or_insert_with(|| vec![0.0; self.values.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Shared handle to a trainable tensor. Graphs hold clones of the handle so
/// that backward passes can deposit gradients and the optimizer can update
/// values in place.
#[derive(Debug, Clone)]
pub struct Param(Rc<RefCell<Tensor>>);

impl Param {
    pub fn new(mut tensor: Tensor) -> Self {
        tensor.set_requires_grad(true);
        Self(Rc::new(RefCell::new(tensor)))
    }

    pub fn borrow(&self) -> Ref<'_, Tensor> {
        self.0.borrow()
    }

    pub fn borrow_mut(&self) -> RefMut<'_, Tensor> {
        self.0.borrow_mut()
    }

    pub fn len(&self) -> usize {
        self.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.borrow().is_empty()
    }

    /// Copy of the current values, used for snapshots.
    pub fn snapshot(&self) -> Vec<f64> {
        self.borrow().values().to_vec()
    }

    pub fn restore(&self, values: &[f64]) {
        let mut t = self.borrow_mut();
        assert_eq!(t.len(), values.len(), "snapshot length mismatch");
        t.values_mut().copy_from_slice(values);
    }
}

/// RNG used everywhere; fixed algorithm so seeds mean the same thing across
/// platforms.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng as _;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a per-parameter RNG from the run seed and the parameter name, so
/// initialization does not depend on registration order.
pub fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    use rand::SeedableRng as _;
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name))
}

fn fnv1a(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Uniform init in `[-b, b]` with `b = sqrt(6 / (fan_in + fan_out))`.
/// For matrices the fans are the two dimensions; vectors use their length
/// and 1.
pub fn xavier_uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let (fan_in, fan_out) = match shape {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        other => {
            let total: usize = other.iter().product();
            (total, 1)
        }
    };
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let values = (0..len).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape, values)
}
