//! Parameter update rules. Adam keeps first/second moment estimates per
//! tensor with bias correction; plain SGD is the fallback.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Moment buffers for one parameter tensor.
#[derive(Debug, Clone)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Optimizer over a fixed set of tensors, addressed by slot index in a
/// stable order chosen by the model.
#[derive(Debug, Clone)]
pub struct Optimizer<T: Scalar> {
    kind: OptimizerKind,
    learning_rate: f64,
    slots: Vec<Moments<T>>,
    /// Completed update steps; Adam bias correction uses step+1.
    step: usize,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64, slot_sizes: &[usize]) -> Optimizer<T> {
        let slots = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => slot_sizes
                .iter()
                .map(|&n| Moments { m: vec![T::zero(); n], v: vec![T::zero(); n] })
                .collect(),
        };
        Optimizer { kind, learning_rate, slots, step: 0 }
    }

    /// Marks the start of one optimizer step covering every slot.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies this step's update to one tensor from its gradient.
    /// Slices must have equal length, fixed across the run.
    pub fn update_slot(&mut self, slot: usize, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = T::from_f64(self.learning_rate);
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p = *p - lr * g;
                }
            }
            OptimizerKind::Adam => {
                let Moments { m, v } = &mut self.slots[slot];
                debug_assert_eq!(m.len(), params.len());
                let b1 = T::from_f64(ADAM_BETA1);
                let b2 = T::from_f64(ADAM_BETA2);
                let one = T::one();
                let correction1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
                let correction2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
                let rate = T::from_f64(self.learning_rate / correction1);
                let corr2 = T::from_f64(correction2);
                let eps = T::from_f64(ADAM_EPSILON);
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    let vhat = v[i] / corr2;
                    params[i] = params[i] - rate * m[i] / (vhat.sqrt() + eps);
                }
            }
        }
    }

    /// Adam update for rows of a large tensor where most rows have zero
    /// gradient this step. Zero-gradient rows still decay their moments and
    /// may move (exactly as a dense pass would); rows listed in
    /// `skip_rows_below` (indices < that bound) are pinned and skipped.
    pub fn update_rows<'g>(
        &mut self,
        slot: usize,
        params: &mut [T],
        row_len: usize,
        grad_of_row: impl Fn(usize) -> Option<&'g [T]>,
        skip_rows_below: usize,
    ) where
        T: 'g,
    {
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = T::from_f64(self.learning_rate);
                let rows = params.len() / row_len;
                for r in skip_rows_below..rows {
                    if let Some(g) = grad_of_row(r) {
                        let p = &mut params[r * row_len..(r + 1) * row_len];
                        for i in 0..row_len {
                            p[i] = p[i] - lr * g[i];
                        }
                    }
                }
            }
            OptimizerKind::Adam => {
                let rows = params.len() / row_len;
                let b1 = T::from_f64(ADAM_BETA1);
                let b2 = T::from_f64(ADAM_BETA2);
                let one = T::one();
                let correction1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
                let correction2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
                let rate = T::from_f64(self.learning_rate / correction1);
                let corr2 = T::from_f64(correction2);
                let eps = T::from_f64(ADAM_EPSILON);
                let Moments { m, v } = &mut self.slots[slot];
                for r in skip_rows_below..rows {
                    let span = r * row_len..(r + 1) * row_len;
                    let grad = grad_of_row(r);
                    let (m, v) = (&mut m[span.clone()], &mut v[span.clone()]);
                    let p = &mut params[span];
                    match grad {
                        Some(g) => {
                            for i in 0..row_len {
                                m[i] = b1 * m[i] + (one - b1) * g[i];
                                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                                let vhat = v[i] / corr2;
                                p[i] = p[i] - rate * m[i] / (vhat.sqrt() + eps);
                            }
                        }
                        None => {
                            // Zero gradient: moments still decay.
                            for i in 0..row_len {
                                m[i] = b1 * m[i];
                                v[i] = b2 * v[i];
                                let vhat = v[i] / corr2;
                                p[i] = p[i] - rate * m[i] / (vhat.sqrt() + eps);
                            }
                        }
                    }
                }
            }
        }
    }
}
