//! Function-preserving input widening of an MLP's first layer.
//!
//! A new command input (for example a jump flag) is appended after the
//! existing inputs with all-zero outgoing weights, so the widened network
//! computes exactly the same pre-activations as before until training moves
//! those weights. Weights are stored hidden-major (`h × n`, one row per hidden
//! unit); in the input-major layout used by some frameworks the new zeros form
//! an extra row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurgeryError {
    #[error("layer shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite weight at hidden unit {row}, input {col}")]
    NonFiniteWeight { row: usize, col: usize },
    #[error("non-finite bias at hidden unit {0}")]
    NonFiniteBias(usize),
    #[error("input has length {got}, layer expects {expected}")]
    InputLength { expected: usize, got: usize },
}

/// Weights and bias of the first dense layer, `z = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFirstLayer<T> {
    hidden: usize,
    inputs: usize,
    /// Row-major `hidden × inputs`.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> MlpFirstLayer<T> {
    pub fn new(hidden: usize, inputs: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self, SurgeryError> {
        if hidden == 0 || inputs == 0 {
            return Err(SurgeryError::Shape(format!("empty layer {hidden}x{inputs}")));
        }
        if weights.len() != hidden * inputs {
            return Err(SurgeryError::Shape(format!(
                "{} weights for a {hidden}x{inputs} layer",
                weights.len()
            )));
        }
        if bias.len() != hidden {
            return Err(SurgeryError::Shape(format!("{} biases for {hidden} hidden units", bias.len())));
        }
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(SurgeryError::NonFiniteWeight {
                row: k / inputs,
                col: k % inputs,
            });
        }
        if let Some(k) = bias.iter().position(|b| !b.is_finite()) {
            return Err(SurgeryError::NonFiniteBias(k));
        }
        Ok(Self {
            hidden,
            inputs,
            weights,
            bias,
        })
    }

    pub fn from_rows(rows: Vec<Vec<T>>, bias: Vec<T>) -> Result<Self, SurgeryError> {
        let hidden = rows.len();
        let inputs = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != inputs) {
            return Err(SurgeryError::Shape("ragged weight rows".into()));
        }
        Self::new(hidden, inputs, rows.into_iter().flatten().collect(), bias)
    }

    /// (hidden units, inputs)
    pub fn shape(&self) -> (usize, usize) {
        (self.hidden, self.inputs)
    }

    pub fn weight(&self, row: usize, col: usize) -> T {
        self.weights[row * self.inputs + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.weights[row * self.inputs..(row + 1) * self.inputs]
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn preactivations(&self, x: &[T]) -> Result<Vec<T>, SurgeryError> {
        if x.len() != self.inputs {
            return Err(SurgeryError::InputLength {
                expected: self.inputs,
                got: x.len(),
            });
        }
        Ok((0..self.hidden)
            .map(|r| {
                let acc = self.row(r).iter().zip(x).fold(T::zero(), |acc, (&w, &xi)| acc + w * xi);
                acc + self.bias[r]
            })
            .collect())
    }
}

/// Appends one input whose weights are all zero; the bias is untouched.
pub fn widen_input_layer<T: Real>(layer: &MlpFirstLayer<T>) -> MlpFirstLayer<T> {
    let (hidden, inputs) = layer.shape();
    let mut weights = Vec::with_capacity(hidden * (inputs + 1));
    for r in 0..hidden {
        weights.extend_from_slice(layer.row(r));
        weights.push(T::zero());
    }
    MlpFirstLayer {
        hidden,
        inputs: inputs + 1,
        weights,
        bias: layer.bias.clone(),
    }
}
