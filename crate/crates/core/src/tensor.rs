//! Plain dense arrays used for parameters and checkpoints.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A dense row-major `f64` array with an explicit shape.
///
/// `Tensor` is inert data: parameters, checkpoint payloads, oracle inputs.
/// Differentiable computation happens on [`crate::autodiff::Value`], which
/// is lifted from and lowered back to tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Input(format!(
                "tensor shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}
