//! Dense row-major `f64` tensors.
//!
//! `Tensor` is the currency passed between the signal chain, the networks
//! and the attack code. A tensor optionally carries a gradient buffer of the
//! same shape; the autodiff tape fills it in during `backward` and the
//! optimizer consumes it.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TensorError {
    /// Shape product does not match the number of values.
    ShapeMismatch { expected: usize, got: usize },
    /// Two tensors that must agree in shape do not.
    DimensionMismatch(String),
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { expected, got } => {
                write!(f, "shape expects {expected} values, got {got}")
            }
            TensorError::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
        }
    }
}

impl core::error::Error for TensorError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    #[serde(default)]
    requires_grad: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(TensorError::ShapeMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            values: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
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

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Add `delta` into the gradient buffer, allocating zeros on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.values.len());
        let g = self
            .grad
            .get_or_insert_with(|| vec![0.0; self.values.len()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1 && self.shape.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Maximum absolute entry-wise difference to another tensor of the same shape.
    pub fn linf_distance(&self, other: &Tensor) -> Result<f64, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::DimensionMismatch(String::from(
                "linf_distance requires identical shapes",
            )));
        }
        let mut m = 0.0f64;
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            let d = (a - b).abs();
            if d > m {
                m = d;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_shape() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn grad_accumulates_additively() {
        let mut t = Tensor::zeros(&[3]).with_grad();
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 1.0, 1.0]);
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn linf_distance_basic() {
        let a = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![1.25, -1.5]).unwrap();
        assert_eq!(a.linf_distance(&b).unwrap(), 0.5);
    }
}
