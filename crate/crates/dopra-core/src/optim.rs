//! Adam optimizer with bias correction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptimError {
    /// A parameter has no gradient populated.
    MissingGrad(String),
    /// Parameter set changed shape between steps.
    ShapeChanged(String),
}

impl fmt::Display for OptimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimError::MissingGrad(name) => write!(f, "missing gradient for parameter {name}"),
            OptimError::ShapeChanged(name) => {
                write!(f, "parameter {name} changed shape between optimizer steps")
            }
        }
    }
}

impl core::error::Error for OptimError {}

/// First/second moment state for one parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Step count; strictly increasing, starts at 0.
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One Adam update over `params`. Each tensor must carry a populated
    /// gradient; gradients are left untouched (the caller zeroes them).
    pub fn step<'a, I>(&mut self, params: I) -> Result<(), OptimError>
    where
        I: IntoIterator<Item = (&'a str, &'a mut Tensor)>,
    {
        self.t += 1;
        let bc1 = 1.0 - math::powi(self.beta1, self.t as u32);
        let bc2 = 1.0 - math::powi(self.beta2, self.t as u32);

        let mut idx = 0usize;
        for (name, p) in params {
            let n = p.numel();
            if self.m.len() == idx {
                self.m.push(vec![0.0; n]);
                self.v.push(vec![0.0; n]);
            }
            if self.m[idx].len() != n {
                return Err(OptimError::ShapeChanged(String::from(name)));
            }
            let g: Vec<f64> = match p.grad() {
                Some(g) => g.to_vec(),
                None => return Err(OptimError::MissingGrad(format!("{name}"))),
            };
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let vals = p.values_mut();
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                vals[i] -= self.learning_rate * m_hat / (math::sqrt(v_hat) + self.epsilon);
            }
            idx += 1;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap().with_grad();
        p.accumulate_grad(&[0.0, 0.0]);
        let mut state = AdamState::new(1e-3);
        state.step([("w", &mut p)]).unwrap();
        assert_eq!(p.values(), &[1.5, -0.5]);
    }

    #[test]
    fn first_step_moves_by_about_learning_rate() {
        // m_hat = g, v_hat = g^2 at t=1, so the step is lr * g/(|g|+eps).
        let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap().with_grad();
        p.accumulate_grad(&[1.0]);
        let mut state = AdamState::new(1e-3);
        state.step([("w", &mut p)]).unwrap();
        let expected = 1.0 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.values()[0] - expected).abs() < 1e-15);
        // gradient untouched
        assert_eq!(p.grad().unwrap(), &[1.0]);
    }

    #[test]
    fn converges_on_quadratic() {
        // f(w) = w^2, grad = 2w, from w = 1.0 with a larger lr to converge fast.
        let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap().with_grad();
        let mut state = AdamState::new(0.05);
        let mut losses = Vec::with_capacity(100);
        for _ in 0..100 {
            let w = p.values()[0];
            losses.push(w * w);
            p.zero_grad();
            p.accumulate_grad(&[2.0 * w]);
            state.step([("w", &mut p)]).unwrap();
        }
        assert!(p.values()[0].abs() < 0.5, "w = {}", p.values()[0]);
        // downward loss trend: the last decade is far below the first
        let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = losses[90..].iter().sum::<f64>() / 10.0;
        assert!(tail < 0.05 * head, "head {head}, tail {tail}");
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap().with_grad();
        let mut state = AdamState::new(1e-3);
        assert!(matches!(
            state.step([("w", &mut p)]),
            Err(OptimError::MissingGrad(_))
        ));
    }
}
