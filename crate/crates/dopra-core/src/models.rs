//! The two convolutional classifier architectures.
//!
//! Model A is the larger network (four conv blocks), Model B the smaller
//! one (three conv blocks). Every block is a 9x9 same-padded convolution
//! followed by leaky ReLU and 2x2 max pooling; both share the same head
//! architecture: flatten -> dense -> leaky ReLU -> dense(6).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::math;
use crate::rng;
use crate::tensor::Tensor;
use crate::N_CLASSES;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    Config(String),
    Dimension(String),
    Autodiff(AutodiffError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Config(m) => write!(f, "config error: {m}"),
            ModelError::Dimension(m) => write!(f, "dimension error: {m}"),
            ModelError::Autodiff(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ModelError {}

impl From<AutodiffError> for ModelError {
    fn from(e: AutodiffError) -> Self {
        ModelError::Autodiff(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    A,
    B,
}

impl Architecture {
    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::A => "A",
            Architecture::B => "B",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_input_size() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// 2 for Doppler-time input, 1 for CVD input.
    pub input_channels: usize,
    /// Output channels of each conv block.
    pub conv_widths: Vec<usize>,
    pub kernel_size: usize,
    pub activation_slope: f64,
    pub head_hidden: usize,
    pub n_classes: usize,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn model_a(input_channels: usize, seed: u64) -> Self {
        ModelConfig {
            architecture: Architecture::A,
            input_channels,
            conv_widths: vec![8, 16, 32, 48],
            kernel_size: 9,
            activation_slope: 0.01,
            head_hidden: 64,
            n_classes: N_CLASSES,
            input_size: 128,
            seed,
        }
    }

    pub fn model_b(input_channels: usize, seed: u64) -> Self {
        ModelConfig {
            architecture: Architecture::B,
            input_channels,
            conv_widths: vec![4, 8, 8],
            kernel_size: 9,
            activation_slope: 0.01,
            head_hidden: 64,
            n_classes: N_CLASSES,
            input_size: 128,
            seed,
        }
    }

    pub fn for_architecture(arch: Architecture, input_channels: usize, seed: u64) -> Self {
        match arch {
            Architecture::A => Self::model_a(input_channels, seed),
            Architecture::B => Self::model_b(input_channels, seed),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.input_channels != 1 && self.input_channels != 2 {
            return Err(ModelError::Config(format!(
                "input_channels must be 1 or 2, got {}",
                self.input_channels
            )));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(ModelError::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.conv_widths.is_empty() || self.conv_widths.iter().any(|&w| w == 0) {
            return Err(ModelError::Config(String::from(
                "conv_widths must be non-empty and positive",
            )));
        }
        if self.n_classes != N_CLASSES {
            return Err(ModelError::Config(format!(
                "n_classes must be {N_CLASSES}, got {}",
                self.n_classes
            )));
        }
        if self.head_hidden == 0 {
            return Err(ModelError::Config(String::from("head_hidden must be >= 1")));
        }
        if !(0.0..1.0).contains(&self.activation_slope) {
            return Err(ModelError::Config(format!(
                "activation_slope must lie in [0, 1), got {}",
                self.activation_slope
            )));
        }
        let mut s = self.input_size;
        for _ in &self.conv_widths {
            if s < 2 {
                return Err(ModelError::Config(format!(
                    "input_size {} too small for {} pooling stages",
                    self.input_size,
                    self.conv_widths.len()
                )));
            }
            s = (s - 2) / 2 + 1;
        }
        Ok(())
    }

    /// Spatial size after all pooling stages.
    fn final_spatial(&self) -> usize {
        let mut s = self.input_size;
        for _ in &self.conv_widths {
            s = (s - 2) / 2 + 1;
        }
        s
    }
}

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone)]
pub struct Classifier {
    config: ModelConfig,
    params: Vec<Parameter>,
}

/// Tape handles for one bound forward pass.
pub struct BoundModel {
    pub param_vars: Vec<Var>,
}

/// Build a classifier with seeded uniform init: weights drawn from
/// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
pub fn build_model(config: &ModelConfig) -> Result<Classifier, ModelError> {
    config.validate()?;
    let k = config.kernel_size;
    let mut params = Vec::new();
    let mut param_index = 0u64;
    let mut init = |shape: &[usize], fan_in: usize, fan_out: usize, name: String, zero: bool| {
        let n: usize = shape.iter().product();
        let values = if zero {
            vec![0.0; n]
        } else {
            let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            let mut r = rng::stream(config.seed, param_index);
            (0..n).map(|_| r.random_range(-bound..bound)).collect()
        };
        param_index += 1;
        Parameter {
            name,
            tensor: Tensor::from_vec(shape, values).expect("sized above").with_grad(),
        }
    };

    let mut c_in = config.input_channels;
    for (i, &c_out) in config.conv_widths.iter().enumerate() {
        let fan_in = c_in * k * k;
        let fan_out = c_out * k * k;
        params.push(init(
            &[c_out, c_in, k, k],
            fan_in,
            fan_out,
            format!("conv{i}.weight"),
            false,
        ));
        params.push(init(&[c_out], 0, 0, format!("conv{i}.bias"), true));
        c_in = c_out;
    }
    let flat = c_in * config.final_spatial() * config.final_spatial();
    params.push(init(
        &[config.head_hidden, flat],
        flat,
        config.head_hidden,
        String::from("head.fc1.weight"),
        false,
    ));
    params.push(init(&[config.head_hidden], 0, 0, String::from("head.fc1.bias"), true));
    params.push(init(
        &[config.n_classes, config.head_hidden],
        config.head_hidden,
        config.n_classes,
        String::from("head.fc2.weight"),
        false,
    ));
    params.push(init(&[config.n_classes], 0, 0, String::from("head.fc2.bias"), true));

    Ok(Classifier { config: config.clone(), params })
}

impl Classifier {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|p| (p.name.as_str(), &mut p.tensor))
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.iter_mut() {
            p.tensor.zero_grad();
        }
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Clone of all parameters, used for checkpointing.
    pub fn snapshot(&self) -> Vec<Parameter> {
        self.params
            .iter()
            .map(|p| Parameter {
                name: p.name.clone(),
                tensor: Tensor::from_vec(p.tensor.shape(), p.tensor.values().to_vec())
                    .expect("same shape")
                    .with_grad(),
            })
            .collect()
    }

    /// Restore parameters from a snapshot; names and shapes must match.
    pub fn restore(&mut self, snapshot: &[Parameter]) -> Result<(), ModelError> {
        if snapshot.len() != self.params.len() {
            return Err(ModelError::Dimension(format!(
                "snapshot has {} parameters, model expects {}",
                snapshot.len(),
                self.params.len()
            )));
        }
        for (p, s) in self.params.iter_mut().zip(snapshot.iter()) {
            if p.name != s.name || p.tensor.shape() != s.tensor.shape() {
                return Err(ModelError::Dimension(format!(
                    "snapshot parameter {} does not match model parameter {}",
                    s.name, p.name
                )));
            }
            p.tensor
                .values_mut()
                .copy_from_slice(s.tensor.values());
        }
        Ok(())
    }

    /// Register all parameters as tape leaves.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        BoundModel {
            param_vars: self
                .params
                .iter()
                .map(|p| tape.leaf(&p.tensor, trainable))
                .collect(),
        }
    }

    /// Forward pass over previously bound parameters. Returns the logits
    /// node (length 6).
    pub fn forward_bound(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        input: Var,
    ) -> Result<Var, ModelError> {
        let expected = [
            self.config.input_channels,
            self.config.input_size,
            self.config.input_size,
        ];
        if tape.shape(input) != expected {
            return Err(ModelError::Dimension(format!(
                "input shape {:?} does not match model input {:?}",
                tape.shape(input),
                expected
            )));
        }
        let pad = self.config.kernel_size / 2;
        let slope = self.config.activation_slope;
        let mut x = input;
        let mut vi = 0;
        for _ in &self.config.conv_widths {
            let w = bound.param_vars[vi];
            let b = bound.param_vars[vi + 1];
            vi += 2;
            x = tape.conv2d(x, w, b, 1, pad)?;
            x = tape.leaky_relu(x, slope);
            x = tape.max_pool2d(x, 2, 2)?;
        }
        let flat: usize = tape.shape(x).iter().product();
        x = tape.reshape(x, &[flat])?;
        let w1 = bound.param_vars[vi];
        let b1 = bound.param_vars[vi + 1];
        let w2 = bound.param_vars[vi + 2];
        let b2 = bound.param_vars[vi + 3];
        x = tape.dense(x, w1, b1)?;
        x = tape.leaky_relu(x, slope);
        let logits = tape.dense(x, w2, b2)?;
        Ok(logits)
    }

    /// Forward-only logits for an input tensor.
    pub fn logits(&self, input: &Tensor) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.leaf(input, false);
        let logits = self.forward_bound(&mut tape, &bound, x)?;
        Ok(tape.values(logits).to_vec())
    }

    /// Predicted class: argmax of the logits, lowest index on ties.
    pub fn predict(&self, input: &Tensor) -> Result<usize, ModelError> {
        Ok(math::argmax_lowest(&self.logits(input)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(arch: Architecture) -> ModelConfig {
        let widths = match arch {
            Architecture::A => vec![2, 3, 3, 2],
            Architecture::B => vec![2, 2, 2],
        };
        ModelConfig {
            architecture: arch,
            input_channels: 2,
            conv_widths: widths,
            kernel_size: 3,
            activation_slope: 0.01,
            head_hidden: 4,
            n_classes: N_CLASSES,
            input_size: 16,
            seed: 7,
        }
    }

    #[test]
    fn default_a_has_at_least_twice_the_parameters_of_b() {
        let a = build_model(&ModelConfig::model_a(2, 0)).unwrap();
        let b = build_model(&ModelConfig::model_b(2, 0)).unwrap();
        assert!(
            a.parameter_count() >= 2 * b.parameter_count(),
            "A = {}, B = {}",
            a.parameter_count(),
            b.parameter_count()
        );
        // conv parameters alone also ordered
        let conv_count = |m: &Classifier| -> usize {
            m.params()
                .iter()
                .filter(|p| p.name.starts_with("conv"))
                .map(|p| p.tensor.numel())
                .sum()
        };
        assert!(conv_count(&a) > conv_count(&b));
    }

    #[test]
    fn parameter_count_arithmetic() {
        // conv 2->8 with 9x9 kernels and bias: 2*8*81 + 8 = 1304
        let cfg = ModelConfig {
            architecture: Architecture::B,
            input_channels: 2,
            conv_widths: vec![8],
            kernel_size: 9,
            activation_slope: 0.01,
            head_hidden: 4,
            n_classes: N_CLASSES,
            input_size: 16,
            seed: 0,
        };
        let m = build_model(&cfg).unwrap();
        let conv: usize = m
            .params()
            .iter()
            .filter(|p| p.name.starts_with("conv"))
            .map(|p| p.tensor.numel())
            .sum();
        assert_eq!(conv, 1304);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_model(&tiny_config(Architecture::A)).unwrap();
        let b = build_model(&tiny_config(Architecture::A)).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.tensor.values(), pb.tensor.values(), "{}", pa.name);
        }
        let count_a = a.parameter_count();
        assert_eq!(count_a, build_model(&tiny_config(Architecture::A)).unwrap().parameter_count());
    }

    #[test]
    fn forward_yields_six_finite_logits() {
        for arch in [Architecture::A, Architecture::B] {
            let m = build_model(&tiny_config(arch)).unwrap();
            let x = Tensor::from_vec(
                &[2, 16, 16],
                (0..512).map(|i| math::sin(i as f64 * 0.1)).collect(),
            )
            .unwrap();
            let logits = m.logits(&x).unwrap();
            assert_eq!(logits.len(), N_CLASSES);
            assert!(logits.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn zero_input_propagates_to_head_bias() {
        // biases are zero-initialized, so logits of a zero input are the
        // final bias values: exactly zero
        let m = build_model(&tiny_config(Architecture::B)).unwrap();
        let x = Tensor::zeros(&[2, 16, 16]);
        let logits = m.logits(&x).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0), "{logits:?}");
    }

    #[test]
    fn single_channel_config_accepts_cvd_shape() {
        let mut cfg = tiny_config(Architecture::B);
        cfg.input_channels = 1;
        let m = build_model(&cfg).unwrap();
        let x = Tensor::from_vec(&[1, 16, 16], vec![0.5; 256]).unwrap();
        assert_eq!(m.logits(&x).unwrap().len(), N_CLASSES);
        // wrong shape is a dimension error
        let bad = Tensor::zeros(&[2, 16, 16]);
        assert!(matches!(m.logits(&bad), Err(ModelError::Dimension(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_config(Architecture::A);
        cfg.kernel_size = 4;
        assert!(build_model(&cfg).is_err());
        let mut cfg = tiny_config(Architecture::A);
        cfg.conv_widths.clear();
        assert!(build_model(&cfg).is_err());
        let mut cfg = tiny_config(Architecture::A);
        cfg.input_channels = 3;
        assert!(build_model(&cfg).is_err());
    }

    #[test]
    fn snapshot_restore_roundtrip() {
        let mut m = build_model(&tiny_config(Architecture::B)).unwrap();
        let snap = m.snapshot();
        for (_, t) in m.params_mut() {
            for v in t.values_mut() {
                *v += 1.0;
            }
        }
        m.restore(&snap).unwrap();
        for (p, s) in m.params().iter().zip(snap.iter()) {
            assert_eq!(p.tensor.values(), s.tensor.values());
        }
    }
}
