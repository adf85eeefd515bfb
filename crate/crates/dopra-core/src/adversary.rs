//! Projected gradient descent attacks and cross-model transfer evaluation.
//!
//! The attack iterates signed-gradient ascent on the cross-entropy loss and
//! projects every coordinate back into the l-inf ball of radius epsilon
//! around the clean input. There is no additional clipping to a "valid"
//! input range: network inputs are normalized radar values, not pixels.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledSample, Representation};
use crate::math;
use crate::models::{Classifier, ModelError};
use crate::par;
use crate::rng;
use crate::tensor::Tensor;
use crate::autodiff::Tape;

#[derive(Debug, Clone, PartialEq)]
pub enum AttackError {
    /// Gradient became non-finite during the attack.
    NonFiniteGradient(String),
    /// Representation or shape contract violated.
    Contract(String),
    Model(String),
}

impl fmt::Display for AttackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackError::NonFiniteGradient(m) => write!(f, "attack error: non-finite gradient ({m})"),
            AttackError::Contract(m) => write!(f, "contract error: {m}"),
            AttackError::Model(m) => write!(f, "attack error: {m}"),
        }
    }
}

impl core::error::Error for AttackError {}

impl From<ModelError> for AttackError {
    fn from(e: ModelError) -> Self {
        AttackError::Model(format!("{e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// l-inf radius in network-input units.
    pub epsilon: f64,
    pub steps: usize,
    /// Per-iteration step; default 2.5 * epsilon / steps.
    pub step_size: f64,
    pub random_start: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.1,
            steps: 20,
            step_size: 2.5 * 0.1 / 20.0,
            random_start: true,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn with_seed(seed: u64) -> Self {
        AttackConfig {
            seed,
            ..AttackConfig::default()
        }
    }

    /// Scaled variant keeping the 2.5 * eps / steps step-size heuristic.
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        if steps > 0 {
            self.step_size = 2.5 * self.epsilon / steps as f64;
        }
        self
    }
}

/// One PGD run. `occurrence` individualizes the random start across samples
/// and epochs; the result is deterministic in `(config.seed, occurrence)`.
pub fn pgd_attack(
    model: &Classifier,
    input: &Tensor,
    label: usize,
    config: &AttackConfig,
    occurrence: u64,
) -> Result<Tensor, AttackError> {
    let mut x = input.clone();
    if config.random_start {
        let mut r = rng::stream(config.seed, rng::derive(0x9D6A, occurrence));
        for v in x.values_mut() {
            *v += r.random_range(-config.epsilon..config.epsilon);
        }
    }
    for _ in 0..config.steps {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let xv = tape.leaf(&x, true);
        let logits = model.forward_bound(&mut tape, &bound, xv)?;
        let loss = tape
            .softmax_cross_entropy(logits, label)
            .map_err(|e| AttackError::Model(format!("{e}")))?;
        tape.backward(loss)
            .map_err(|e| AttackError::Model(format!("{e}")))?;
        let grad = tape.grad(xv).unwrap_or(&[]);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(AttackError::NonFiniteGradient(format!(
                "label {label}, occurrence {occurrence}"
            )));
        }
        let clean = input.values();
        for (i, v) in x.values_mut().iter_mut().enumerate() {
            let g = if grad.is_empty() { 0.0 } else { grad[i] };
            let stepped = *v + config.step_size * math::sign(g);
            let lo = clean[i] - config.epsilon;
            let hi = clean[i] + config.epsilon;
            *v = stepped.clamp(lo, hi);
        }
    }
    Ok(x)
}

/// One adversarial example with its audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvExample {
    pub source_id: String,
    pub label: usize,
    pub input: Tensor,
    /// l-inf distance to the clean input.
    pub linf: f64,
}

/// Adversarial inputs for a whole split, tagged with the model and
/// representation they were optimized against.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSet {
    pub source_model_id: String,
    pub representation: Representation,
    pub config: AttackConfig,
    pub examples: Vec<AdvExample>,
}

/// Attack every sample in `samples` against `model`. Deterministic per
/// config seed; per-sample attacks run in parallel.
pub fn generate_adversarial_dataset(
    model: &Classifier,
    model_id: &str,
    representation: Representation,
    samples: &[LabeledSample],
    config: &AttackConfig,
) -> Result<AdversarialSet, AttackError> {
    if samples.is_empty() {
        return Err(AttackError::Contract(String::from(
            "cannot attack an empty split",
        )));
    }
    if model.config().input_channels != representation.input_channels() {
        return Err(AttackError::Contract(format!(
            "model expects {} channels but representation {representation} provides {}",
            model.config().input_channels,
            representation.input_channels()
        )));
    }
    let results = par::map_indexed(samples.len(), |i| {
        let s = &samples[i];
        pgd_attack(model, &s.input, s.label, config, i as u64).map(|adv| {
            let linf = adv.linf_distance(&s.input).expect("same shape");
            AdvExample {
                source_id: s.source_id.clone(),
                label: s.label,
                input: adv,
                linf,
            }
        })
    });
    let mut examples = Vec::with_capacity(samples.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => examples.push(e),
            Err(e) => {
                return Err(AttackError::Model(format!(
                    "sample {}: {e}",
                    samples[i].source_id
                )))
            }
        }
    }
    Ok(AdversarialSet {
        source_model_id: String::from(model_id),
        representation,
        config: config.clone(),
        examples,
    })
}

/// Accuracy of `target_model` on a stored adversarial set (original labels).
pub fn transfer_evaluate(
    target_model: &Classifier,
    target_representation: Representation,
    adv_set: &AdversarialSet,
) -> Result<f64, AttackError> {
    if adv_set.representation != target_representation {
        return Err(AttackError::Contract(format!(
            "adversarial set holds {} inputs but target model consumes {}",
            adv_set.representation, target_representation
        )));
    }
    if adv_set.examples.is_empty() {
        return Err(AttackError::Contract(String::from("empty adversarial set")));
    }
    let hits = par::map_indexed(adv_set.examples.len(), |i| {
        let e = &adv_set.examples[i];
        target_model
            .predict(&e.input)
            .map(|p| (p == e.label) as usize)
    });
    let mut correct = 0usize;
    for r in hits {
        correct += r.map_err(|e| AttackError::Model(format!("{e}")))?;
    }
    Ok(correct as f64 / adv_set.examples.len() as f64)
}
