//! The four training schemes: standard (S), adversarial (A), temporally
//! augmented (T) and both (A+T).
//!
//! All schemes share the same backbone: cross-entropy loss, Adam at a
//! constant learning rate, input noise at the configured SNR, and
//! lowest-validation-loss checkpointing. T/A+T sample a uniform temporal
//! crop offset per occurrence; A/A+T replace each (noisy) batch input with a
//! PGD example computed against the current weights. Validation loss is
//! always computed on clean, offset-zero samples.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{pgd_attack, AttackConfig, AttackError};
use crate::autodiff::Tape;
use crate::dataset::{
    batch_iter, network_input, Dataset, DatasetError, Representation, SplitIndices, MAX_SHIFT,
};
use crate::dsp::{add_noise_snr, DspError};
use crate::models::{Classifier, ModelError, Parameter};
use crate::optim::{AdamState, OptimError};
use crate::par;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingScheme {
    Standard,
    Adversarial,
    TemporalAug,
    AdvPlusTemporal,
}

impl TrainingScheme {
    pub fn uses_attack(&self) -> bool {
        matches!(self, TrainingScheme::Adversarial | TrainingScheme::AdvPlusTemporal)
    }

    pub fn uses_temporal(&self) -> bool {
        matches!(self, TrainingScheme::TemporalAug | TrainingScheme::AdvPlusTemporal)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainingScheme::Standard => "S",
            TrainingScheme::Adversarial => "A",
            TrainingScheme::TemporalAug => "T",
            TrainingScheme::AdvPlusTemporal => "A+T",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S" => Some(TrainingScheme::Standard),
            "A" => Some(TrainingScheme::Adversarial),
            "T" => Some(TrainingScheme::TemporalAug),
            "A+T" => Some(TrainingScheme::AdvPlusTemporal),
            _ => None,
        }
    }

    pub fn all() -> [TrainingScheme; 4] {
        [
            TrainingScheme::Standard,
            TrainingScheme::Adversarial,
            TrainingScheme::TemporalAug,
            TrainingScheme::AdvPlusTemporal,
        ]
    }
}

impl fmt::Display for TrainingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scheme: TrainingScheme,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// +inf disables noise.
    pub noise_snr_db: f64,
    /// Inner-maximization attack for A / A+T.
    pub attack: AttackConfig,
    /// Inclusive crop-offset range for temporal augmentation.
    pub temporal_shift_range: (usize, usize),
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(scheme: TrainingScheme, seed: u64) -> Self {
        TrainConfig {
            scheme,
            max_epochs: 50,
            learning_rate: 1e-3,
            batch_size: 32,
            noise_snr_db: 0.0,
            attack: AttackConfig::with_seed(rng::derive(seed, 0xA77C)),
            temporal_shift_range: (0, MAX_SHIFT),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Clean validation loss per epoch.
    pub val_loss: Vec<f64>,
    /// 1-based epoch with the lowest validation loss.
    pub selected_epoch: usize,
    pub best_val_loss: f64,
    /// Parameters of the selected epoch (also restored into the model).
    pub best: Vec<Parameter>,
    pub forward_passes: u64,
    pub backward_passes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainingError {
    /// Non-finite loss, named by epoch and batch (both 1-based; batch 0
    /// means the validation pass).
    Diverged { epoch: usize, batch: usize },
    Parameter(String),
    Model(String),
    Dataset(String),
    Attack(String),
    Optim(String),
}

impl fmt::Display for TrainingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainingError::Diverged { epoch, batch } => {
                write!(f, "training diverged at epoch {epoch}, batch {batch}")
            }
            TrainingError::Parameter(m) => write!(f, "parameter error: {m}"),
            TrainingError::Model(m) => write!(f, "model error: {m}"),
            TrainingError::Dataset(m) => write!(f, "dataset error: {m}"),
            TrainingError::Attack(m) => write!(f, "attack error: {m}"),
            TrainingError::Optim(m) => write!(f, "optimizer error: {m}"),
        }
    }
}

impl core::error::Error for TrainingError {}

impl From<ModelError> for TrainingError {
    fn from(e: ModelError) -> Self {
        TrainingError::Model(format!("{e}"))
    }
}

impl From<DatasetError> for TrainingError {
    fn from(e: DatasetError) -> Self {
        TrainingError::Dataset(format!("{e}"))
    }
}

impl From<DspError> for TrainingError {
    fn from(e: DspError) -> Self {
        TrainingError::Dataset(format!("{e}"))
    }
}

impl From<AttackError> for TrainingError {
    fn from(e: AttackError) -> Self {
        TrainingError::Attack(format!("{e}"))
    }
}

impl From<OptimError> for TrainingError {
    fn from(e: OptimError) -> Self {
        TrainingError::Optim(format!("{e}"))
    }
}

struct SamplePass {
    loss: f64,
    grads: Vec<Vec<f64>>,
}

fn sample_pass(
    model: &Classifier,
    data: &Dataset,
    rep: Representation,
    idx: usize,
    offset: usize,
    noise_snr_db: f64,
    noise_seed: u64,
    attack: Option<(&AttackConfig, u64)>,
) -> Result<SamplePass, TrainingError> {
    let record = &data.records[idx];
    let clean = network_input(record, rep, offset)?;
    let noisy = if noise_snr_db == f64::INFINITY {
        clean
    } else {
        add_noise_snr(&clean, noise_snr_db, noise_seed)?
    };
    let input = match attack {
        Some((cfg, occurrence)) => pgd_attack(model, &noisy, record.label, cfg, occurrence)?,
        None => noisy,
    };
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let x = tape.leaf(&input, false);
    let logits = model.forward_bound(&mut tape, &bound, x)?;
    let loss = tape
        .softmax_cross_entropy(logits, record.label)
        .map_err(|e| TrainingError::Model(format!("{e}")))?;
    tape.backward(loss)
        .map_err(|e| TrainingError::Model(format!("{e}")))?;
    let grads = bound
        .param_vars
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.to_vec()).unwrap_or_default())
        .collect();
    Ok(SamplePass {
        loss: tape.scalar_value(loss),
        grads,
    })
}

/// Mean clean cross-entropy over a split: offset-zero crops, no noise, no
/// attack.
pub fn evaluate_loss(
    model: &Classifier,
    data: &Dataset,
    indices: &[usize],
    rep: Representation,
) -> Result<f64, TrainingError> {
    if indices.is_empty() {
        return Err(TrainingError::Parameter(String::from(
            "evaluate_loss on an empty split",
        )));
    }
    let losses = par::map_indexed(indices.len(), |i| -> Result<f64, TrainingError> {
        let record = &data.records[indices[i]];
        let input = network_input(record, rep, 0)?;
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let x = tape.leaf(&input, false);
        let logits = model.forward_bound(&mut tape, &bound, x)?;
        let loss = tape
            .softmax_cross_entropy(logits, record.label)
            .map_err(|e| TrainingError::Model(format!("{e}")))?;
        Ok(tape.scalar_value(loss))
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / indices.len() as f64)
}

/// Train `model` under `config`, returning loss curves and the
/// lowest-validation-loss checkpoint. The model is left restored to that
/// checkpoint.
pub fn train(
    model: &mut Classifier,
    data: &Dataset,
    splits: &SplitIndices,
    rep: Representation,
    config: &TrainConfig,
) -> Result<TrainResult, TrainingError> {
    if config.max_epochs == 0 {
        return Err(TrainingError::Parameter(String::from("max_epochs must be >= 1")));
    }
    if config.batch_size == 0 {
        return Err(TrainingError::Parameter(String::from("batch_size must be >= 1")));
    }
    let (lo, hi) = config.temporal_shift_range;
    if lo > hi || hi > MAX_SHIFT {
        return Err(TrainingError::Parameter(format!(
            "temporal_shift_range ({lo}, {hi}) must lie within (0, {MAX_SHIFT})"
        )));
    }
    if model.config().input_channels != rep.input_channels() {
        return Err(TrainingError::Parameter(format!(
            "model expects {} input channels but representation {rep} provides {}",
            model.config().input_channels,
            rep.input_channels()
        )));
    }
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(TrainingError::Parameter(String::from(
            "train and validation splits must be non-empty",
        )));
    }

    let mut adam = AdamState::new(config.learning_rate);
    let mut train_loss = Vec::with_capacity(config.max_epochs);
    let mut val_loss = Vec::with_capacity(config.max_epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_snapshot: Option<Vec<Parameter>> = None;
    let mut forward_passes = 0u64;
    let mut backward_passes = 0u64;
    let attack_steps = config.attack.steps as u64;

    for epoch in 1..=config.max_epochs {
        let batches = batch_iter(
            &splits.train,
            config.batch_size,
            Some(rng::derive2(config.seed, 0xE70C, epoch as u64)),
        );
        let mut epoch_loss = 0.0f64;
        let mut epoch_samples = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let batch_no = bi + 1;
            let batch_seed = rng::derive2(config.seed, epoch as u64, bi as u64);
            // draw per-sample knobs sequentially so the parallel section is
            // order-independent
            let mut offset_rng = rng::stream(batch_seed, 0x0FF5);
            let items: Vec<(usize, usize, u64, u64)> = batch
                .iter()
                .enumerate()
                .map(|(j, &idx)| {
                    let offset = if config.scheme.uses_temporal() {
                        offset_rng.random_range(lo..=hi)
                    } else {
                        0
                    };
                    let noise_seed = rng::derive2(batch_seed, 0x01, j as u64);
                    let attack_occ = rng::derive2(batch_seed, 0x02, j as u64);
                    (idx, offset, noise_seed, attack_occ)
                })
                .collect();

            let attack_cfg = config.scheme.uses_attack().then_some(&config.attack);
            let passes = par::map_indexed(items.len(), |j| {
                let (idx, offset, noise_seed, attack_occ) = items[j];
                sample_pass(
                    model,
                    data,
                    rep,
                    idx,
                    offset,
                    config.noise_snr_db,
                    noise_seed,
                    attack_cfg.map(|c| (c, attack_occ)),
                )
            });

            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0f64;
            let mut collected: Vec<SamplePass> = Vec::with_capacity(batch.len());
            for p in passes {
                collected.push(p?);
            }
            for pass in &collected {
                batch_loss += pass.loss;
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(TrainingError::Diverged {
                    epoch,
                    batch: batch_no,
                });
            }
            // fixed-order reduction: parameter-major, then sample order
            let n_params = model.params().len();
            let mut mean_grads: Vec<Vec<f64>> = (0..n_params)
                .map(|pi| {
                    let len = model.params()[pi].tensor.numel();
                    let mut acc = alloc::vec![0.0f64; len];
                    for pass in &collected {
                        for (a, g) in acc.iter_mut().zip(pass.grads[pi].iter()) {
                            *a += g;
                        }
                    }
                    for a in acc.iter_mut() {
                        *a *= scale;
                    }
                    acc
                })
                .collect();
            for (pi, (_, t)) in model.params_mut().enumerate() {
                t.zero_grad();
                t.accumulate_grad(&core::mem::take(&mut mean_grads[pi]));
            }
            adam.step(model.params_mut())?;
            model.zero_grads();

            let per_sample_cost = 1 + if config.scheme.uses_attack() { attack_steps } else { 0 };
            forward_passes += batch.len() as u64 * per_sample_cost;
            backward_passes += batch.len() as u64 * per_sample_cost;
            epoch_loss += batch_loss * batch.len() as f64;
            epoch_samples += batch.len();
        }
        train_loss.push(epoch_loss / epoch_samples as f64);

        let v = evaluate_loss(model, data, &splits.val, rep)?;
        forward_passes += splits.val.len() as u64;
        if !v.is_finite() {
            return Err(TrainingError::Diverged { epoch, batch: 0 });
        }
        val_loss.push(v);
        if v < best_val {
            best_val = v;
            best_epoch = epoch;
            best_snapshot = Some(model.snapshot());
        }
    }

    let best = best_snapshot.expect("at least one epoch ran");
    model.restore(&best)?;
    Ok(TrainResult {
        train_loss,
        val_loss,
        selected_epoch: best_epoch,
        best_val_loss: best_val,
        best,
        forward_passes,
        backward_passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_synthetic_dataset, stratified_split, SplitSpec};
    use crate::models::{build_model, ModelConfig};
    use crate::synth::{Envelope, Jitter, RadarParams, Scatterer, SyntheticClassSpec};
    use crate::N_CLASSES;
    use alloc::vec;

    pub(crate) fn toy_specs() -> Vec<SyntheticClassSpec> {
        // six well-separated single-scatterer classes
        (0..N_CLASSES)
            .map(|c| SyntheticClassSpec {
                class_id: c,
                name: format!("toy{c}"),
                scatterers: vec![Scatterer {
                    amplitude: 1.0,
                    velocity: -2.5 + c as f64,
                    osc_amplitude: 0.01 * c as f64,
                    osc_rate: 0.5 + 0.4 * c as f64,
                    phase: 0.0,
                }],
                envelope: Envelope {
                    onset: 0.0,
                    duration: 3.0,
                },
                jitter: Jitter {
                    amplitude: 0.05,
                    velocity: 0.03,
                    osc_amplitude: 0.05,
                    osc_rate: 0.05,
                    phase: 3.0,
                },
            })
            .collect()
    }

    fn small_model(seed: u64) -> Classifier {
        build_model(&ModelConfig {
            architecture: crate::models::Architecture::B,
            input_channels: 2,
            conv_widths: vec![2, 4],
            kernel_size: 5,
            activation_slope: 0.01,
            head_hidden: 16,
            n_classes: N_CLASSES,
            input_size: 128,
            seed,
        })
        .unwrap()
    }

    fn tiny_dataset() -> (Dataset, SplitIndices) {
        let data = build_synthetic_dataset(&toy_specs(), &RadarParams::default(), 4, 77).unwrap();
        let splits = stratified_split(&data.labels(), &SplitSpec::new(77)).unwrap();
        (data, splits)
    }

    #[test]
    fn one_epoch_selects_epoch_one() {
        let (data, splits) = tiny_dataset();
        let mut model = small_model(1);
        let mut cfg = TrainConfig::new(TrainingScheme::Standard, 5);
        cfg.max_epochs = 1;
        cfg.batch_size = 8;
        let r = train(&mut model, &data, &splits, Representation::DopplerTime, &cfg).unwrap();
        assert_eq!(r.selected_epoch, 1);
        assert_eq!(r.val_loss.len(), 1);
    }

    #[test]
    fn untrained_loss_is_near_ln6() {
        let (data, splits) = tiny_dataset();
        let model = small_model(3);
        let loss =
            evaluate_loss(&model, &data, &splits.val, Representation::DopplerTime).unwrap();
        let ln6 = crate::math::ln(6.0);
        assert!((loss - ln6).abs() < 0.3, "initial loss {loss} vs ln6 {ln6}");
        // deterministic
        let again =
            evaluate_loss(&model, &data, &splits.val, Representation::DopplerTime).unwrap();
        assert_eq!(loss, again);
    }

    #[test]
    fn checkpoint_reproduces_recorded_val_loss() {
        let (data, splits) = tiny_dataset();
        let mut model = small_model(9);
        let mut cfg = TrainConfig::new(TrainingScheme::Standard, 13);
        cfg.max_epochs = 3;
        cfg.batch_size = 8;
        let r = train(&mut model, &data, &splits, Representation::DopplerTime, &cfg).unwrap();
        let reloaded =
            evaluate_loss(&model, &data, &splits.val, Representation::DopplerTime).unwrap();
        assert!(
            (reloaded - r.best_val_loss).abs() < 1e-12,
            "reloaded {reloaded} vs recorded {}",
            r.best_val_loss
        );
        assert_eq!(
            r.best_val_loss,
            r.val_loss[r.selected_epoch - 1],
            "selected epoch must be the argmin"
        );
    }

    #[test]
    fn training_is_seed_reproducible() {
        let (data, splits) = tiny_dataset();
        let run = || {
            let mut model = small_model(21);
            let mut cfg = TrainConfig::new(TrainingScheme::TemporalAug, 42);
            cfg.max_epochs = 2;
            cfg.batch_size = 8;
            train(&mut model, &data, &splits, Representation::DopplerTime, &cfg)
                .map(|r| (r.train_loss, r.val_loss))
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adversarial_epochs_cost_about_steps_plus_one() {
        let (data, splits) = tiny_dataset();
        let mut cfg_s = TrainConfig::new(TrainingScheme::Standard, 1);
        cfg_s.max_epochs = 1;
        cfg_s.batch_size = 8;
        let mut cfg_a = cfg_s.clone();
        cfg_a.scheme = TrainingScheme::Adversarial;
        cfg_a.attack = cfg_a.attack.with_steps(4);

        let mut ms = small_model(2);
        let rs = train(&mut ms, &data, &splits, Representation::DopplerTime, &cfg_s).unwrap();
        let mut ma = small_model(2);
        let ra = train(&mut ma, &data, &splits, Representation::DopplerTime, &cfg_a).unwrap();
        let train_fwd_s = rs.forward_passes - splits.val.len() as u64;
        let train_fwd_a = ra.forward_passes - splits.val.len() as u64;
        assert_eq!(train_fwd_a, train_fwd_s * 5, "A-scheme cost factor");
    }
}
