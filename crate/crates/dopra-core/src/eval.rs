//! Robustness metrics: accuracy triples, shift sweeps, activation-variance
//! tables and report assembly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    network_input, Dataset, DatasetError, LabeledSample, Representation, SHIFT_COLUMNS,
};
use crate::dsp;
use crate::math;
use crate::models::{Classifier, ModelError};
use crate::par;
use crate::N_CLASSES;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    Parameter(String),
    Contract(String),
    Model(String),
    Dataset(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Parameter(m) => write!(f, "parameter error: {m}"),
            EvalError::Contract(m) => write!(f, "contract error: {m}"),
            EvalError::Model(m) => write!(f, "model error: {m}"),
            EvalError::Dataset(m) => write!(f, "dataset error: {m}"),
        }
    }
}

impl core::error::Error for EvalError {}

impl From<ModelError> for EvalError {
    fn from(e: ModelError) -> Self {
        EvalError::Model(format!("{e}"))
    }
}

impl From<DatasetError> for EvalError {
    fn from(e: DatasetError) -> Self {
        EvalError::Dataset(format!("{e}"))
    }
}

/// Fraction of samples with `argmax(logits) == label`; ties resolve to the
/// lowest class index.
pub fn accuracy(model: &Classifier, samples: &[LabeledSample]) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Parameter(String::from(
            "accuracy over an empty sample set",
        )));
    }
    let hits = par::map_indexed(samples.len(), |i| {
        let s = &samples[i];
        model.predict(&s.input).map(|p| (p == s.label) as usize)
    });
    let mut correct = 0usize;
    for h in hits {
        correct += h?;
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Worst-case temporal accuracy: a sample counts as correct only when the
/// prediction is right for every crop offset in `0..=20` of its 148-column
/// map.
pub fn worst_case_temporal_accuracy(
    model: &Classifier,
    data: &Dataset,
    indices: &[usize],
    rep: Representation,
) -> Result<f64, EvalError> {
    if indices.is_empty() {
        return Err(EvalError::Parameter(String::from(
            "worst-case accuracy over an empty split",
        )));
    }
    for &i in indices {
        if data.records[i].map148.columns != SHIFT_COLUMNS {
            return Err(EvalError::Contract(format!(
                "sample {} lacks a {SHIFT_COLUMNS}-column shift map",
                data.records[i].id
            )));
        }
    }
    let survived = par::map_indexed(indices.len(), |k| -> Result<usize, EvalError> {
        let record = &data.records[indices[k]];
        for offset in 0..=(SHIFT_COLUMNS - dsp::DOPPLER_BINS) {
            let input = network_input(record, rep, offset)?;
            if model.predict(&input)? != record.label {
                return Ok(0);
            }
        }
        Ok(1)
    });
    let mut correct = 0usize;
    for s in survived {
        correct += s?;
    }
    Ok(correct as f64 / indices.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftAxis {
    Temporal,
    Doppler,
}

/// Per-sample logit trace across a family of shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub source_id: String,
    pub label: usize,
    /// One logit vector (length 6) per offset, in offset order.
    pub logits: Vec<Vec<f64>>,
}

/// Accuracy and activation response over a shift family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSweep {
    pub axis: ShiftAxis,
    pub offsets: Vec<i32>,
    /// `per_class_accuracy[offset][class]`; 0 when a class is absent.
    pub per_class_accuracy: Vec<Vec<f64>>,
    pub per_class_counts: Vec<usize>,
    /// Overall accuracy per offset.
    pub overall_accuracy: Vec<f64>,
    pub traces: Vec<SampleTrace>,
}

fn sweep(
    model: &Classifier,
    data: &Dataset,
    indices: &[usize],
    rep: Representation,
    axis: ShiftAxis,
    offsets: Vec<i32>,
) -> Result<ShiftSweep, EvalError> {
    if indices.is_empty() {
        return Err(EvalError::Parameter(String::from("sweep over an empty split")));
    }
    let results = par::map_indexed(indices.len(), |k| -> Result<SampleTrace, EvalError> {
        let record = &data.records[indices[k]];
        let mut logits = Vec::with_capacity(offsets.len());
        for &off in &offsets {
            let input = match axis {
                ShiftAxis::Temporal => network_input(record, rep, off as usize)?,
                ShiftAxis::Doppler => {
                    let shifted = dsp::circular_doppler_shift(&record.map128, off);
                    match rep {
                        Representation::DopplerTime => dsp::to_network_input(&shifted)
                            .map_err(|e| EvalError::Dataset(format!("{e}")))?,
                        Representation::Cvd => {
                            let cvd = dsp::cvd_transform(&shifted)
                                .map_err(|e| EvalError::Dataset(format!("{e}")))?;
                            dsp::to_network_input_cvd(&cvd)
                                .map_err(|e| EvalError::Dataset(format!("{e}")))?
                        }
                    }
                }
            };
            logits.push(model.logits(&input)?);
        }
        Ok(SampleTrace {
            source_id: record.id.clone(),
            label: record.label,
            logits,
        })
    });
    let mut traces = Vec::with_capacity(indices.len());
    for r in results {
        traces.push(r?);
    }

    let mut per_class_counts = vec![0usize; N_CLASSES];
    for t in &traces {
        per_class_counts[t.label] += 1;
    }
    let mut per_class_accuracy = vec![vec![0.0f64; N_CLASSES]; offsets.len()];
    let mut overall_accuracy = vec![0.0f64; offsets.len()];
    for (oi, _) in offsets.iter().enumerate() {
        let mut per_class_hits = vec![0usize; N_CLASSES];
        let mut hits = 0usize;
        for t in &traces {
            if math::argmax_lowest(&t.logits[oi]) == t.label {
                per_class_hits[t.label] += 1;
                hits += 1;
            }
        }
        for c in 0..N_CLASSES {
            per_class_accuracy[oi][c] = if per_class_counts[c] > 0 {
                per_class_hits[c] as f64 / per_class_counts[c] as f64
            } else {
                0.0
            };
        }
        overall_accuracy[oi] = hits as f64 / traces.len() as f64;
    }
    Ok(ShiftSweep {
        axis,
        offsets,
        per_class_accuracy,
        per_class_counts,
        overall_accuracy,
        traces,
    })
}

/// Crop-offset sweep over `0..=20`.
pub fn temporal_sweep(
    model: &Classifier,
    data: &Dataset,
    indices: &[usize],
    rep: Representation,
) -> Result<ShiftSweep, EvalError> {
    let offsets: Vec<i32> = (0..=(SHIFT_COLUMNS - dsp::DOPPLER_BINS) as i32).collect();
    sweep(model, data, indices, rep, ShiftAxis::Temporal, offsets)
}

/// Circular Doppler-shift sweep over `-10..=10`; in CVD mode the shift is
/// applied before the CVD transform.
pub fn doppler_sweep(
    model: &Classifier,
    data: &Dataset,
    indices: &[usize],
    rep: Representation,
) -> Result<ShiftSweep, EvalError> {
    let offsets: Vec<i32> = (-10..=10).collect();
    sweep(model, data, indices, rep, ShiftAxis::Doppler, offsets)
}

/// Mean activation variance per class, over all samples (`total`) and over
/// the ground-truth subset (`gt`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub class: usize,
    pub temporal_total: f64,
    pub temporal_gt: f64,
    pub doppler_total: f64,
    pub doppler_gt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    /// True when variances are taken on pre-softmax logits (the default);
    /// false when taken on softmax outputs.
    pub on_logits: bool,
    pub rows: Vec<VarianceRow>,
}

fn trace_activation(t: &SampleTrace, class: usize, oi: usize, on_logits: bool) -> f64 {
    if on_logits {
        t.logits[oi][class]
    } else {
        let row = &t.logits[oi];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&x| math::exp(x - m)).collect();
        let sum: f64 = exps.iter().sum();
        exps[class] / sum
    }
}

fn mean_class_variance(
    traces: &[SampleTrace],
    class: usize,
    only_gt: bool,
    on_logits: bool,
) -> f64 {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for t in traces {
        if only_gt && t.label != class {
            continue;
        }
        let series: Vec<f64> = (0..t.logits.len())
            .map(|oi| trace_activation(t, class, oi, on_logits))
            .collect();
        sum += math::population_variance(&series);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Build the per-class variance table from the two sweeps. Variance is the
/// population variance (divisor N) of the class activation across offsets.
pub fn activation_variance_table(
    temporal: &ShiftSweep,
    doppler: &ShiftSweep,
    on_logits: bool,
) -> VarianceTable {
    let rows = (0..N_CLASSES)
        .map(|c| VarianceRow {
            class: c,
            temporal_total: mean_class_variance(&temporal.traces, c, false, on_logits),
            temporal_gt: mean_class_variance(&temporal.traces, c, true, on_logits),
            doppler_total: mean_class_variance(&doppler.traces, c, false, on_logits),
            doppler_gt: mean_class_variance(&doppler.traces, c, true, on_logits),
        })
        .collect();
    VarianceTable { on_logits, rows }
}

/// Standard / PGD / worst-case-temporal accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTriple {
    pub standard: f64,
    pub pgd: f64,
    pub temp_shift_worst: f64,
}

/// Transferred-attack accuracies for one target model: one entry per
/// source scheme, plus the clean baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub source_architecture: String,
    pub source_schemes: Vec<String>,
    pub no_attack: f64,
    pub accuracies: Vec<f64>,
}

/// Recorded analysis conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub variance_on_logits: bool,
    pub variance_divisor: String,
    pub normalization: String,
    pub standard_offset: usize,
}

impl Default for ReportMeta {
    fn default() -> Self {
        ReportMeta {
            variance_on_logits: true,
            variance_divisor: String::from("population"),
            normalization: String::from("per-sample max complex magnitude"),
            standard_offset: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentStamp {
    pub package: String,
    pub version: String,
    pub seed: u64,
}

/// Full robustness report for one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub model_id: String,
    pub architecture: String,
    pub scheme: String,
    pub representation: Representation,
    pub config_hash: String,
    pub accuracy: AccuracyTriple,
    pub temporal_sweep: ShiftSweep,
    pub doppler_sweep: ShiftSweep,
    pub variance: VarianceTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferRow>,
    pub environment: EnvironmentStamp,
    pub meta: ReportMeta,
}

impl RobustnessReport {
    /// Sanity pass over the assembled report: accuracies in `[0,1]`,
    /// non-negative variances, and softmax of every recorded logit vector
    /// summing to one.
    pub fn validate(&self) -> Result<(), EvalError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(in_unit(self.accuracy.standard)
            && in_unit(self.accuracy.pgd)
            && in_unit(self.accuracy.temp_shift_worst))
        {
            return Err(EvalError::Contract(String::from(
                "accuracy triple outside [0, 1]",
            )));
        }
        for row in &self.variance.rows {
            if row.temporal_total < 0.0
                || row.temporal_gt < 0.0
                || row.doppler_total < 0.0
                || row.doppler_gt < 0.0
            {
                return Err(EvalError::Contract(String::from("negative variance entry")));
            }
        }
        for sweep in [&self.temporal_sweep, &self.doppler_sweep] {
            for t in &sweep.traces {
                for oi in 0..t.logits.len() {
                    let mut sum = 0.0;
                    for c in 0..N_CLASSES {
                        sum += trace_activation(t, c, oi, false);
                    }
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(EvalError::Contract(format!(
                            "softmax of recorded logits sums to {sum}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
