//! Synthetic dataset construction, stratified splitting and batching.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, DopplerTimeMap, DspError, DOPPLER_BINS};
use crate::rng;
use crate::synth::{self, RadarParams, SynthError, SyntheticClassSpec};
use crate::tensor::Tensor;
use crate::N_CLASSES;

/// Column count of the shift-evaluation map (128 + 20 shift steps).
pub const SHIFT_COLUMNS: usize = DOPPLER_BINS + 20;
/// Largest temporal crop offset.
pub const MAX_SHIFT: usize = SHIFT_COLUMNS - DOPPLER_BINS;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    Parameter(String),
    Split(String),
    Dsp(DspError),
    Synth(SynthError),
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Parameter(m) => write!(f, "parameter error: {m}"),
            DatasetError::Split(m) => write!(f, "split error: {m}"),
            DatasetError::Dsp(e) => write!(f, "dsp error: {e}"),
            DatasetError::Synth(e) => write!(f, "synthesis error: {e}"),
        }
    }
}

impl core::error::Error for DatasetError {}

impl From<DspError> for DatasetError {
    fn from(e: DspError) -> Self {
        DatasetError::Dsp(e)
    }
}

impl From<SynthError> for DatasetError {
    fn from(e: SynthError) -> Self {
        DatasetError::Synth(e)
    }
}

/// Input representation fed to a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Two channels: real and imaginary parts of the Doppler-time map.
    DopplerTime,
    /// One channel: cadence-velocity diagram magnitudes.
    Cvd,
}

impl Representation {
    pub fn input_channels(&self) -> usize {
        match self {
            Representation::DopplerTime => 2,
            Representation::Cvd => 1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Representation::DopplerTime => "doppler_time",
            Representation::Cvd => "cvd",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One recorded sample: the 148-column shift-evaluation map plus its
/// canonical 128-column (offset 0) crop.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub label: usize,
    pub map148: DopplerTimeMap,
    pub map128: DopplerTimeMap,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }
}

/// Network-ready sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub input: Tensor,
    pub label: usize,
    pub source_id: String,
    pub shift_variant: Option<usize>,
}

/// Build the network input for `record` at temporal crop `offset` under the
/// given representation.
pub fn network_input(
    record: &SampleRecord,
    rep: Representation,
    offset: usize,
) -> Result<Tensor, DatasetError> {
    let crop = dsp::temporal_crop(&record.map148, offset)?;
    let t = match rep {
        Representation::DopplerTime => dsp::to_network_input(&crop)?,
        Representation::Cvd => dsp::to_network_input_cvd(&dsp::cvd_transform(&crop)?)?,
    };
    Ok(t)
}

/// [`network_input`] wrapped as a [`LabeledSample`].
pub fn labeled(
    record: &SampleRecord,
    rep: Representation,
    offset: usize,
) -> Result<LabeledSample, DatasetError> {
    Ok(LabeledSample {
        input: network_input(record, rep, offset)?,
        label: record.label,
        source_id: record.id.clone(),
        shift_variant: if offset == 0 { None } else { Some(offset) },
    })
}

/// Canonical (offset 0) labeled samples for a list of record indices.
pub fn labeled_set(
    data: &Dataset,
    indices: &[usize],
    rep: Representation,
) -> Result<Vec<LabeledSample>, DatasetError> {
    indices
        .iter()
        .map(|&i| labeled(&data.records[i], rep, 0))
        .collect()
}

/// Generate `per_class` samples for each of the six class specs. The whole
/// dataset is deterministic in `seed`.
pub fn build_synthetic_dataset(
    class_specs: &[SyntheticClassSpec],
    radar: &RadarParams,
    per_class: usize,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if class_specs.len() != N_CLASSES {
        return Err(DatasetError::Parameter(format!(
            "expected {N_CLASSES} class specs, got {}",
            class_specs.len()
        )));
    }
    if per_class < 4 {
        return Err(DatasetError::Parameter(format!(
            "per_class must be >= 4, got {per_class}"
        )));
    }
    let mut records = Vec::with_capacity(N_CLASSES * per_class);
    for (label, spec) in class_specs.iter().enumerate() {
        for k in 0..per_class {
            let sample_seed = rng::derive2(seed, label as u64, k as u64);
            let series = synth::synth_generate(spec, radar, sample_seed)?;
            let map = dsp::stft(&series, dsp::STFT_WINDOW, dsp::STFT_OVERLAP, DOPPLER_BINS)?;
            let map148 = dsp::resample_time(&map, SHIFT_COLUMNS)?;
            let map128 = dsp::temporal_crop(&map148, 0)?;
            records.push(SampleRecord {
                id: format!("synth-c{label}-{k:04}"),
                label,
                map148,
                map128,
            });
        }
    }
    Ok(Dataset { records })
}

/// Split ratios and shuffle seed. Ratios must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            ratios: (0.50, 0.25, 0.25),
            seed,
        }
    }
}

/// Index sets of a train/val/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `n` into three parts.
fn apportion(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let r = [ratios.0, ratios.1, ratios.2];
    let mut counts = [0usize; 3];
    let mut fracs = [0.0f64; 3];
    let mut assigned = 0usize;
    for i in 0..3 {
        let exact = r[i] * n as f64;
        counts[i] = crate::math::floor(exact) as usize;
        fracs[i] = exact - counts[i] as f64;
        assigned += counts[i];
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| fracs[b].partial_cmp(&fracs[a]).unwrap().then(a.cmp(&b)));
    for i in 0..(n - assigned) {
        counts[order[i % 3]] += 1;
    }
    counts
}

/// Stratified 50/25/25 split: per-class seeded shuffle, per-class counts
/// within one sample of exact, and global totals matched by steering
/// leftover samples toward the split with the largest remaining deficit.
pub fn stratified_split(labels: &[usize], spec: &SplitSpec) -> Result<SplitIndices, DatasetError> {
    let (a, b, c) = spec.ratios;
    if (a + b + c - 1.0).abs() > 1e-9 || a < 0.0 || b < 0.0 || c < 0.0 {
        return Err(DatasetError::Parameter(format!(
            "ratios must be non-negative and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n_classes = labels.iter().map(|&l| l + 1).max().unwrap_or(0);
    if n_classes == 0 {
        return Err(DatasetError::Split(String::from("no samples to split")));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    for (cls, members) in per_class.iter().enumerate() {
        if members.len() < 4 {
            return Err(DatasetError::Split(format!(
                "class {cls} has {} samples; at least 4 required",
                members.len()
            )));
        }
    }

    let totals = apportion(labels.len(), spec.ratios);
    // floors first, then hand out per-class leftovers by fractional
    // remainder, breaking ties toward the split with the larger global
    // deficit, then by split index
    let mut assigned = [0usize; 3];
    let ratio_arr = [a, b, c];
    let mut class_counts: Vec<[usize; 3]> = Vec::with_capacity(n_classes);
    let mut leftovers: Vec<(usize, [f64; 3])> = Vec::with_capacity(n_classes);
    for members in &per_class {
        let n = members.len();
        let mut counts = [0usize; 3];
        let mut fracs = [0.0f64; 3];
        for s in 0..3 {
            let exact = ratio_arr[s] * n as f64;
            counts[s] = crate::math::floor(exact) as usize;
            fracs[s] = exact - counts[s] as f64;
            assigned[s] += counts[s];
        }
        let leftover = n - counts.iter().sum::<usize>();
        class_counts.push(counts);
        leftovers.push((leftover, fracs));
    }
    for (cls, (leftover, fracs)) in leftovers.into_iter().enumerate() {
        for _ in 0..leftover {
            let mut best = usize::MAX;
            for s in 0..3 {
                if best == usize::MAX {
                    best = s;
                    continue;
                }
                let deficit_s = totals[s] as i64 - assigned[s] as i64;
                let deficit_b = totals[best] as i64 - assigned[best] as i64;
                let key_s = (fracs[s], deficit_s);
                let key_b = (fracs[best], deficit_b);
                if key_s.0 > key_b.0 || (key_s.0 == key_b.0 && key_s.1 > key_b.1) {
                    best = s;
                }
            }
            class_counts[cls][best] += 1;
            assigned[best] += 1;
        }
    }

    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (cls, members) in per_class.iter().enumerate() {
        let mut shuffled = members.clone();
        let mut r = rng::stream(spec.seed, cls as u64);
        shuffled.shuffle(&mut r);
        let [nt, nv, _] = class_counts[cls];
        out.train.extend_from_slice(&shuffled[..nt]);
        out.val.extend_from_slice(&shuffled[nt..nt + nv]);
        out.test.extend_from_slice(&shuffled[nt + nv..]);
    }
    Ok(out)
}

/// Batches covering every index exactly once; the final partial batch is
/// emitted. `shuffle_seed = None` keeps the original order.
pub fn batch_iter(indices: &[usize], batch_size: usize, shuffle_seed: Option<u64>) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = indices.to_vec();
    if let Some(seed) = shuffle_seed {
        let mut r = rng::stream(seed, 0xBA7C);
        order.shuffle(&mut r);
    }
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}
