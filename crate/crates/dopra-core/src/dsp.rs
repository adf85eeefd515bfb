//! Radar signal processing: raw chirps to network-ready representations.
//!
//! The chain mirrors standard dechirped FMCW practice:
//!
//! ```text
//! RawRecording ─ range_process ─► RangeTimeMap ─ integrate_range_bins ─►
//! ComplexSeries ─ stft ─► DopplerTimeMap ─ resample_time / temporal_crop /
//! circular_doppler_shift ─► network input   (or cvd_transform ─► CVDMap)
//! ```
//!
//! Doppler-time maps always have [`DOPPLER_BINS`] = 128 rows and are stored
//! null-Doppler centered: row 64 holds zero Doppler, rows above it positive
//! Doppler. All transforms are pure; noise injection is deterministic per
//! seed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::math;
use crate::tensor::Tensor;

pub type C64 = Complex<f64>;

/// Number of Doppler bins of every Doppler-time map.
pub const DOPPLER_BINS: usize = 128;
/// Row index holding zero Doppler in centered ordering.
pub const NULL_DOPPLER_ROW: usize = DOPPLER_BINS / 2;
/// STFT analysis window length.
pub const STFT_WINDOW: usize = 64;
/// STFT overlap between consecutive windows.
pub const STFT_OVERLAP: usize = 48;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DspError {
    Parameter(String),
    Dimension(String),
    DegenerateInput(String),
}

impl fmt::Display for DspError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DspError::Parameter(m) => write!(f, "parameter error: {m}"),
            DspError::Dimension(m) => write!(f, "dimension error: {m}"),
            DspError::DegenerateInput(m) => write!(f, "degenerate input: {m}"),
        }
    }
}

impl core::error::Error for DspError {}

// ── Types ────────────────────────────────────────────────────────────────

/// Complex slow-time signal with uniform sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    pub samples: Vec<C64>,
    /// Seconds between consecutive samples; > 0.
    pub sample_interval: f64,
}

/// Raw dechirped recording, chirp-major: chirp `c`, fast-time sample `s`
/// lives at `data[c * samples_per_chirp + s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub samples_per_chirp: usize,
    pub chirps: usize,
    pub chirp_duration: f64,
    pub data: Vec<C64>,
}

/// Range profile over slow time; bin-major: `bins[bin * chirps + chirp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeTimeMap {
    pub range_bins: usize,
    pub chirps: usize,
    pub chirp_duration: f64,
    pub bins: Vec<C64>,
}

/// Centered Doppler-time map, row-major `[DOPPLER_BINS x columns]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerTimeMap {
    pub columns: usize,
    /// Seconds between consecutive columns.
    pub column_interval: f64,
    /// Null Doppler sits at row [`NULL_DOPPLER_ROW`].
    pub centered: bool,
    pub spectra: Vec<C64>,
}

impl DopplerTimeMap {
    pub fn new(columns: usize, column_interval: f64, centered: bool, spectra: Vec<C64>) -> Result<Self, DspError> {
        if spectra.len() != DOPPLER_BINS * columns {
            return Err(DspError::Dimension(format!(
                "doppler-time map expects {} values for {} columns, got {}",
                DOPPLER_BINS * columns,
                columns,
                spectra.len()
            )));
        }
        Ok(DopplerTimeMap {
            columns,
            column_interval,
            centered,
            spectra,
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> C64 {
        self.spectra[row * self.columns + col]
    }

    pub fn row(&self, row: usize) -> &[C64] {
        &self.spectra[row * self.columns..(row + 1) * self.columns]
    }

    /// Doppler row with the most energy (summed |.|^2 over columns).
    pub fn dominant_row(&self) -> usize {
        let mut best = 0usize;
        let mut best_e = f64::NEG_INFINITY;
        for r in 0..DOPPLER_BINS {
            let e: f64 = self.row(r).iter().map(|z| z.norm_sqr()).sum();
            if e > best_e {
                best_e = e;
                best = r;
            }
        }
        best
    }
}

/// Cadence-velocity diagram: non-negative magnitudes, `[DOPPLER_BINS x
/// DOPPLER_BINS]`, rows in the same Doppler ordering as the source map,
/// cadence bin 0 = zero cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct CvdMap {
    pub magnitudes: Vec<f64>,
}

impl CvdMap {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.magnitudes[row * DOPPLER_BINS + col]
    }
}

// ── DFT ──────────────────────────────────────────────────────────────────

/// Forward DFT. Radix-2 in-place transform for power-of-two lengths,
/// direct evaluation otherwise (lengths here are tiny).
pub(crate) fn dft(input: &[C64]) -> Vec<C64> {
    let n = input.len();
    if n <= 1 {
        return input.to_vec();
    }
    if n.is_power_of_two() {
        fft_pow2(input)
    } else {
        dft_direct(input)
    }
}

fn fft_pow2(input: &[C64]) -> Vec<C64> {
    let n = input.len();
    let bits = n.trailing_zeros();
    let mut a = vec![C64::new(0.0, 0.0); n];
    for (i, &x) in input.iter().enumerate() {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        a[j] = x;
    }
    let mut len = 2usize;
    while len <= n {
        let ang = -2.0 * math::PI / len as f64;
        let wlen = C64::new(math::cos(ang), math::sin(ang));
        let half = len / 2;
        for start in (0..n).step_by(len) {
            let mut w = C64::new(1.0, 0.0);
            for k in 0..half {
                let u = a[start + k];
                let v = a[start + k + half] * w;
                a[start + k] = u + v;
                a[start + k + half] = u - v;
                w *= wlen;
            }
        }
        len <<= 1;
    }
    a
}

fn dft_direct(input: &[C64]) -> Vec<C64> {
    let n = input.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (idx, &x) in input.iter().enumerate() {
            let ang = -2.0 * math::PI * ((idx * k) % n) as f64 / n as f64;
            acc += x * C64::new(math::cos(ang), math::sin(ang));
        }
        *o = acc;
    }
    out
}

// ── Operations ───────────────────────────────────────────────────────────

/// Three-term Blackman taper `0.42 - 0.5 cos(2πn/(N-1)) + 0.08 cos(4πn/(N-1))`.
pub fn blackman_window(length: usize) -> Result<Vec<f64>, DspError> {
    if length < 2 {
        return Err(DspError::Parameter(format!(
            "blackman window needs length >= 2, got {length}"
        )));
    }
    let denom = (length - 1) as f64;
    Ok((0..length)
        .map(|n| {
            let x = 2.0 * math::PI * n as f64 / denom;
            0.42 - 0.5 * math::cos(x) + 0.08 * math::cos(2.0 * x)
        })
        .collect())
}

/// Per-chirp DFT along fast time; output rows are range bins.
pub fn range_process(raw: &RawRecording) -> Result<RangeTimeMap, DspError> {
    if raw.samples_per_chirp == 0 || raw.chirps == 0 {
        return Err(DspError::Dimension(String::from(
            "range_process requires at least one chirp and one sample",
        )));
    }
    if raw.data.len() != raw.samples_per_chirp * raw.chirps {
        return Err(DspError::Dimension(format!(
            "raw recording expects {} samples, got {}",
            raw.samples_per_chirp * raw.chirps,
            raw.data.len()
        )));
    }
    let n = raw.samples_per_chirp;
    let mut bins = vec![C64::new(0.0, 0.0); n * raw.chirps];
    for c in 0..raw.chirps {
        let spectrum = dft(&raw.data[c * n..(c + 1) * n]);
        for (b, v) in spectrum.into_iter().enumerate() {
            bins[b * raw.chirps + c] = v;
        }
    }
    Ok(RangeTimeMap {
        range_bins: n,
        chirps: raw.chirps,
        chirp_duration: raw.chirp_duration,
        bins,
    })
}

/// Coherent complex sum over range bins `[lo, hi]` (inclusive; all bins when
/// absent) per chirp.
pub fn integrate_range_bins(
    map: &RangeTimeMap,
    bin_range: Option<(usize, usize)>,
) -> Result<ComplexSeries, DspError> {
    let (lo, hi) = bin_range.unwrap_or((0, map.range_bins - 1));
    if lo > hi || hi >= map.range_bins {
        return Err(DspError::Parameter(format!(
            "bin range [{lo},{hi}] invalid for {} range bins",
            map.range_bins
        )));
    }
    let mut samples = vec![C64::new(0.0, 0.0); map.chirps];
    for b in lo..=hi {
        let row = &map.bins[b * map.chirps..(b + 1) * map.chirps];
        for (s, v) in samples.iter_mut().zip(row.iter()) {
            *s += v;
        }
    }
    Ok(ComplexSeries {
        samples,
        sample_interval: map.chirp_duration,
    })
}

/// Short-time Fourier transform with a Blackman window, producing a
/// centered Doppler-time map.
///
/// Each length-`window_length` segment (hop = `window_length - overlap`) is
/// tapered, zero-padded to `fft_length` (= [`DOPPLER_BINS`]) and
/// transformed; rows are then rotated so null Doppler sits at row 64.
pub fn stft(
    signal: &ComplexSeries,
    window_length: usize,
    overlap: usize,
    fft_length: usize,
) -> Result<DopplerTimeMap, DspError> {
    if fft_length != DOPPLER_BINS {
        return Err(DspError::Parameter(format!(
            "fft_length must equal {DOPPLER_BINS}, got {fft_length}"
        )));
    }
    if window_length < 2 || window_length > fft_length {
        return Err(DspError::Parameter(format!(
            "window_length {window_length} must lie in [2, {fft_length}]"
        )));
    }
    if overlap >= window_length {
        return Err(DspError::Parameter(format!(
            "overlap {overlap} must be smaller than window length {window_length}"
        )));
    }
    if signal.samples.len() < window_length {
        return Err(DspError::Parameter(format!(
            "signal of {} samples shorter than one window ({window_length})",
            signal.samples.len()
        )));
    }
    let hop = window_length - overlap;
    let columns = (signal.samples.len() - window_length) / hop + 1;
    let window = blackman_window(window_length)?;

    let mut spectra = vec![C64::new(0.0, 0.0); DOPPLER_BINS * columns];
    let mut segment = vec![C64::new(0.0, 0.0); fft_length];
    for col in 0..columns {
        let start = col * hop;
        for (i, s) in segment.iter_mut().enumerate() {
            *s = if i < window_length {
                signal.samples[start + i] * window[i]
            } else {
                C64::new(0.0, 0.0)
            };
        }
        let spectrum = dft(&segment);
        // centered ordering: row r holds DFT bin (r + 64) mod 128
        for (r, cell) in spectra
            .iter_mut()
            .skip(col)
            .step_by(columns)
            .enumerate()
            .take(DOPPLER_BINS)
        {
            *cell = spectrum[(r + NULL_DOPPLER_ROW) % DOPPLER_BINS];
        }
    }
    DopplerTimeMap::new(columns, hop as f64 * signal.sample_interval, true, spectra)
}

/// Per-row linear interpolation onto `target_columns` uniformly spaced
/// positions spanning the original extent.
pub fn resample_time(map: &DopplerTimeMap, target_columns: usize) -> Result<DopplerTimeMap, DspError> {
    if map.columns < 2 {
        return Err(DspError::Parameter(String::from(
            "resample_time needs a source with at least 2 columns",
        )));
    }
    if target_columns < 2 {
        return Err(DspError::Parameter(format!(
            "target_columns must be >= 2, got {target_columns}"
        )));
    }
    let src = map.columns;
    let scale = (src - 1) as f64 / (target_columns - 1) as f64;
    let mut spectra = vec![C64::new(0.0, 0.0); DOPPLER_BINS * target_columns];
    for r in 0..DOPPLER_BINS {
        let row = map.row(r);
        let out = &mut spectra[r * target_columns..(r + 1) * target_columns];
        for (j, cell) in out.iter_mut().enumerate() {
            let pos = j as f64 * scale;
            let i0 = math::floor(pos) as usize;
            let i0 = i0.min(src - 1);
            let frac = pos - i0 as f64;
            *cell = if frac == 0.0 || i0 + 1 >= src {
                row[i0]
            } else {
                row[i0] * (1.0 - frac) + row[i0 + 1] * frac
            };
        }
    }
    DopplerTimeMap::new(
        target_columns,
        map.column_interval * scale,
        map.centered,
        spectra,
    )
}

/// Magnitude of the per-row DFT along time. Requires a 128-column map.
pub fn cvd_transform(map: &DopplerTimeMap) -> Result<CvdMap, DspError> {
    if map.columns != DOPPLER_BINS {
        return Err(DspError::Parameter(format!(
            "cvd_transform requires exactly {DOPPLER_BINS} columns, got {}",
            map.columns
        )));
    }
    let mut magnitudes = vec![0.0f64; DOPPLER_BINS * DOPPLER_BINS];
    for r in 0..DOPPLER_BINS {
        let spectrum = dft(map.row(r));
        let out = &mut magnitudes[r * DOPPLER_BINS..(r + 1) * DOPPLER_BINS];
        for (m, z) in out.iter_mut().zip(spectrum.iter()) {
            *m = z.norm();
        }
    }
    Ok(CvdMap { magnitudes })
}

/// Rotate Doppler rows circularly; positive shifts move energy toward
/// higher Doppler. Total in the shift value (modular).
pub fn circular_doppler_shift(map: &DopplerTimeMap, shift: i32) -> DopplerTimeMap {
    let n = DOPPLER_BINS as i32;
    let s = shift.rem_euclid(n) as usize;
    let mut spectra = vec![C64::new(0.0, 0.0); map.spectra.len()];
    for r in 0..DOPPLER_BINS {
        let src = (r + DOPPLER_BINS - s) % DOPPLER_BINS;
        spectra[r * map.columns..(r + 1) * map.columns].copy_from_slice(map.row(src));
    }
    DopplerTimeMap {
        columns: map.columns,
        column_interval: map.column_interval,
        centered: map.centered,
        spectra,
    }
}

/// Rotate columns circularly in time; positive shifts move content toward
/// later columns. Used for cadence-diagram invariance checks.
pub fn circular_time_shift(map: &DopplerTimeMap, shift: i32) -> DopplerTimeMap {
    let n = map.columns as i32;
    let s = shift.rem_euclid(n) as usize;
    let mut spectra = vec![C64::new(0.0, 0.0); map.spectra.len()];
    for r in 0..DOPPLER_BINS {
        let row = map.row(r);
        let out = &mut spectra[r * map.columns..(r + 1) * map.columns];
        for (c, cell) in out.iter_mut().enumerate() {
            *cell = row[(c + map.columns - s) % map.columns];
        }
    }
    DopplerTimeMap {
        columns: map.columns,
        column_interval: map.column_interval,
        centered: map.centered,
        spectra,
    }
}

/// Extract columns `[offset, offset + 128)`.
pub fn temporal_crop(map: &DopplerTimeMap, offset: usize) -> Result<DopplerTimeMap, DspError> {
    if offset + DOPPLER_BINS > map.columns {
        return Err(DspError::Parameter(format!(
            "crop offset {offset} out of range for {} columns",
            map.columns
        )));
    }
    let mut spectra = vec![C64::new(0.0, 0.0); DOPPLER_BINS * DOPPLER_BINS];
    for r in 0..DOPPLER_BINS {
        let row = map.row(r);
        spectra[r * DOPPLER_BINS..(r + 1) * DOPPLER_BINS]
            .copy_from_slice(&row[offset..offset + DOPPLER_BINS]);
    }
    DopplerTimeMap::new(DOPPLER_BINS, map.column_interval, map.centered, spectra)
}

/// Scale factor used by the network-input conversion: the reciprocal of the
/// largest complex magnitude over the whole sample (1.0 for an all-zero
/// map), applied before the real/imaginary channel split.
pub fn normalization_scale(map: &DopplerTimeMap) -> f64 {
    let mut max = 0.0f64;
    for z in &map.spectra {
        let m = math::hypot(z.re, z.im);
        if m > max {
            max = m;
        }
    }
    if max > 0.0 {
        1.0 / max
    } else {
        1.0
    }
}

/// Convert a 128x128 Doppler-time map into a `[2,128,128]` tensor: channel
/// 0 real, channel 1 imaginary, both scaled by [`normalization_scale`].
pub fn to_network_input(map: &DopplerTimeMap) -> Result<Tensor, DspError> {
    if map.columns != DOPPLER_BINS {
        return Err(DspError::Parameter(format!(
            "network input requires a {DOPPLER_BINS}-column map, got {}",
            map.columns
        )));
    }
    let n = DOPPLER_BINS * DOPPLER_BINS;
    let scale = normalization_scale(map);
    let mut values = vec![0.0f64; 2 * n];
    for (i, z) in map.spectra.iter().enumerate() {
        values[i] = z.re * scale;
        values[n + i] = z.im * scale;
    }
    Ok(Tensor::from_vec(&[2, DOPPLER_BINS, DOPPLER_BINS], values).expect("sized above"))
}

/// Convert a CVD map into a `[1,128,128]` tensor scaled by the reciprocal of
/// its maximum magnitude.
pub fn to_network_input_cvd(map: &CvdMap) -> Result<Tensor, DspError> {
    let n = DOPPLER_BINS * DOPPLER_BINS;
    if map.magnitudes.len() != n {
        return Err(DspError::Parameter(format!(
            "cvd map must hold {n} values, got {}",
            map.magnitudes.len()
        )));
    }
    let max = map.magnitudes.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    let values: Vec<f64> = map.magnitudes.iter().map(|&m| m * scale).collect();
    Ok(Tensor::from_vec(&[1, DOPPLER_BINS, DOPPLER_BINS], values).expect("sized above"))
}

/// Add zero-mean Gaussian noise sized so that
/// `10 log10(signal_power / noise_power) = snr_db`, where the signal power
/// is the mean squared entry over all channels. `snr_db = +inf` is the
/// no-noise sentinel. Deterministic per seed.
pub fn add_noise_snr(input: &Tensor, snr_db: f64, seed: u64) -> Result<Tensor, DspError> {
    if snr_db == f64::INFINITY {
        return Ok(input.clone());
    }
    let n = input.numel();
    let signal_power = input.values().iter().map(|v| v * v).sum::<f64>() / n as f64;
    if signal_power == 0.0 {
        return Err(DspError::DegenerateInput(String::from(
            "add_noise_snr on an all-zero input",
        )));
    }
    let noise_power = signal_power / math::powf(10.0, snr_db / 10.0);
    let sigma = math::sqrt(noise_power);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = input.clone();
    for v in out.values_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(samples: Vec<C64>) -> ComplexSeries {
        ComplexSeries {
            samples,
            sample_interval: 1e-3,
        }
    }

    #[test]
    fn blackman_endpoint_and_center_identities() {
        let w = blackman_window(64).unwrap();
        assert!(w[0].abs() < 1e-15, "w[0] = {}", w[0]);
        let w65 = blackman_window(65).unwrap();
        assert!((w65[32] - 1.0).abs() < 1e-12);
        assert!(blackman_window(1).is_err());
    }

    #[test]
    fn dc_chirp_concentrates_in_range_bin_zero() {
        let raw = RawRecording {
            samples_per_chirp: 8,
            chirps: 1,
            chirp_duration: 1e-3,
            data: vec![C64::new(1.0, 0.0); 8],
        };
        let map = range_process(&raw).unwrap();
        assert!((map.bins[0].re - 8.0).abs() < 1e-12);
        for b in 1..8 {
            assert!(map.bins[b * map.chirps].norm() < 1e-12, "bin {b} leaked");
        }
    }

    #[test]
    fn pure_tone_peaks_at_matching_range_bin() {
        let n = 16usize;
        let data: Vec<C64> = (0..n)
            .map(|s| {
                let ang = 2.0 * math::PI * 3.0 * s as f64 / n as f64;
                C64::new(math::cos(ang), math::sin(ang))
            })
            .collect();
        let raw = RawRecording {
            samples_per_chirp: n,
            chirps: 1,
            chirp_duration: 1e-3,
            data,
        };
        let map = range_process(&raw).unwrap();
        let peak = (0..n)
            .max_by(|&a, &b| {
                map.bins[a].norm().partial_cmp(&map.bins[b].norm()).unwrap()
            })
            .unwrap();
        assert_eq!(peak, 3);
    }

    #[test]
    fn integrate_single_bin_returns_that_row() {
        let raw = RawRecording {
            samples_per_chirp: 4,
            chirps: 3,
            chirp_duration: 2e-3,
            data: (0..12).map(|i| C64::new(i as f64, -(i as f64))).collect(),
        };
        let map = range_process(&raw).unwrap();
        let s = integrate_range_bins(&map, Some((2, 2))).unwrap();
        assert_eq!(s.samples.len(), 3);
        assert_eq!(s.sample_interval, 2e-3);
        for c in 0..3 {
            assert_eq!(s.samples[c], map.bins[2 * 3 + c]);
        }
    }

    #[test]
    fn integrate_cancellation() {
        let z = C64::new(0.3, -0.7);
        let map = RangeTimeMap {
            range_bins: 2,
            chirps: 2,
            chirp_duration: 1e-3,
            bins: vec![z, z, -z, -z],
        };
        let s = integrate_range_bins(&map, None).unwrap();
        assert!(s.samples.iter().all(|v| v.norm() < 1e-15));
        assert!(integrate_range_bins(&map, Some((1, 0))).is_err());
    }

    #[test]
    fn stft_column_count_and_zero_signal() {
        let sig = series(vec![C64::new(0.0, 0.0); 200]);
        let map = stft(&sig, STFT_WINDOW, STFT_OVERLAP, DOPPLER_BINS).unwrap();
        assert_eq!(map.columns, (200 - 64) / 16 + 1);
        assert!(map.spectra.iter().all(|z| z.norm() == 0.0));
        assert!(map.centered);
    }

    #[test]
    fn stft_quarter_cycle_tone_lands_on_row_96() {
        let samples: Vec<C64> = (0..256)
            .map(|n| {
                let ang = 2.0 * math::PI * 0.25 * n as f64;
                C64::new(math::cos(ang), math::sin(ang))
            })
            .collect();
        let map = stft(&series(samples), STFT_WINDOW, STFT_OVERLAP, DOPPLER_BINS).unwrap();
        assert_eq!(map.dominant_row(), 96);
    }

    #[test]
    fn stft_rejects_short_signal() {
        let sig = series(vec![C64::new(1.0, 0.0); 32]);
        assert!(stft(&sig, STFT_WINDOW, STFT_OVERLAP, DOPPLER_BINS).is_err());
    }

    #[test]
    fn resample_identity_and_midpoint() {
        let spectra: Vec<C64> = (0..DOPPLER_BINS * 5)
            .map(|i| C64::new(i as f64, -0.5 * i as f64))
            .collect();
        let map = DopplerTimeMap::new(5, 1.0, true, spectra).unwrap();
        let same = resample_time(&map, 5).unwrap();
        assert_eq!(same.spectra, map.spectra);

        let two = DopplerTimeMap::new(
            2,
            1.0,
            true,
            (0..DOPPLER_BINS * 2)
                .map(|i| C64::new(i as f64, 0.0))
                .collect(),
        )
        .unwrap();
        let three = resample_time(&two, 3).unwrap();
        for r in 0..DOPPLER_BINS {
            let mid = (two.at(r, 0) + two.at(r, 1)) * 0.5;
            assert!((three.at(r, 1) - mid).norm() < 1e-12);
        }
    }

    #[test]
    fn doppler_shift_roundtrip_and_full_rotation() {
        let spectra: Vec<C64> = (0..DOPPLER_BINS * 3).map(|i| C64::new(i as f64, 0.0)).collect();
        let map = DopplerTimeMap::new(3, 1.0, true, spectra).unwrap();
        assert_eq!(circular_doppler_shift(&map, 0), map);
        assert_eq!(circular_doppler_shift(&map, 128), map);
        let back = circular_doppler_shift(&circular_doppler_shift(&map, 3), -3);
        assert_eq!(back, map);
        // positive shift moves row r to row r+s
        let shifted = circular_doppler_shift(&map, 5);
        assert_eq!(shifted.row(5), map.row(0));
    }

    #[test]
    fn temporal_crop_slices_columns() {
        let cols = 148usize;
        let spectra: Vec<C64> = (0..DOPPLER_BINS * cols)
            .map(|i| C64::new(i as f64, 1.0))
            .collect();
        let map = DopplerTimeMap::new(cols, 1.0, true, spectra).unwrap();
        let c0 = temporal_crop(&map, 0).unwrap();
        let c20 = temporal_crop(&map, 20).unwrap();
        for r in 0..DOPPLER_BINS {
            for c in 0..DOPPLER_BINS {
                assert_eq!(c0.at(r, c), map.at(r, c));
                assert_eq!(c20.at(r, c), map.at(r, c + 20));
            }
        }
        assert!(temporal_crop(&map, 21).is_err());
    }

    #[test]
    fn cvd_dc_row_and_wrong_width() {
        let c = C64::new(0.25, -0.5);
        let mut spectra = vec![C64::new(0.0, 0.0); DOPPLER_BINS * DOPPLER_BINS];
        for cell in spectra[10 * DOPPLER_BINS..11 * DOPPLER_BINS].iter_mut() {
            *cell = c;
        }
        let map = DopplerTimeMap::new(DOPPLER_BINS, 1.0, true, spectra).unwrap();
        let cvd = cvd_transform(&map).unwrap();
        assert!((cvd.at(10, 0) - 128.0 * c.norm()).abs() < 1e-9);
        for k in 1..DOPPLER_BINS {
            assert!(cvd.at(10, k) < 1e-9);
        }
        let small = resample_time(&map, 64).unwrap();
        assert!(cvd_transform(&small).is_err());
    }

    #[test]
    fn cvd_is_invariant_to_circular_time_shift() {
        let mut spectra = vec![C64::new(0.0, 0.0); DOPPLER_BINS * DOPPLER_BINS];
        for (i, cell) in spectra.iter_mut().enumerate() {
            let x = i as f64;
            *cell = C64::new(math::sin(0.01 * x), math::cos(0.037 * x));
        }
        let map = DopplerTimeMap::new(DOPPLER_BINS, 1.0, true, spectra).unwrap();
        let base = cvd_transform(&map).unwrap();
        for shift in [1, 17, 64, 127] {
            let shifted = cvd_transform(&circular_time_shift(&map, shift)).unwrap();
            let max_dev = base
                .magnitudes
                .iter()
                .zip(shifted.magnitudes.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_dev < 1e-9, "shift {shift}: deviation {max_dev}");
        }
    }

    #[test]
    fn network_input_splits_channels() {
        let spectra: Vec<C64> = (0..DOPPLER_BINS * DOPPLER_BINS)
            .map(|i| C64::new((i % 7) as f64, 0.0))
            .collect();
        let map = DopplerTimeMap::new(DOPPLER_BINS, 1.0, true, spectra).unwrap();
        let t = to_network_input(&map).unwrap();
        assert_eq!(t.shape(), &[2, DOPPLER_BINS, DOPPLER_BINS]);
        let n = DOPPLER_BINS * DOPPLER_BINS;
        assert!(t.values()[n..].iter().all(|&v| v == 0.0));
        // max-abs normalization puts the largest magnitude at 1
        let max = t.values()[..n].iter().cloned().fold(0.0f64, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_is_deterministic_and_infinity_is_identity() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let a = add_noise_snr(&t, 0.0, 99).unwrap();
        let b = add_noise_snr(&t, 0.0, 99).unwrap();
        assert_eq!(a, b);
        let c = add_noise_snr(&t, f64::INFINITY, 99).unwrap();
        assert_eq!(c, t);
        let zero = Tensor::zeros(&[4]);
        assert!(add_noise_snr(&zero, 0.0, 1).is_err());
    }

    #[test]
    fn realized_snr_close_to_target_at_scale()
    {
        let n = 2 * DOPPLER_BINS * DOPPLER_BINS;
        let vals: Vec<f64> = (0..n).map(|i| math::sin(0.01 * i as f64) + 0.3).collect();
        let t = Tensor::from_vec(&[2, DOPPLER_BINS, DOPPLER_BINS], vals).unwrap();
        let noisy = add_noise_snr(&t, 0.0, 7).unwrap();
        let sig_p = t.values().iter().map(|v| v * v).sum::<f64>() / n as f64;
        let noise_p = t
            .values()
            .iter()
            .zip(noisy.values())
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            / n as f64;
        let realized = 10.0 * math::log10(sig_p / noise_p);
        assert!(realized.abs() < 0.1, "realized SNR {realized} dB");
    }
}
