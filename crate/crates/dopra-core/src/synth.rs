//! Point-scatterer micro-Doppler simulator.
//!
//! Each class is a small set of scatterers with a bulk velocity and a
//! sinusoidal micro-motion, wrapped in a smooth activity envelope:
//!
//! ```text
//! s(t) = sum_i A_i * exp(j * (4π/λ) * r_i(t)) * env(t)
//! r_i(t) = v_i * t + B_i * sin(2π f_i t + φ_i)
//! ```
//!
//! A scatterer moving at `v` lands on Doppler frequency `2v/λ`; the
//! oscillation rate `f_i` shows up on the cadence axis of the CVD. Per-sample
//! parameter jitter is deterministic in the seed.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{ComplexSeries, C64};
use crate::math;

/// Minimum chirps for a map that supports 20 temporal shift steps.
pub const MIN_CHIRPS: usize = 64 + 20 * 16;

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    Parameter(String),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::Parameter(m) => write!(f, "parameter error: {m}"),
        }
    }
}

impl core::error::Error for SynthError {}

/// One reflecting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Reflection amplitude; > 0.
    pub amplitude: f64,
    /// Bulk radial velocity in m/s (positive = away from the radar).
    pub velocity: f64,
    /// Oscillation amplitude in metres; >= 0.
    pub osc_amplitude: f64,
    /// Oscillation rate in Hz; >= 0.
    pub osc_rate: f64,
    /// Oscillation phase in radians.
    pub phase: f64,
}

/// Activity envelope: flat top over `[onset, onset + duration]` with 10 %
/// raised-cosine edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub onset: f64,
    pub duration: f64,
}

/// Per-parameter jitter applied to each generated sample. All entries are
/// relative standard deviations except `phase`, which is absolute (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub amplitude: f64,
    pub velocity: f64,
    pub osc_amplitude: f64,
    pub osc_rate: f64,
    pub phase: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            amplitude: 0.0,
            velocity: 0.0,
            osc_amplitude: 0.0,
            osc_rate: 0.0,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassSpec {
    pub class_id: usize,
    pub name: String,
    pub scatterers: Vec<Scatterer>,
    pub envelope: Envelope,
    #[serde(default)]
    pub jitter: Jitter,
}

/// Radar geometry shared by all synthetic classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    /// Carrier wavelength in metres.
    pub carrier_wavelength: f64,
    /// Chirp (slow-time sample) duration in seconds.
    pub chirp_duration: f64,
    /// Number of chirps per recording.
    pub n_chirps: usize,
}

impl Default for RadarParams {
    fn default() -> Self {
        // 5.8 GHz C-band carrier, 1 ms chirps
        RadarParams {
            carrier_wavelength: 0.0517,
            chirp_duration: 1e-3,
            n_chirps: 2432,
        }
    }
}

impl RadarParams {
    /// Centered Doppler bin for a scatterer at `velocity` m/s on a
    /// 128-bin map: `round(2 v / λ · chirp_duration · 128)` away from row 64.
    pub fn doppler_bin_offset(&self, velocity: f64) -> i32 {
        let f_d = 2.0 * velocity / self.carrier_wavelength;
        math::round(f_d * self.chirp_duration * crate::dsp::DOPPLER_BINS as f64) as i32
    }
}

fn validate(spec: &SyntheticClassSpec) -> Result<(), SynthError> {
    if spec.scatterers.is_empty() {
        return Err(SynthError::Parameter(format!(
            "class {} has no scatterers",
            spec.class_id
        )));
    }
    for s in &spec.scatterers {
        if s.amplitude <= 0.0 {
            return Err(SynthError::Parameter(format!(
                "class {}: scatterer amplitude must be > 0",
                spec.class_id
            )));
        }
        if s.osc_rate < 0.0 || s.osc_amplitude < 0.0 {
            return Err(SynthError::Parameter(format!(
                "class {}: oscillation parameters must be >= 0",
                spec.class_id
            )));
        }
    }
    if spec.envelope.duration <= 0.0 {
        return Err(SynthError::Parameter(format!(
            "class {}: envelope duration must be > 0",
            spec.class_id
        )));
    }
    Ok(())
}

fn envelope_at(env: &Envelope, t: f64) -> f64 {
    let taper = 0.1 * env.duration;
    let start = env.onset;
    let end = env.onset + env.duration;
    if t < start || t > end {
        0.0
    } else if t < start + taper {
        0.5 * (1.0 - math::cos(math::PI * (t - start) / taper))
    } else if t > end - taper {
        0.5 * (1.0 - math::cos(math::PI * (end - t) / taper))
    } else {
        1.0
    }
}

/// Generate one slow-time recording for a class. Jitter draws are a fixed
/// count per scatterer, so outputs are deterministic in `seed`.
pub fn synth_generate(
    spec: &SyntheticClassSpec,
    radar: &RadarParams,
    seed: u64,
) -> Result<ComplexSeries, SynthError> {
    validate(spec)?;
    if radar.n_chirps < MIN_CHIRPS {
        return Err(SynthError::Parameter(format!(
            "n_chirps {} too short; need at least {MIN_CHIRPS} for a 148-column map",
            radar.n_chirps
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draw = |rel: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        rel * z
    };
    let jittered: Vec<Scatterer> = spec
        .scatterers
        .iter()
        .map(|s| Scatterer {
            amplitude: s.amplitude * (1.0 + draw(spec.jitter.amplitude)).max(0.05),
            velocity: s.velocity * (1.0 + draw(spec.jitter.velocity)),
            osc_amplitude: (s.osc_amplitude * (1.0 + draw(spec.jitter.osc_amplitude))).max(0.0),
            osc_rate: (s.osc_rate * (1.0 + draw(spec.jitter.osc_rate))).max(0.0),
            phase: s.phase + draw(1.0) * spec.jitter.phase,
        })
        .collect();

    let phase_scale = 4.0 * math::PI / radar.carrier_wavelength;
    let samples: Vec<C64> = (0..radar.n_chirps)
        .map(|n| {
            let t = n as f64 * radar.chirp_duration;
            let env = envelope_at(&spec.envelope, t);
            if env == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let mut acc = C64::new(0.0, 0.0);
            for s in &jittered {
                let r = s.velocity * t
                    + s.osc_amplitude * math::sin(2.0 * math::PI * s.osc_rate * t + s.phase);
                let ang = phase_scale * r;
                acc += Complex::new(s.amplitude * math::cos(ang), s.amplitude * math::sin(ang));
            }
            acc * env
        })
        .collect();

    Ok(ComplexSeries {
        samples,
        sample_interval: radar.chirp_duration,
    })
}
