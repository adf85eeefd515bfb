//! Core toolkit for studying the robustness of deep micro-Doppler radar
//! classifiers.
//!
//! The crate covers the full experiment chain in pure `f64` arithmetic:
//!
//! ```text
//! raw chirps ─► range profile ─► slow-time series ─► STFT ─► Doppler-time map
//!                                                              │
//!                     ┌────────────────────────────────────────┤
//!                     ▼                                        ▼
//!              temporal crops / Doppler shifts          CVD (|DFT| over time)
//!                     │                                        │
//!                     └──────────────► network input ◄─────────┘
//!                                          │
//!                      CNN classifiers (tape autodiff) + Adam
//!                                          │
//!              PGD attacks · shift sweeps · transfer · variance tables
//! ```
//!
//! Everything here is `no_std`-compatible (`alloc` required). File formats,
//! dataset ingestion and the command-line driver live in the companion
//! `dopra` crate. The default `std` feature enables rayon-backed parallel
//! loops; results are bit-identical with or without it because all
//! reductions happen in a fixed order.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adversary;
pub mod autodiff;
pub mod dataset;
pub mod dsp;
pub mod eval;
pub mod math;
pub mod models;
pub mod optim;
pub mod par;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod training;

pub use adversary::{AdversarialSet, AttackConfig};
pub use autodiff::{Tape, Var};
pub use dataset::{Dataset, LabeledSample, Representation, SplitIndices, SplitSpec};
pub use dsp::{ComplexSeries, CvdMap, DopplerTimeMap, RangeTimeMap, DOPPLER_BINS};
pub use models::{Architecture, Classifier, ModelConfig};
pub use optim::AdamState;
pub use tensor::Tensor;
pub use training::{TrainConfig, TrainResult, TrainingScheme};

/// Number of classes in the activity-recognition study.
pub const N_CLASSES: usize = 6;
