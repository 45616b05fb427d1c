//! Attack-agnostic adversarial-example detection by random subspace analysis
//! of network activations.
//!
//! A classifier's clean inputs produce activations that sit comfortably
//! inside their class's region: project them into almost any random
//! low-dimensional subspace and their nearest class prototype stays the
//! same. Adversarial inputs reach their predicted class through a few
//! fragile, non-robust directions; a random subspace sometimes retains those
//! directions and sometimes doesn't, so the nearest-prototype label flickers
//! across an ensemble of projections. This crate measures that flicker and
//! turns it into a detector that needs no knowledge of the attack: fit class
//! prototypes on clean activations, project everything through M seeded
//! Gaussian matrices, and flag samples whose ensemble agreement falls below
//! a threshold.
//!
//! ```
//! use rsad::detector::Detector;
//! use rsad::metrics::{auc, LabeledScore};
//! use rsad::prototype::Metric;
//! use rsad::synth::{generate, SyntheticConfig};
//! use rsad::activation::TruthFlag;
//!
//! // A small synthetic problem: 3 classes, a few non-robust coordinates.
//! let config = SyntheticConfig {
//!     class_count: 3,
//!     dim: 32,
//!     n_per_class: 50,
//!     center_scale: 10.0,
//!     noise_sigma: 1.0,
//!     shift_fraction: 0.6,
//!     nonrobust_fraction: 0.25,
//!     seed: 7,
//! };
//! let (calibration, test) = generate(&config)?;
//!
//! // Calibrate on clean activations, then score the mixed test set.
//! let detector = Detector::calibrate(&calibration, 8, 16, 7, Metric::Euclidean, 0.5)?;
//! let results = detector.score_batch(std::slice::from_ref(&test))?;
//!
//! // Rank clean vs adversarial by the ensemble-disagreement score.
//! let scores: Vec<LabeledScore> = results
//!     .iter()
//!     .zip(&test.records)
//!     .map(|(r, rec)| LabeledScore {
//!         sample_id: r.sample_id.clone(),
//!         score: r.adversarial_score,
//!         is_adversarial: rec.truth == TruthFlag::Adversarial,
//!     })
//!     .collect();
//! assert!(auc(&scores)? > 0.8);
//! # Ok::<(), rsad::Error>(())
//! ```
//!
//! The crate is deliberately free of global state and ambient randomness:
//! every random quantity derives from explicit seeds through counter-based
//! streams ([`rng`]), so calibration, scoring, and file round-trips are
//! bit-reproducible across runs, platforms, and thread counts.

pub mod activation;
pub mod baselines;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod projection;
pub mod prototype;
pub mod rng;
pub mod storage;
pub mod synth;

pub use activation::{ActivationRecord, ActivationSet, TruthFlag};
pub use detector::{DetectionResult, Detector};
pub use error::{Error, Result};
pub use prototype::Metric;
