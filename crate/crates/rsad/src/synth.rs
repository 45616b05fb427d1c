//! Synthetic activation geometry with planted non-robust directions.
//!
//! The generator builds the cartoon the detector is designed around: K class
//! clusters, isotropic Gaussian noise, and adversarial versions of clean
//! points made by dragging a small subset of "non-robust" coordinates
//! toward a wrong class center while leaving every robust coordinate
//! untouched. In the full space the perturbed point still classifies
//! plausibly; in a random subspace the dragged coordinates are sometimes
//! sampled and sometimes not, which is exactly the inconsistency the
//! detector measures.
//!
//! Everything is a pure function of the config, including its seed: the same
//! [`SyntheticConfig`] always yields byte-identical activation sets.

use crate::activation::{ActivationRecord, ActivationSet, TruthFlag};
use crate::error::{Error, Result};
use crate::rng::{derive_key, stream_index, stream_normal};

/// Layer id stamped on generated activation sets.
pub const SYNTH_LAYER_ID: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    /// Number of classes K (≥ 2).
    pub class_count: u32,
    /// Ambient dimension d (≥ class_count, so the axis construction fits).
    pub dim: usize,
    /// Clean samples generated per class, for calibration and test alike.
    pub n_per_class: usize,
    /// Distance of each class center from the origin along its own axis.
    pub center_scale: f64,
    /// Isotropic noise level σ (0 collapses each class onto its center).
    pub noise_sigma: f64,
    /// Interpolation strength t ∈ (0, 1] toward the wrong center.
    pub shift_fraction: f64,
    /// Fraction of coordinates treated as non-robust, ceil'd to a count ≥ 1.
    pub nonrobust_fraction: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.class_count
            )));
        }
        if self.dim < self.class_count as usize {
            return Err(Error::InvalidConfig(format!(
                "dim {} cannot place {} axis-aligned centers",
                self.dim, self.class_count
            )));
        }
        if self.n_per_class == 0 {
            return Err(Error::InvalidConfig("n_per_class must be positive".into()));
        }
        if self.center_scale <= 0.0 || !self.center_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "center_scale must be positive and finite, got {}",
                self.center_scale
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be nonnegative and finite, got {}",
                self.noise_sigma
            )));
        }
        if !(self.shift_fraction > 0.0 && self.shift_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "shift_fraction must lie in (0, 1], got {}",
                self.shift_fraction
            )));
        }
        if !(self.nonrobust_fraction > 0.0 && self.nonrobust_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "nonrobust_fraction must lie in (0, 1], got {}",
                self.nonrobust_fraction
            )));
        }
        Ok(())
    }

    /// Number of leading coordinates the attack is allowed to move.
    pub fn nonrobust_count(&self) -> usize {
        ((self.nonrobust_fraction * self.dim as f64).ceil() as usize).clamp(1, self.dim)
    }

    /// Class centers: `centers[c] = center_scale · e_c` (pairwise distance
    /// `center_scale · √2`).
    pub fn class_centers(&self) -> Vec<Vec<f64>> {
        (0..self.class_count as usize)
            .map(|c| {
                let mut center = vec![0.0; self.dim];
                center[c] = self.center_scale;
                center
            })
            .collect()
    }
}

/// Recover the clean partner id of a generated adversarial id
/// (`adv-…` ↔ `tst-…`); `None` for ids this generator didn't produce.
pub fn paired_clean_id(adversarial_id: &str) -> Option<String> {
    adversarial_id
        .strip_prefix("adv-")
        .map(|suffix| format!("tst-{suffix}"))
}

/// Generate `(calibration, test)` activation sets.
///
/// Calibration holds `n_per_class` clean labeled samples per class
/// (ids `cal-c<c>-n<i>`). The test set holds, per class and index, a clean
/// sample (`tst-c<c>-n<i>`, truth clean) immediately followed by its
/// adversarial twin (`adv-c<c>-n<i>`, truth adversarial): the same vector
/// with the leading [`nonrobust_count`](SyntheticConfig::nonrobust_count)
/// coordinates moved fraction `t` of the way toward a uniformly drawn wrong
/// class center, and every remaining coordinate bit-identical to the clean
/// twin.
pub fn generate(config: &SyntheticConfig) -> Result<(ActivationSet, ActivationSet)> {
    config.validate()?;
    let d = config.dim;
    let centers = config.class_centers();
    let moved = config.nonrobust_count();

    let mut calibration = ActivationSet::new(SYNTH_LAYER_ID, config.class_count, d);
    let mut test = ActivationSet::new(SYNTH_LAYER_ID, config.class_count, d);

    for class in 0..config.class_count {
        let cal_key = derive_key(config.seed, "cal", u64::from(class));
        let test_key = derive_key(config.seed, "test", u64::from(class));
        let wrong_key = derive_key(config.seed, "wrong", u64::from(class));
        let center = &centers[class as usize];

        for i in 0..config.n_per_class {
            calibration.records.push(ActivationRecord {
                sample_id: format!("cal-c{class:02}-n{i:05}"),
                class_label: Some(class),
                truth: TruthFlag::Clean,
                vector: noisy_point(center, config.noise_sigma, cal_key, i, d),
            });
        }

        for i in 0..config.n_per_class {
            let clean = noisy_point(center, config.noise_sigma, test_key, i, d);

            // Uniform wrong class: draw from the K−1 others.
            let draw = stream_index(
                wrong_key,
                i as u64,
                u64::from(config.class_count) - 1,
            ) as u32;
            let wrong = if draw >= class { draw + 1 } else { draw };
            let wrong_center = &centers[wrong as usize];

            // Non-robust coordinates interpolate toward the wrong center;
            // robust coordinates are copied bit for bit, so subtracting the
            // twin recovers exactly which coordinates moved.
            let mut adversarial = clean.clone();
            for (j, value) in adversarial.iter_mut().enumerate().take(moved) {
                let x = f64::from(*value);
                *value = (x + config.shift_fraction * (wrong_center[j] - x)) as f32;
            }

            test.records.push(ActivationRecord {
                sample_id: format!("tst-c{class:02}-n{i:05}"),
                class_label: Some(class),
                truth: TruthFlag::Clean,
                vector: clean,
            });
            test.records.push(ActivationRecord {
                sample_id: format!("adv-c{class:02}-n{i:05}"),
                class_label: Some(class),
                truth: TruthFlag::Adversarial,
                vector: adversarial,
            });
        }
    }

    Ok((calibration, test))
}

fn noisy_point(center: &[f64], sigma: f64, key: u64, sample: usize, d: usize) -> Vec<f32> {
    (0..d)
        .map(|j| {
            let noise = if sigma == 0.0 {
                0.0
            } else {
                sigma * stream_normal(key, (sample * d + j) as u64)
            };
            (center[j] + noise) as f32
        })
        .collect()
}
