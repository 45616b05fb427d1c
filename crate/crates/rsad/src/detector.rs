//! The subspace-consistency detector.
//!
//! The idea: a clean activation lands well inside its class region, so its
//! nearest prototype survives almost any random k-dimensional projection. An
//! adversarial activation sits near a decision boundary along a few fragile
//! directions; random subspaces keep or discard those directions by chance,
//! so its nearest-prototype label flickers across the ensemble. We score a
//! sample by how often the ensemble agrees with its own majority:
//!
//! ```text
//! consistency(z) = max_c |{m : label_m(z) = c}| / M_total
//! verdict(z)     = consistency(z) < alpha
//! ```
//!
//! `alpha = 0` never flags anything (no consistency is below zero);
//! `alpha = 1` flags everything short of a unanimous ensemble.

use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::activation::ActivationSet;
use crate::error::{Error, Result};
use crate::projection::{project, sample_ensemble, ProjectionEnsemble};
use crate::prototype::{distance, fit_prototypes, Metric, PrototypeSet};

/// Nearest-prototype labels observed across one layer's ensemble, in matrix
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NearestLabelSet {
    pub layer_id: String,
    pub labels: Vec<u32>,
}

/// Outcome of scoring one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub sample_id: String,
    /// Fraction of subspace votes agreeing with the majority label; in
    /// `(0, 1]` and always an integer multiple of `1/labels.len()`.
    pub consistency: f64,
    /// `1 − consistency`: higher means more adversarial.
    pub adversarial_score: f64,
    /// `true` when the sample is flagged adversarial.
    pub verdict: bool,
    /// The threshold the verdict was taken at.
    pub alpha: f64,
    /// The raw per-subspace labels, concatenated across layers.
    pub labels: Vec<u32>,
}

/// Classify `z` in every subspace of one layer's ensemble.
///
/// For each matrix the sample and all prototypes are projected and the
/// nearest projected prototype (ties to the smallest class index) casts that
/// subspace's vote.
pub fn random_subspace_analysis(
    z: &[f64],
    prototypes: &PrototypeSet,
    ensemble: &ProjectionEnsemble,
    metric: Metric,
) -> Result<NearestLabelSet> {
    prototypes.validate()?;
    if prototypes.layer_id != ensemble.layer_id() {
        return Err(Error::LayerMismatch {
            expected: prototypes.layer_id.clone(),
            actual: ensemble.layer_id().to_string(),
        });
    }
    if prototypes.dim != ensemble.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: prototypes.dim,
            actual: ensemble.ambient_dim(),
        });
    }

    let mut labels = Vec::with_capacity(ensemble.len());
    for matrix in ensemble.matrices() {
        let z_hat = project(matrix, z)?;
        let mut best: Option<(u32, f64)> = None;
        for (class, proto) in prototypes.prototypes.iter().enumerate() {
            let proto_hat = project(matrix, proto)?;
            let dist = distance(&z_hat, &proto_hat, metric)?;
            match best {
                Some((_, incumbent)) if dist >= incumbent => {}
                _ => best = Some((class as u32, dist)),
            }
        }
        // prototypes.validate() guarantees at least one class.
        labels.push(best.expect("non-empty prototype set").0);
    }
    Ok(NearestLabelSet {
        layer_id: prototypes.layer_id.clone(),
        labels,
    })
}

/// Concatenate per-layer label sets, in the order given, into one multiset.
pub fn aggregate_layers(per_layer: &[NearestLabelSet]) -> Result<Vec<u32>> {
    if per_layer.is_empty() || per_layer.iter().all(|set| set.labels.is_empty()) {
        return Err(Error::EmptyLabelSet);
    }
    Ok(per_layer
        .iter()
        .flat_map(|set| set.labels.iter().copied())
        .collect())
}

/// Fraction of labels agreeing with the mode (mode ties resolve to the
/// smallest label, which cannot change the fraction itself).
pub fn consistency_score(labels: &[u32]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &label in labels {
        *counts.entry(label).or_insert(0) += 1;
    }
    // The mode label itself (ties resolve to the smallest, since BTreeMap
    // iterates ascending) never affects the fraction — only its count does.
    let mode_count = counts.values().copied().max().expect("non-empty counts");
    Ok(mode_count as f64 / labels.len() as f64)
}

/// The decision rule: flag as adversarial iff `consistency < alpha`.
///
/// The inequality is strict, which gives the two endpoints their documented
/// degenerate behavior: `alpha = 0` accepts everything, `alpha = 1` accepts
/// only unanimous ensembles.
pub fn decide(consistency: f64, alpha: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(consistency < alpha)
}

/// Prototypes plus the projection ensemble for one layer.
#[derive(Debug, Clone)]
pub struct DetectorLayer {
    prototypes: PrototypeSet,
    ensemble: ProjectionEnsemble,
}

impl DetectorLayer {
    pub fn new(prototypes: PrototypeSet, ensemble: ProjectionEnsemble) -> Result<Self> {
        prototypes.validate()?;
        if prototypes.layer_id != ensemble.layer_id() {
            return Err(Error::LayerMismatch {
                expected: prototypes.layer_id.clone(),
                actual: ensemble.layer_id().to_string(),
            });
        }
        if prototypes.dim != ensemble.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: prototypes.dim,
                actual: ensemble.ambient_dim(),
            });
        }
        Ok(DetectorLayer {
            prototypes,
            ensemble,
        })
    }

    pub fn prototypes(&self) -> &PrototypeSet {
        &self.prototypes
    }

    pub fn ensemble(&self) -> &ProjectionEnsemble {
        &self.ensemble
    }
}

/// A calibrated detector: per-layer prototypes and ensembles plus the
/// decision configuration.
#[derive(Debug, Clone)]
pub struct Detector {
    metric: Metric,
    alpha: f64,
    layers: Vec<DetectorLayer>,
}

impl Detector {
    /// Assemble a detector from already-fitted layers.
    pub fn from_layers(metric: Metric, alpha: f64, layers: Vec<DetectorLayer>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        if layers.is_empty() {
            return Err(Error::EmptyLabelSet);
        }
        for layer in &layers {
            if layer.prototypes.class_count < 2 {
                return Err(Error::ClassCountTooSmall(layer.prototypes.class_count));
            }
        }
        Ok(Detector {
            metric,
            alpha,
            layers,
        })
    }

    /// Fit prototypes from one layer of clean calibration activations and
    /// sample its projection ensemble.
    pub fn calibrate(
        calibration: &ActivationSet,
        subspace_dim: usize,
        ensemble_size: usize,
        master_seed: u64,
        metric: Metric,
        alpha: f64,
    ) -> Result<Self> {
        let prototypes = fit_prototypes(calibration)?;
        let ensemble = sample_ensemble(
            master_seed,
            &calibration.layer_id,
            ensemble_size,
            subspace_dim,
            calibration.dim,
        )?;
        let layer = DetectorLayer::new(prototypes, ensemble)?;
        Detector::from_layers(metric, alpha, vec![layer])
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn layers(&self) -> &[DetectorLayer] {
        &self.layers
    }

    /// Same detector with a different decision threshold.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Total number of subspace votes a single sample receives.
    pub fn total_votes(&self) -> usize {
        self.layers.iter().map(|l| l.ensemble.len()).sum()
    }

    /// Score one sample given its activation vector at every detector layer,
    /// in detector-layer order.
    pub fn score_sample(&self, sample_id: &str, vectors: &[Vec<f64>]) -> Result<DetectionResult> {
        if vectors.len() != self.layers.len() {
            return Err(Error::MisalignedTestSets(format!(
                "sample '{sample_id}' has {} layer vectors, detector has {} layers",
                vectors.len(),
                self.layers.len()
            )));
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for (layer, z) in self.layers.iter().zip(vectors) {
            per_layer.push(random_subspace_analysis(
                z,
                &layer.prototypes,
                &layer.ensemble,
                self.metric,
            )?);
        }
        let labels = aggregate_layers(&per_layer)?;
        let consistency = consistency_score(&labels)?;
        Ok(DetectionResult {
            sample_id: sample_id.to_string(),
            consistency,
            adversarial_score: 1.0 - consistency,
            verdict: decide(consistency, self.alpha)?,
            alpha: self.alpha,
            labels,
        })
    }

    /// Score a batch: one activation set per detector layer, records aligned
    /// by position with matching sample ids.
    ///
    /// Projected prototypes are computed once per layer and shared; samples
    /// are scored in parallel and collected in input order, so the output is
    /// identical regardless of thread count. An empty batch yields an empty
    /// result.
    pub fn score_batch(&self, test_layers: &[ActivationSet]) -> Result<Vec<DetectionResult>> {
        let matched: Vec<&ActivationSet> = self
            .layers
            .iter()
            .map(|layer| {
                test_layers
                    .iter()
                    .find(|set| set.layer_id == layer.prototypes.layer_id)
                    .ok_or_else(|| Error::MissingTestLayer(layer.prototypes.layer_id.clone()))
            })
            .collect::<Result<_>>()?;

        for (layer, set) in self.layers.iter().zip(&matched) {
            set.validate()?;
            if set.dim != layer.prototypes.dim {
                return Err(Error::DimensionMismatch {
                    expected: layer.prototypes.dim,
                    actual: set.dim,
                });
            }
        }
        let n = matched[0].len();
        for set in &matched[1..] {
            if set.len() != n {
                return Err(Error::MisalignedTestSets(format!(
                    "layer '{}' has {} records, layer '{}' has {}",
                    matched[0].layer_id,
                    n,
                    set.layer_id,
                    set.len()
                )));
            }
        }
        for other in &matched[1..] {
            for (a, b) in matched[0].records.iter().zip(&other.records) {
                if a.sample_id != b.sample_id {
                    return Err(Error::MisalignedTestSets(format!(
                        "record order differs: '{}' vs '{}'",
                        a.sample_id, b.sample_id
                    )));
                }
            }
        }

        // One projection of every prototype per (layer, matrix), shared by
        // all samples: projected[l][m][c] is the class-c prototype under the
        // m-th matrix of layer l. Bit-identical to what the single-sample
        // path computes, because it calls the same `project`.
        let projected: Vec<Vec<Vec<Vec<f64>>>> = self
            .layers
            .iter()
            .map(|layer| {
                layer
                    .ensemble
                    .matrices()
                    .iter()
                    .map(|matrix| {
                        layer
                            .prototypes
                            .prototypes
                            .iter()
                            .map(|proto| project(matrix, proto))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut labels = Vec::with_capacity(self.total_votes());
                for (l, layer) in self.layers.iter().enumerate() {
                    let z = matched[l].records[i].vector_f64();
                    for (m, matrix) in layer.ensemble.matrices().iter().enumerate() {
                        let z_hat = project(matrix, &z)?;
                        let mut best: Option<(u32, f64)> = None;
                        for (class, proto_hat) in projected[l][m].iter().enumerate() {
                            let dist = distance(&z_hat, proto_hat, self.metric)?;
                            match best {
                                Some((_, incumbent)) if dist >= incumbent => {}
                                _ => best = Some((class as u32, dist)),
                            }
                        }
                        labels.push(best.expect("non-empty prototype set").0);
                    }
                }
                let consistency = consistency_score(&labels)?;
                Ok(DetectionResult {
                    sample_id: matched[0].records[i].sample_id.clone(),
                    consistency,
                    adversarial_score: 1.0 - consistency,
                    verdict: decide(consistency, self.alpha)?,
                    alpha: self.alpha,
                    labels,
                })
            })
            .collect()
    }
}
