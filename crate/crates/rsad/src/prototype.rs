//! Class prototypes: per-class mean activations and nearest-prototype lookup.
//!
//! Calibration computes one prototype per class — the arithmetic mean of that
//! class's clean activation vectors — and classification assigns a vector to
//! the class whose prototype is nearest under the configured metric. Fitting
//! canonicalizes record order and sums pairwise, so the prototypes are
//! bit-identical no matter how the input was shuffled or sharded.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::activation::{ActivationRecord, ActivationSet, TruthFlag};
use crate::error::{Error, Result};

/// Distance used for prototype matching, in ambient and projected space alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 − cos(u, v)`; undefined for zero-norm vectors.
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::InvalidConfig(format!(
                "unknown metric '{other}' (expected 'euclidean' or 'cosine')"
            ))),
        }
    }
}

/// Distance between two vectors of equal dimension.
pub fn distance(u: &[f64], v: &[f64], metric: Metric) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    match metric {
        Metric::Euclidean => {
            let sq = u
                .iter()
                .zip(v)
                .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b));
            Ok(sq.sqrt())
        }
        Metric::Cosine => {
            let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
            for (a, b) in u.iter().zip(v) {
                dot += a * b;
                nu += a * a;
                nv += b * b;
            }
            if nu == 0.0 || nv == 0.0 {
                return Err(Error::ZeroNormCosine);
            }
            Ok(1.0 - dot / (nu.sqrt() * nv.sqrt()))
        }
    }
}

/// Fitted prototypes for one layer: one mean vector per class.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub layer_id: String,
    pub class_count: u32,
    pub dim: usize,
    /// `prototypes[c]` is the mean activation of class `c`, in `f64`.
    pub prototypes: Vec<Vec<f64>>,
    /// Number of calibration records behind each prototype.
    pub support_counts: Vec<u64>,
}

impl PrototypeSet {
    pub fn validate(&self) -> Result<()> {
        if self.prototypes.len() != self.class_count as usize
            || self.support_counts.len() != self.class_count as usize
        {
            return Err(Error::InvalidConfig(format!(
                "prototype set stores {} prototypes / {} supports for class_count {}",
                self.prototypes.len(),
                self.support_counts.len(),
                self.class_count
            )));
        }
        for (class, proto) in self.prototypes.iter().enumerate() {
            if proto.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: proto.len(),
                });
            }
            if proto.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteValue {
                    sample_id: format!("prototype[{class}]"),
                });
            }
        }
        if let Some(class) = self.support_counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass { class: class as u32 });
        }
        Ok(())
    }
}

/// Fit per-class mean prototypes from clean, labeled calibration activations.
///
/// Rejects adversarial-flagged and unlabeled records outright rather than
/// silently skipping them: a polluted calibration set is a pipeline bug.
/// Records are canonically ordered and summed as a balanced pairwise tree,
/// so the result does not depend on input order.
pub fn fit_prototypes(calibration: &ActivationSet) -> Result<PrototypeSet> {
    calibration.validate()?;
    if calibration.class_count == 0 {
        return Err(Error::InvalidConfig(
            "class_count must be at least 1 to fit prototypes".into(),
        ));
    }

    let mut by_class: Vec<Vec<&ActivationRecord>> =
        vec![Vec::new(); calibration.class_count as usize];
    for record in &calibration.records {
        if record.truth == TruthFlag::Adversarial {
            return Err(Error::AdversarialInCalibration {
                sample_id: record.sample_id.clone(),
            });
        }
        let label = record.class_label.ok_or_else(|| Error::UnlabeledCalibrationRecord {
            sample_id: record.sample_id.clone(),
        })?;
        by_class[label as usize].push(record);
    }

    let mut prototypes = Vec::with_capacity(by_class.len());
    let mut support_counts = Vec::with_capacity(by_class.len());
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyClass { class: class as u32 });
        }
        members.sort_unstable_by(|a, b| canonical_order(a, b));
        let sum = pairwise_sum(members, calibration.dim);
        let n = members.len() as f64;
        prototypes.push(sum.into_iter().map(|s| s / n).collect());
        support_counts.push(members.len() as u64);
    }

    Ok(PrototypeSet {
        layer_id: calibration.layer_id.clone(),
        class_count: calibration.class_count,
        dim: calibration.dim,
        prototypes,
        support_counts,
    })
}

/// Canonical record order: sample id, then label, then raw vector bits.
/// Total even for duplicate ids, which keeps the summation tree unique.
fn canonical_order(a: &ActivationRecord, b: &ActivationRecord) -> Ordering {
    a.sample_id
        .cmp(&b.sample_id)
        .then_with(|| a.class_label.cmp(&b.class_label))
        .then_with(|| {
            for (x, y) in a.vector.iter().zip(&b.vector) {
                let ord = x.to_bits().cmp(&y.to_bits());
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            Ordering::Equal
        })
}

/// Balanced pairwise (tree) summation in f64; deterministic for a fixed
/// record order and more accurate than a running sum.
fn pairwise_sum(records: &[&ActivationRecord], dim: usize) -> Vec<f64> {
    match records.len() {
        0 => vec![0.0; dim],
        1 => records[0].vector.iter().map(|&x| f64::from(x)).collect(),
        n => {
            let (lo, hi) = records.split_at(n / 2);
            let mut left = pairwise_sum(lo, dim);
            let right = pairwise_sum(hi, dim);
            for (l, r) in left.iter_mut().zip(right) {
                *l += r;
            }
            left
        }
    }
}

/// Nearest prototype under `metric`: returns `(class, distance)`.
///
/// Ties break to the smallest class index (classes are scanned in ascending
/// order and only a strictly smaller distance displaces the incumbent).
pub fn nearest_prototype(
    z: &[f64],
    prototypes: &PrototypeSet,
    metric: Metric,
) -> Result<(u32, f64)> {
    prototypes.validate()?;
    if z.len() != prototypes.dim {
        return Err(Error::DimensionMismatch {
            expected: prototypes.dim,
            actual: z.len(),
        });
    }
    let mut best: Option<(u32, f64)> = None;
    for (class, proto) in prototypes.prototypes.iter().enumerate() {
        let dist = distance(z, proto, metric)?;
        match best {
            Some((_, incumbent)) if dist >= incumbent => {}
            _ => best = Some((class as u32, dist)),
        }
    }
    best.ok_or(Error::InvalidConfig("prototype set has no classes".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{ActivationRecord, ActivationSet, TruthFlag};

    fn record(id: &str, label: u32, vector: Vec<f32>) -> ActivationRecord {
        ActivationRecord {
            sample_id: id.into(),
            class_label: Some(label),
            truth: TruthFlag::Clean,
            vector,
        }
    }

    fn two_class_set() -> ActivationSet {
        let mut set = ActivationSet::new("fc2", 2, 2);
        set.records.push(record("a", 0, vec![1.0, 0.0]));
        set.records.push(record("b", 0, vec![3.0, 0.0]));
        set.records.push(record("c", 1, vec![0.0, 2.0]));
        set
    }

    #[test]
    fn means_and_supports_match_hand_computation() {
        let protos = fit_prototypes(&two_class_set()).unwrap();
        assert_eq!(protos.prototypes, vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        assert_eq!(protos.support_counts, vec![2, 1]);
        assert_eq!(protos.layer_id, "fc2");
    }

    #[test]
    fn single_record_class_is_its_own_prototype() {
        let mut set = ActivationSet::new("fc2", 1, 3);
        set.records.push(record("only", 0, vec![0.25, -1.5, 7.0]));
        let protos = fit_prototypes(&set).unwrap();
        assert_eq!(protos.prototypes[0], vec![0.25, -1.5, 7.0]);
    }

    #[test]
    fn calibration_gatekeeping() {
        let mut set = two_class_set();
        set.records[1].truth = TruthFlag::Adversarial;
        assert!(matches!(
            fit_prototypes(&set),
            Err(Error::AdversarialInCalibration { .. })
        ));

        let mut set = two_class_set();
        set.records[1].class_label = None;
        assert!(matches!(
            fit_prototypes(&set),
            Err(Error::UnlabeledCalibrationRecord { .. })
        ));

        let mut set = two_class_set();
        set.class_count = 3;
        assert!(matches!(fit_prototypes(&set), Err(Error::EmptyClass { class: 2 })));
    }

    #[test]
    fn euclidean_and_cosine_hand_values() {
        assert_eq!(
            distance(&[0.0, 0.0], &[3.0, 4.0], Metric::Euclidean).unwrap(),
            5.0
        );
        // Same direction: cosine distance 0 regardless of length.
        let d = distance(&[1.0, 1.0], &[2.0, 2.0], Metric::Cosine).unwrap();
        assert!(d.abs() < 1e-15);
        // Orthogonal: cosine distance 1.
        let d = distance(&[1.0, 0.0], &[0.0, 5.0], Metric::Cosine).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        assert!(matches!(
            distance(&[0.0, 0.0], &[1.0, 0.0], Metric::Cosine),
            Err(Error::ZeroNormCosine)
        ));
        assert!(matches!(
            distance(&[1.0], &[1.0, 2.0], Metric::Euclidean),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn nearest_prototype_picks_closest_and_breaks_ties_low() {
        let protos = fit_prototypes(&two_class_set()).unwrap();
        let (class, dist) = nearest_prototype(&[2.0, 1.0], &protos, Metric::Euclidean).unwrap();
        assert_eq!(class, 0);
        assert!((dist - 1.0).abs() < 1e-15);

        // Equidistant from (2,0) and (0,2): tie must go to class 0.
        let (class, _) = nearest_prototype(&[1.0, 1.0], &protos, Metric::Euclidean).unwrap();
        assert_eq!(class, 0);
    }

    #[test]
    fn permutation_of_records_leaves_prototypes_bit_identical() {
        let mut set = ActivationSet::new("fc2", 2, 3);
        // Values chosen so naive left-to-right summation order matters.
        let records = vec![
            record("s0", 0, vec![1.0e8, 1.0, -3.25]),
            record("s1", 0, vec![-1.0e8, 2.0, 0.5]),
            record("s2", 0, vec![0.125, 3.0, 9.75]),
            record("s3", 1, vec![7.5, -4.0, 2.25]),
            record("s4", 1, vec![0.375, 0.0, 0.0]),
        ];
        set.records = records.clone();
        let forward = fit_prototypes(&set).unwrap();

        set.records = records.into_iter().rev().collect();
        let reversed = fit_prototypes(&set).unwrap();

        for (a, b) in forward.prototypes.iter().zip(&reversed.prototypes) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
