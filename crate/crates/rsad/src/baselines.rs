//! One-class baseline detectors: local intrinsic dimensionality and a
//! pooled-covariance Gaussian (Mahalanobis) model.
//!
//! Both baselines fit on clean calibration data only, score a raw statistic,
//! and convert it to an anomaly quantile via [`OneClassCalibration`] — the
//! rank of the test score among the clean calibration scores. That gives
//! every detector the same output scale ([0, 1], higher = more adversarial)
//! and therefore the same report format and decision rule.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::activation::ActivationSet;
use crate::error::{Error, Result};
use crate::prototype::{distance, fit_prototypes, Metric};

/// Reference data and neighborhood size for LID estimation.
#[derive(Debug, Clone)]
pub struct LidConfig {
    k_neighbors: usize,
    reference_set: ActivationSet,
}

impl LidConfig {
    /// Requires `k_neighbors >= 2` and strictly more reference points than
    /// neighbors, so a query excluded from its own neighborhood still finds k.
    pub fn new(k_neighbors: usize, reference_set: ActivationSet) -> Result<Self> {
        if k_neighbors < 2 {
            return Err(Error::InvalidConfig(
                "LID needs at least 2 neighbors".into(),
            ));
        }
        reference_set.validate()?;
        if reference_set.len() <= k_neighbors {
            return Err(Error::InsufficientReferences {
                needed: k_neighbors + 1,
                got: reference_set.len(),
            });
        }
        Ok(LidConfig {
            k_neighbors,
            reference_set,
        })
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn reference_set(&self) -> &ActivationSet {
        &self.reference_set
    }
}

/// Maximum-likelihood local intrinsic dimensionality of `z`:
///
/// ```text
/// LID(z) = -( (1/k) Σ_i ln(r_i / r_k) )^-1
/// ```
///
/// where `r_1 <= … <= r_k` are distances to the k nearest reference points.
/// Pass the query's own id as `query_id` to exclude it from the reference
/// set. A neighborhood at one shared radius has an empty log-sum and scores
/// `+∞` (locally space-filling as far as the estimator can tell); a k-th
/// radius of zero leaves the estimator undefined and is an error.
pub fn lid_score(
    z: &[f64],
    query_id: Option<&str>,
    config: &LidConfig,
    metric: Metric,
) -> Result<f64> {
    if z.len() != config.reference_set.dim {
        return Err(Error::DimensionMismatch {
            expected: config.reference_set.dim,
            actual: z.len(),
        });
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let mut dists = Vec::with_capacity(config.reference_set.len());
    for record in &config.reference_set.records {
        if query_id == Some(record.sample_id.as_str()) {
            continue;
        }
        dists.push(distance(z, &record.vector_f64(), metric)?);
    }
    let k = config.k_neighbors;
    if dists.len() < k {
        return Err(Error::InsufficientReferences {
            needed: k,
            got: dists.len(),
        });
    }
    dists.sort_unstable_by(f64::total_cmp);
    let r_k = dists[k - 1];
    if r_k == 0.0 {
        return Err(Error::ZeroRadius);
    }
    let log_sum: f64 = dists[..k].iter().map(|&r| (r / r_k).ln()).sum();
    if log_sum == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-(k as f64) / log_sum)
}

/// Gaussian discriminant model with per-class means and one pooled covariance.
#[derive(Debug, Clone)]
pub struct GaussianClassModel {
    class_means: Vec<Vec<f64>>,
    covariance: DMatrix<f64>,
    regularization: f64,
    factor: Cholesky<f64, Dyn>,
}

impl GaussianClassModel {
    pub fn class_means(&self) -> &[Vec<f64>] {
        &self.class_means
    }

    /// The regularized pooled covariance the model scores against.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// The ridge that was added to the diagonal.
    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.class_means.len()
    }
}

/// Fit class means and the pooled within-class covariance
/// `Σ = (1/(N−K)) Σ_c Σ_i (x_i − μ_c)(x_i − μ_c)ᵀ + ridge·I`.
///
/// `ridge = None` defaults to `1e-3 · trace(Σ)/d`, scaling the floor with the
/// data's own variance. Every class needs at least two records, otherwise it
/// contributes nothing but a singular direction to the pool.
pub fn fit_gaussian_model(
    calibration: &ActivationSet,
    ridge: Option<f64>,
) -> Result<GaussianClassModel> {
    if let Some(r) = ridge {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "ridge must be a nonnegative finite number, got {r}"
            )));
        }
    }
    // fit_prototypes enforces clean-only, fully labeled, non-empty classes;
    // its means are exactly the class means we need.
    let prototypes = fit_prototypes(calibration)?;
    for (class, &support) in prototypes.support_counts.iter().enumerate() {
        if support < 2 {
            return Err(Error::InsufficientClassRecords {
                class: class as u32,
                needed: 2,
                got: support as usize,
            });
        }
    }

    let d = calibration.dim;
    let n = calibration.len();
    let k = prototypes.class_count as usize;
    let dof = (n - k) as f64;

    let mut scatter = DMatrix::<f64>::zeros(d, d);
    for record in &calibration.records {
        let mean = &prototypes.prototypes[record.class_label.unwrap() as usize];
        let delta: Vec<f64> = record
            .vector
            .iter()
            .zip(mean)
            .map(|(&x, &m)| f64::from(x) - m)
            .collect();
        for i in 0..d {
            for j in i..d {
                scatter[(i, j)] += delta[i] * delta[j];
            }
        }
    }
    // Mirror the upper triangle; the pool is symmetric by construction.
    for i in 0..d {
        for j in (i + 1)..d {
            scatter[(j, i)] = scatter[(i, j)];
        }
    }
    let mut covariance = scatter / dof;

    let regularization = ridge.unwrap_or_else(|| 1e-3 * covariance.trace() / d as f64);
    for i in 0..d {
        covariance[(i, i)] += regularization;
    }

    let factor = Cholesky::new(covariance.clone()).ok_or(Error::SingularCovariance)?;
    Ok(GaussianClassModel {
        class_means: prototypes.prototypes,
        covariance,
        regularization,
        factor,
    })
}

/// Confidence of `z` under the model: `max_c −(z−μ_c)ᵀ Σ⁻¹ (z−μ_c)`.
///
/// Always nonpositive; higher (closer to zero) means more typical of a class.
pub fn mahalanobis_confidence(z: &[f64], model: &GaussianClassModel) -> Result<f64> {
    if z.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: z.len(),
        });
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut best = f64::NEG_INFINITY;
    for mean in &model.class_means {
        let delta = DVector::from_iterator(z.len(), z.iter().zip(mean).map(|(a, b)| a - b));
        let solved = model.factor.solve(&delta);
        let confidence = -delta.dot(&solved);
        if confidence > best {
            best = confidence;
        }
    }
    Ok(best)
}

/// Rank-based anomaly calibration against clean scores.
///
/// `anomaly(s)` is the fraction of clean calibration scores strictly less
/// anomalous than `s`, so ~0 reads "more typical than everything clean" and
/// ~1 "more anomalous than everything clean". Monotone in `s` by
/// construction.
#[derive(Debug, Clone)]
pub struct OneClassCalibration {
    higher_is_anomalous: bool,
    /// Clean scores, sorted ascending.
    reference_scores: Vec<f64>,
}

/// Calibrate from clean-data scores. Requires at least 10 scores for the
/// quantiles to mean anything; NaN scores are refused (±∞ is legal — LID
/// produces it on saturated neighborhoods).
pub fn fit_one_class(clean_scores: &[f64], higher_is_anomalous: bool) -> Result<OneClassCalibration> {
    if clean_scores.len() < 10 {
        return Err(Error::TooFewScores {
            needed: 10,
            got: clean_scores.len(),
        });
    }
    if clean_scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFiniteInput);
    }
    let mut reference_scores = clean_scores.to_vec();
    reference_scores.sort_unstable_by(f64::total_cmp);
    Ok(OneClassCalibration {
        higher_is_anomalous,
        reference_scores,
    })
}

impl OneClassCalibration {
    pub fn len(&self) -> usize {
        self.reference_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference_scores.is_empty()
    }

    pub fn higher_is_anomalous(&self) -> bool {
        self.higher_is_anomalous
    }

    /// Anomaly quantile of `score` in [0, 1]. `score` must not be NaN.
    pub fn anomaly(&self, score: f64) -> f64 {
        debug_assert!(!score.is_nan(), "anomaly() called with NaN");
        let n = self.reference_scores.len();
        let less_anomalous = if self.higher_is_anomalous {
            self.reference_scores.partition_point(|&x| x < score)
        } else {
            n - self.reference_scores.partition_point(|&x| x <= score)
        };
        less_anomalous as f64 / n as f64
    }
}

/// Anomaly quantiles of every test record under the LID baseline, aligned
/// with `test.records`.
///
/// The estimator is fit on `calibration` (each calibration point scored with
/// itself excluded by sample id) and test points are ranked against those
/// clean scores.
pub fn lid_detector_scores(
    calibration: &ActivationSet,
    test: &ActivationSet,
    k_neighbors: usize,
    metric: Metric,
) -> Result<Vec<f64>> {
    if calibration.layer_id != test.layer_id {
        return Err(Error::LayerMismatch {
            expected: calibration.layer_id.clone(),
            actual: test.layer_id.clone(),
        });
    }
    test.validate()?;
    if test.dim != calibration.dim {
        return Err(Error::DimensionMismatch {
            expected: calibration.dim,
            actual: test.dim,
        });
    }
    let config = LidConfig::new(k_neighbors, calibration.clone())?;

    let clean_scores: Vec<f64> = config
        .reference_set
        .records
        .par_iter()
        .map(|r| lid_score(&r.vector_f64(), Some(&r.sample_id), &config, metric))
        .collect::<Result<_>>()?;
    let one_class = fit_one_class(&clean_scores, true)?;

    let raw: Vec<f64> = test
        .records
        .par_iter()
        .map(|r| lid_score(&r.vector_f64(), Some(&r.sample_id), &config, metric))
        .collect::<Result<_>>()?;
    Ok(raw.into_iter().map(|s| one_class.anomaly(s)).collect())
}

/// Anomaly quantiles of every test record under the Mahalanobis baseline,
/// aligned with `test.records`. Lower confidence means more anomalous.
pub fn dmd_detector_scores(
    calibration: &ActivationSet,
    test: &ActivationSet,
    ridge: Option<f64>,
) -> Result<Vec<f64>> {
    if calibration.layer_id != test.layer_id {
        return Err(Error::LayerMismatch {
            expected: calibration.layer_id.clone(),
            actual: test.layer_id.clone(),
        });
    }
    test.validate()?;
    if test.dim != calibration.dim {
        return Err(Error::DimensionMismatch {
            expected: calibration.dim,
            actual: test.dim,
        });
    }
    let model = fit_gaussian_model(calibration, ridge)?;

    let clean_scores: Vec<f64> = calibration
        .records
        .par_iter()
        .map(|r| mahalanobis_confidence(&r.vector_f64(), &model))
        .collect::<Result<_>>()?;
    let one_class = fit_one_class(&clean_scores, false)?;

    let raw: Vec<f64> = test
        .records
        .par_iter()
        .map(|r| mahalanobis_confidence(&r.vector_f64(), &model))
        .collect::<Result<_>>()?;
    Ok(raw.into_iter().map(|s| one_class.anomaly(s)).collect())
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

    fn line_set(values: &[f32]) -> ActivationSet {
        let mut set = ActivationSet::new("l", 1, 1);
        for (i, &v) in values.iter().enumerate() {
            set.records.push(record(&format!("p{i}"), 0, vec![v]));
        }
        set
    }

    #[test]
    fn lid_is_scale_invariant() {
        let set = line_set(&[1.0, 2.0, 4.0, 8.0, 16.0, 32.0]);
        let config = LidConfig::new(3, set.clone()).unwrap();
        let a = lid_score(&[0.0], None, &config, Metric::Euclidean).unwrap();

        let mut scaled = set;
        for r in &mut scaled.records {
            r.vector[0] *= 10.0;
        }
        let config = LidConfig::new(3, scaled).unwrap();
        let b = lid_score(&[0.0], None, &config, Metric::Euclidean).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn lid_saturated_neighborhood_is_infinite_and_zero_radius_errors() {
        // All references at the same nonzero radius from the origin query.
        let set = line_set(&[2.0, -2.0, 2.0, -2.0, 2.0]);
        let config = LidConfig::new(3, set).unwrap();
        assert_eq!(
            lid_score(&[0.0], None, &config, Metric::Euclidean).unwrap(),
            f64::INFINITY
        );

        // k-th neighbor exactly at the query: undefined.
        let set = line_set(&[5.0, 5.0, 5.0, 9.0, 11.0]);
        let config = LidConfig::new(3, set).unwrap();
        assert!(matches!(
            lid_score(&[5.0], None, &config, Metric::Euclidean),
            Err(Error::ZeroRadius)
        ));
    }

    #[test]
    fn lid_excludes_the_query_by_id() {
        let set = line_set(&[1.0, 2.0, 4.0, 8.0, 16.0]);
        let config = LidConfig::new(3, set).unwrap();
        // Scoring p0 with exclusion: neighbors are 2, 4, 8, not itself.
        let with_exclusion =
            lid_score(&[1.0], Some("p0"), &config, Metric::Euclidean).unwrap();
        // Without exclusion the zero self-distance makes r_k smaller.
        let without = lid_score(&[1.0], None, &config, Metric::Euclidean).unwrap();
        assert_ne!(with_exclusion, without);
    }

    #[test]
    fn lid_config_validation() {
        let set = line_set(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            LidConfig::new(1, set.clone()),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            LidConfig::new(3, set),
            Err(Error::InsufficientReferences { needed: 4, got: 3 })
        ));
    }

    fn four_point_two_class() -> ActivationSet {
        // Each class symmetric about its mean along e1 only.
        let mut set = ActivationSet::new("l", 2, 2);
        set.records.push(record("a", 0, vec![-1.0, 0.0]));
        set.records.push(record("b", 0, vec![1.0, 0.0]));
        set.records.push(record("c", 1, vec![4.0, 3.0]));
        set.records.push(record("d", 1, vec![8.0, 3.0]));
        set
    }

    #[test]
    fn pooled_covariance_matches_hand_computation() {
        let ridge = 0.25;
        let model = fit_gaussian_model(&four_point_two_class(), Some(ridge)).unwrap();
        assert_eq!(model.class_means()[0], vec![0.0, 0.0]);
        assert_eq!(model.class_means()[1], vec![6.0, 3.0]);
        // Scatter: class 0 gives 2·1², class 1 gives 2·2², pooled over
        // N−K = 2 degrees of freedom -> var(e1) = 5; the only other nonzero
        // entries are the ridge on the diagonal.
        assert!((model.covariance()[(0, 0)] - (5.0 + ridge)).abs() < 1e-12);
        assert_eq!(model.covariance()[(0, 1)], 0.0);
        assert_eq!(model.covariance()[(1, 0)], 0.0);
        assert!((model.covariance()[(1, 1)] - ridge).abs() < 1e-12);
        assert_eq!(model.regularization(), ridge);
    }

    #[test]
    fn zero_variance_direction_needs_ridge() {
        // With ridge 0 the pool is singular along e2 and fitting fails;
        // any positive ridge rescues it.
        assert!(matches!(
            fit_gaussian_model(&four_point_two_class(), Some(0.0)),
            Err(Error::SingularCovariance)
        ));
        let model = fit_gaussian_model(&four_point_two_class(), Some(0.5)).unwrap();
        assert!((model.covariance()[(1, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_covariance_reduces_to_squared_distance() {
        // Zero within-class variance + ridge 1 -> Σ = I, so confidence is
        // −min_c ‖z−μ_c‖².
        let mut set = ActivationSet::new("l", 2, 2);
        set.records.push(record("a", 0, vec![0.0, 0.0]));
        set.records.push(record("b", 0, vec![0.0, 0.0]));
        set.records.push(record("c", 1, vec![6.0, 0.0]));
        set.records.push(record("d", 1, vec![6.0, 0.0]));
        let model = fit_gaussian_model(&set, Some(1.0)).unwrap();
        let conf = mahalanobis_confidence(&[1.0, 2.0], &model).unwrap();
        assert!((conf - (-5.0)).abs() < 1e-12);
        // At a class mean the confidence is exactly 0.
        let at_mean = mahalanobis_confidence(&[6.0, 0.0], &model).unwrap();
        assert_eq!(at_mean, 0.0);
    }

    #[test]
    fn gaussian_fit_requires_two_records_per_class() {
        let mut set = ActivationSet::new("l", 2, 2);
        set.records.push(record("a", 0, vec![0.0, 0.0]));
        set.records.push(record("b", 0, vec![1.0, 0.0]));
        set.records.push(record("c", 1, vec![5.0, 5.0]));
        assert!(matches!(
            fit_gaussian_model(&set, Some(0.1)),
            Err(Error::InsufficientClassRecords { class: 1, needed: 2, got: 1 })
        ));
    }

    #[test]
    fn one_class_quantiles_match_rank_intuition() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let cal = fit_one_class(&scores, true).unwrap();
        assert_eq!(cal.anomaly(150.0), 1.0);
        assert_eq!(cal.anomaly(0.5), 0.0);
        assert_eq!(cal.anomaly(50.5), 0.5);
        // Exactly at a calibration score: strictly-less counting.
        assert_eq!(cal.anomaly(50.0), 0.49);

        // Flipped orientation: low scores are anomalous.
        let cal = fit_one_class(&scores, false).unwrap();
        assert_eq!(cal.anomaly(0.5), 1.0);
        assert_eq!(cal.anomaly(150.0), 0.0);
        assert_eq!(cal.anomaly(50.0), 0.5);
    }

    #[test]
    fn one_class_needs_ten_scores_and_rejects_nan() {
        assert!(matches!(
            fit_one_class(&[1.0; 9], true),
            Err(Error::TooFewScores { needed: 10, got: 9 })
        ));
        let mut scores = vec![1.0; 10];
        scores[3] = f64::NAN;
        assert!(matches!(fit_one_class(&scores, true), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn detector_scores_rank_outliers_high() {
        // Calibration: tight blob per class; test: one in-distribution point,
        // one far outlier. The outlier must get the higher anomaly quantile
        // under both baselines.
        let mut cal = ActivationSet::new("l", 2, 2);
        for i in 0..15 {
            let t = i as f32 * 0.1;
            cal.records.push(record(&format!("a{i}"), 0, vec![t.sin(), t.cos()]));
            cal.records
                .push(record(&format!("b{i}"), 1, vec![10.0 + t.cos(), 10.0 + t.sin()]));
        }
        let mut test = ActivationSet::new("l", 2, 2);
        test.records.push(record("in", 0, vec![0.5, 0.9]));
        test.records.push(record("out", 0, vec![500.0, -300.0]));

        let lid = lid_detector_scores(&cal, &test, 5, Metric::Euclidean).unwrap();
        assert!(lid[1] >= lid[0], "LID: {lid:?}");
        assert_eq!(lid[1], 1.0);

        let dmd = dmd_detector_scores(&cal, &test, None).unwrap();
        assert!(dmd[1] > dmd[0], "DMD: {dmd:?}");
        assert_eq!(dmd[1], 1.0);
    }
}
