//! Cross-checks against independent re-implementations and closed-form
//! statistics: every numeric claim the library makes is recomputed here the
//! slow, obvious way and compared at an explicit tolerance.

use rsad::activation::{ActivationRecord, ActivationSet, TruthFlag};
use rsad::baselines::{
    fit_gaussian_model, lid_score, mahalanobis_confidence, LidConfig,
};
use rsad::detector::{random_subspace_analysis, Detector};
use rsad::metrics::{auc, LabeledScore};
use rsad::projection::{orthogonality_audit, sample_ensemble, ProjectionMatrix};
use rsad::prototype::{fit_prototypes, nearest_prototype, Metric};
use rsad::rng::{derive_key, stream_index, stream_normal, stream_unit};
use rsad::synth::{generate, SyntheticConfig};

fn clean_record(id: String, label: u32, vector: Vec<f32>) -> ActivationRecord {
    ActivationRecord {
        sample_id: id,
        class_label: Some(label),
        truth: TruthFlag::Clean,
        vector,
    }
}

// ---------------------------------------------------------------------------
// Projection statistics

#[test]
fn gaussian_matrix_row_geometry_matches_theory() {
    // Rows of a k×d standard-normal matrix: squared norms concentrate at d,
    // inner products at 0. Averaged over 1000 matrices the norm must land
    // within 2% of d and the inner product within a few standard errors of 0.
    let (k, d) = (64, 512);
    let mut norm_sum = 0.0;
    let mut inner_sum = 0.0;
    for index in 0..1000u32 {
        let matrix = ProjectionMatrix::generate(0xA0D1, index, k, d).unwrap();
        let audit = orthogonality_audit(&matrix);
        norm_sum += audit.mean_row_sq_norm;
        inner_sum += audit.mean_row_inner_product;
    }
    let mean_norm = norm_sum / 1000.0;
    let mean_inner = inner_sum / 1000.0;
    assert!(
        (mean_norm - d as f64).abs() < 0.02 * d as f64,
        "mean row squared norm {mean_norm} not within 2% of {d}"
    );
    // Var of one row-pair inner product is d; averaging over
    // 2016 pairs × 1000 matrices gives SE ≈ sqrt(512 / 2_016_000) ≈ 0.016.
    assert!(
        mean_inner.abs() < 0.1,
        "mean row inner product {mean_inner} too far from 0"
    );
}

#[test]
fn normalized_distortion_ratio_is_unbiased_for_a_fixed_pair() {
    // E[‖R u − R v‖²] = k‖u − v‖², so the normalized ratio has mean 1.
    // Check the empirical mean over many matrices against its standard error
    // (ratio variance is 2/k for Gaussian projections).
    let (k, d) = (4, 16);
    let u: Vec<f64> = (0..d).map(|j| stream_normal(111, j as u64)).collect();
    let v: Vec<f64> = (0..d).map(|j| stream_normal(222, j as u64)).collect();
    let ambient: f64 = u
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let trials = 20_000u32;
    let mut sum = 0.0;
    for index in 0..trials {
        let matrix = ProjectionMatrix::generate(0xBEEF, index, k, d).unwrap();
        let pu = rsad::projection::project(&matrix, &u).unwrap();
        let pv = rsad::projection::project(&matrix, &v).unwrap();
        let projected: f64 = pu
            .iter()
            .zip(&pv)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        sum += projected / (k as f64 * ambient);
    }
    let mean = sum / f64::from(trials);
    let se = (2.0 / k as f64 / f64::from(trials)).sqrt();
    assert!(
        (mean - 1.0).abs() < 4.0 * se,
        "ratio mean {mean} deviates from 1 by more than 4 SE ({se})"
    );
}

// ---------------------------------------------------------------------------
// Prototype fitting and lookup

#[test]
fn fitted_prototypes_match_a_naive_mean_and_recover_planted_centers() {
    let (classes, d, per_class) = (3u32, 32usize, 500usize);
    let mut set = ActivationSet::new("oracle", classes, d);
    for class in 0..classes {
        let key = derive_key(901, "proto-oracle", u64::from(class));
        for i in 0..per_class {
            let vector: Vec<f32> = (0..d)
                .map(|j| {
                    let center = if j == class as usize { f64::from(class) + 1.0 } else { 0.0 };
                    (center + stream_normal(key, (i * d + j) as u64)) as f32
                })
                .collect();
            set.records.push(clean_record(format!("s{class}-{i:04}"), class, vector));
        }
    }
    let prototypes = fit_prototypes(&set).unwrap();

    for class in 0..classes as usize {
        // Naive oracle: running f64 sum over records in input order.
        let members: Vec<&ActivationRecord> = set
            .records
            .iter()
            .filter(|r| r.class_label == Some(class as u32))
            .collect();
        let mut naive = vec![0.0f64; d];
        for record in &members {
            for (acc, &x) in naive.iter_mut().zip(&record.vector) {
                *acc += f64::from(x);
            }
        }
        for acc in &mut naive {
            *acc /= members.len() as f64;
        }
        for (a, b) in prototypes.prototypes[class].iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-10, "pairwise vs naive mean drifted: {a} vs {b}");
        }
        // And the estimated center is near the planted one: the mean of
        // per_class N(0,1) coordinates has SE 1/sqrt(500) ≈ 0.045.
        let planted = class as f64 + 1.0;
        let err = (prototypes.prototypes[class][class] - planted).abs();
        assert!(err < 0.2, "class {class} center off by {err}");
    }
}

#[test]
fn nearest_prototype_agrees_with_exhaustive_scan() {
    let mut set = ActivationSet::new("scan", 5, 16);
    for class in 0..5u32 {
        let key = derive_key(77, "scan-cal", u64::from(class));
        for i in 0..20 {
            let vector: Vec<f32> = (0..16)
                .map(|j| (3.0 * f64::from(class) + stream_normal(key, (i * 16 + j) as u64)) as f32)
                .collect();
            set.records.push(clean_record(format!("r{class}-{i}"), class, vector));
        }
    }
    let prototypes = fit_prototypes(&set).unwrap();

    let query_key = derive_key(77, "scan-query", 0);
    for metric in [Metric::Euclidean, Metric::Cosine] {
        for q in 0..100usize {
            let z: Vec<f64> = (0..16)
                .map(|j| 6.0 * stream_unit(query_key, (q * 16 + j) as u64) + 0.5)
                .collect();
            let (class, dist) = nearest_prototype(&z, &prototypes, metric).unwrap();

            let mut best = (u32::MAX, f64::INFINITY);
            for (c, proto) in prototypes.prototypes.iter().enumerate() {
                let d = rsad::prototype::distance(&z, proto, metric).unwrap();
                if d < best.1 {
                    best = (c as u32, d);
                }
            }
            assert_eq!(class, best.0, "metric {metric:?}, query {q}");
            assert_eq!(dist.to_bits(), best.1.to_bits());
        }
    }
}

// ---------------------------------------------------------------------------
// Detector vs naive oracle

/// Naive per-matrix nearest-prototype vote, written with explicit index
/// loops and squared distances — independently of the library's path.
#[allow(clippy::needless_range_loop)]
fn naive_subspace_labels(
    z: &[f64],
    prototypes: &[Vec<f64>],
    matrix: &ProjectionMatrix,
    metric: Metric,
) -> u32 {
    let (k, d) = (matrix.rows(), matrix.cols());
    let project_naive = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; k];
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..d {
                acc += matrix.entries()[i * d + j] * v[j];
            }
            out[i] = acc;
        }
        out
    };
    let z_hat = project_naive(z);
    let mut best_class = 0u32;
    let mut best_key = f64::INFINITY;
    for (c, proto) in prototypes.iter().enumerate() {
        let p_hat = project_naive(proto);
        let key = match metric {
            Metric::Euclidean => z_hat
                .iter()
                .zip(&p_hat)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let dot: f64 = z_hat.iter().zip(&p_hat).map(|(a, b)| a * b).sum();
                let nz: f64 = z_hat.iter().map(|a| a * a).sum::<f64>().sqrt();
                let np: f64 = p_hat.iter().map(|a| a * a).sum::<f64>().sqrt();
                1.0 - dot / (nz * np)
            }
        };
        if key < best_key {
            best_key = key;
            best_class = c as u32;
        }
    }
    best_class
}

#[test]
fn subspace_votes_match_the_naive_oracle() {
    let instance_key = derive_key(0x5151, "rsa-oracle", 0);
    for trial in 0..40u64 {
        let d = 8 + (stream_index(instance_key, trial * 7, 57)) as usize; // 8..64
        let k = 1 + (stream_index(instance_key, trial * 7 + 1, d as u64)) as usize;
        let classes = 2 + stream_index(instance_key, trial * 7 + 2, 3) as u32; // 2..4
        let m = 1 + stream_index(instance_key, trial * 7 + 3, 32) as usize; // 1..32
        let metric = if trial % 2 == 0 { Metric::Euclidean } else { Metric::Cosine };

        let proto_key = derive_key(instance_key, "protos", trial);
        let prototypes: Vec<Vec<f64>> = (0..classes as usize)
            .map(|c| {
                (0..d)
                    .map(|j| 2.0 + stream_normal(proto_key, (c * d + j) as u64))
                    .collect()
            })
            .collect();
        let proto_set = rsad::prototype::PrototypeSet {
            layer_id: "oracle".into(),
            class_count: classes,
            dim: d,
            prototypes: prototypes.clone(),
            support_counts: vec![1; classes as usize],
        };
        let z: Vec<f64> = (0..d)
            .map(|j| 2.0 + stream_normal(derive_key(instance_key, "z", trial), j as u64))
            .collect();

        let ensemble = sample_ensemble(trial, "oracle", m, k, d).unwrap();
        let fast = random_subspace_analysis(&z, &proto_set, &ensemble, metric).unwrap();

        let slow: Vec<u32> = ensemble
            .matrices()
            .iter()
            .map(|matrix| naive_subspace_labels(&z, &prototypes, matrix, metric))
            .collect();
        assert_eq!(fast.labels, slow, "trial {trial} (d={d}, k={k}, M={m})");
    }
}

#[test]
fn batch_scoring_is_identical_across_thread_counts() {
    let config = SyntheticConfig {
        class_count: 4,
        dim: 64,
        n_per_class: 60,
        center_scale: 10.0,
        noise_sigma: 1.0,
        shift_fraction: 0.6,
        nonrobust_fraction: 0.25,
        seed: 12,
    };
    let (calibration, test) = generate(&config).unwrap();
    let detector = Detector::calibrate(&calibration, 16, 8, 5, Metric::Euclidean, 0.5).unwrap();

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| detector.score_batch(std::slice::from_ref(&test)).unwrap());
    let eight = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap()
        .install(|| detector.score_batch(std::slice::from_ref(&test)).unwrap());

    assert_eq!(single.len(), eight.len());
    for (a, b) in single.iter().zip(&eight) {
        assert_eq!(a.sample_id, b.sample_id);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.consistency.to_bits(), b.consistency.to_bits());
        assert_eq!(a.verdict, b.verdict);
    }
}

// ---------------------------------------------------------------------------
// LID: closed-form expectation on a uniform ball

#[test]
fn lid_recovers_the_dimension_of_a_uniform_ball() {
    // 2000 points uniform in a 5-dimensional unit ball, embedded in d=32 by
    // zero-padding; the MLE at the center with k=20 estimates ≈ 5 (the
    // estimator's small-sample bias is k/(k−1)).
    let intrinsic = 5usize;
    let ambient = 32usize;
    let k_neighbors = 20usize;

    let mut estimates = Vec::new();
    for dataset in 0..10u64 {
        let dir_key = derive_key(314, "ball-dir", dataset);
        let rad_key = derive_key(314, "ball-rad", dataset);
        let mut set = ActivationSet::new("ball", 1, ambient);
        for i in 0..2000usize {
            let gauss: Vec<f64> = (0..intrinsic)
                .map(|j| stream_normal(dir_key, (i * intrinsic + j) as u64))
                .collect();
            let norm = gauss.iter().map(|x| x * x).sum::<f64>().sqrt();
            let radius = stream_unit(rad_key, i as u64).powf(1.0 / intrinsic as f64);
            let mut vector = vec![0.0f32; ambient];
            for (j, g) in gauss.iter().enumerate() {
                vector[j] = (radius * g / norm) as f32;
            }
            set.records.push(clean_record(format!("b{i}"), 0, vector));
        }
        let config = LidConfig::new(k_neighbors, set).unwrap();
        estimates.push(lid_score(&vec![0.0; ambient], None, &config, Metric::Euclidean).unwrap());
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    assert!(
        (3.5..=6.5).contains(&mean),
        "mean LID {mean} outside [3.5, 6.5]: {estimates:?}"
    );
}

// ---------------------------------------------------------------------------
// Gaussian model vs textbook formulas

#[test]
fn pooled_covariance_matches_textbook_accumulation() {
    let (classes, d, per_class) = (3u32, 16usize, 40usize);
    let mut set = ActivationSet::new("gda", classes, d);
    for class in 0..classes {
        let key = derive_key(555, "gda-cal", u64::from(class));
        for i in 0..per_class {
            let vector: Vec<f32> = (0..d)
                .map(|j| {
                    (f64::from(class) * 4.0 + (1.0 + 0.1 * j as f64)
                        * stream_normal(key, (i * d + j) as u64)) as f32
                })
                .collect();
            set.records.push(clean_record(format!("g{class}-{i}"), class, vector));
        }
    }
    let ridge = 0.01;
    let model = fit_gaussian_model(&set, Some(ridge)).unwrap();

    // Textbook oracle with no pairwise tricks.
    let mut means = vec![vec![0.0f64; d]; classes as usize];
    let mut counts = vec![0usize; classes as usize];
    for record in &set.records {
        let c = record.class_label.unwrap() as usize;
        counts[c] += 1;
        for (m, &x) in means[c].iter_mut().zip(&record.vector) {
            *m += f64::from(x);
        }
    }
    for (mean, &count) in means.iter_mut().zip(&counts) {
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
    }
    let dof = (set.len() - classes as usize) as f64;
    let mut oracle = vec![vec![0.0f64; d]; d];
    for record in &set.records {
        let c = record.class_label.unwrap() as usize;
        let delta: Vec<f64> = record
            .vector
            .iter()
            .zip(&means[c])
            .map(|(&x, m)| f64::from(x) - m)
            .collect();
        for i in 0..d {
            for j in 0..d {
                oracle[i][j] += delta[i] * delta[j] / dof;
            }
        }
    }
    for (i, row) in oracle.iter().enumerate() {
        for (j, &expected) in row.iter().enumerate() {
            let expected = expected + if i == j { ridge } else { 0.0 };
            let got = model.covariance()[(i, j)];
            assert!(
                (got - expected).abs() < 1e-10,
                "covariance[{i}][{j}]: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn cholesky_solve_agrees_with_explicit_inverse() {
    let (classes, d, per_class) = (3u32, 8usize, 30usize);
    let mut set = ActivationSet::new("inv", classes, d);
    for class in 0..classes {
        let key = derive_key(808, "inv-cal", u64::from(class));
        for i in 0..per_class {
            let vector: Vec<f32> = (0..d)
                .map(|j| (f64::from(class) + stream_normal(key, (i * d + j) as u64)) as f32)
                .collect();
            set.records.push(clean_record(format!("i{class}-{i}"), class, vector));
        }
    }
    let model = fit_gaussian_model(&set, None).unwrap();
    let inverse = model
        .covariance()
        .clone()
        .try_inverse()
        .expect("regularized covariance is invertible");

    let query_key = derive_key(808, "inv-query", 0);
    for q in 0..25usize {
        let z: Vec<f64> = (0..d)
            .map(|j| 2.0 * stream_normal(query_key, (q * d + j) as u64))
            .collect();
        let fast = mahalanobis_confidence(&z, &model).unwrap();

        let mut slow = f64::NEG_INFINITY;
        for mean in model.class_means() {
            let delta = nalgebra::DVector::from_iterator(
                d,
                z.iter().zip(mean).map(|(a, b)| a - b),
            );
            let quad = (&inverse * &delta).dot(&delta);
            slow = slow.max(-quad);
        }
        assert!(
            (fast - slow).abs() < 1e-8 * (1.0 + slow.abs()),
            "query {q}: {fast} vs {slow}"
        );
    }
}

// ---------------------------------------------------------------------------
// AUC vs rank-statistic oracle

#[test]
fn trapezoid_auc_equals_mann_whitney_with_ties() {
    let key = derive_key(0xAC, "auc-oracle", 0);
    for trial in 0..200u64 {
        let n = 2 + stream_index(key, trial * 3, 199) as usize;
        let label_key = derive_key(key, "labels", trial);
        let score_key = derive_key(key, "scores", trial);
        let mut scores = Vec::with_capacity(n);
        for i in 0..n {
            // Quantized scores force plenty of exact ties.
            let score = stream_index(score_key, i as u64, 9) as f64 / 8.0;
            let is_adversarial = if i == 0 {
                true
            } else if i == 1 {
                false
            } else {
                stream_u64_parity(label_key, i as u64)
            };
            scores.push(LabeledScore {
                sample_id: format!("t{trial}-{i}"),
                score,
                is_adversarial,
            });
        }
        let fast = auc(&scores).unwrap();

        // U statistic: pairs (adversarial, clean) where the adversarial
        // sample ranks higher, ties counting half.
        let mut u = 0.0;
        let mut pairs = 0.0;
        for a in scores.iter().filter(|s| s.is_adversarial) {
            for c in scores.iter().filter(|s| !s.is_adversarial) {
                pairs += 1.0;
                if a.score > c.score {
                    u += 1.0;
                } else if a.score == c.score {
                    u += 0.5;
                }
            }
        }
        let slow = u / pairs;
        assert!(
            (fast - slow).abs() <= 1e-12,
            "trial {trial}: trapezoid {fast} vs U {slow}"
        );
    }
}

fn stream_u64_parity(key: u64, counter: u64) -> bool {
    rsad::rng::stream_u64(key, counter) & 1 == 1
}

// ---------------------------------------------------------------------------
// Synthetic geometry sanity

#[test]
fn synthetic_clean_points_classify_almost_perfectly_in_ambient_space() {
    let config = SyntheticConfig {
        class_count: 4,
        dim: 128,
        n_per_class: 500,
        center_scale: 10.0,
        noise_sigma: 1.0,
        shift_fraction: 0.6,
        nonrobust_fraction: 0.25,
        seed: 3,
    };
    let (calibration, test) = generate(&config).unwrap();
    let prototypes = fit_prototypes(&calibration).unwrap();

    let clean: Vec<_> = test
        .records
        .iter()
        .filter(|r| r.truth == TruthFlag::Clean)
        .collect();
    let correct = clean
        .iter()
        .filter(|r| {
            let (label, _) =
                nearest_prototype(&r.vector_f64(), &prototypes, Metric::Euclidean).unwrap();
            Some(label) == r.class_label
        })
        .count();
    let accuracy = correct as f64 / clean.len() as f64;
    assert!(
        accuracy >= 0.99,
        "ambient clean accuracy {accuracy} below 0.99"
    );
}

// ---------------------------------------------------------------------------
// Detector file round trip

#[test]
fn detector_round_trip_restores_bit_identical_scoring() {
    let config = SyntheticConfig {
        class_count: 3,
        dim: 48,
        n_per_class: 40,
        center_scale: 8.0,
        noise_sigma: 1.0,
        shift_fraction: 0.5,
        nonrobust_fraction: 0.3,
        seed: 21,
    };
    let (calibration, test) = generate(&config).unwrap();
    let detector = Detector::calibrate(&calibration, 12, 6, 77, Metric::Euclidean, 0.6).unwrap();

    let mut path = std::env::temp_dir();
    path.push(format!("rsad-oracle-detector-{}.rsdf", std::process::id()));
    rsad::storage::write_detector(&detector, &path).unwrap();
    let loaded = rsad::storage::read_detector(&path).unwrap();

    assert_eq!(loaded.metric(), detector.metric());
    assert_eq!(loaded.alpha(), detector.alpha());
    let before = detector.score_batch(std::slice::from_ref(&test)).unwrap();
    let after = loaded.score_batch(&[test]).unwrap();
    for (a, b) in before.iter().zip(&after) {
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.consistency.to_bits(), b.consistency.to_bits());
    }

    // Corrupting the stored seed must trip the integrity check.
    let mut bytes = std::fs::read(&path).unwrap();
    let seed_offset = bytes.len() - 8 - 4 - 4 - 8; // checksum, k, M, seed
    bytes[seed_offset] ^= 0xFF;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        rsad::storage::read_detector(&path),
        Err(rsad::Error::CorruptDetector(_))
    ));
    std::fs::remove_file(&path).unwrap();
}
