//! Seeded Gaussian random projections and their distortion diagnostics.
//!
//! A projection matrix maps the ambient activation space R^d into a random
//! k-dimensional subspace: `ẑ = R z`, with every entry of `R` drawn i.i.d.
//! standard normal from a keyed counter stream. Matrices are identified by
//! `(seed, index)` alone and regenerated on demand — files persist seeds,
//! never entries — so storage stays small and reload is bit-exact.
//!
//! The usual subspace-embedding guarantee applies: for `n` points and
//! distortion budget `eps`, a target dimension of `8 ln(n) / eps^2` keeps all
//! pairwise squared distances within `1 ± eps` after the `1/k` normalization,
//! with high probability. [`jl_distortion_check`] measures this empirically
//! for a concrete point set and matrix.

use crate::error::{Error, Result};
use crate::rng::{fnv1a64, stream_normal};

/// A dense k×d random projection, regenerable from `(seed, index)`.
///
/// Entries are stored row-major in `f64`. Construction via [`generate`]
/// guarantees `1 <= k <= d` and finite entries.
///
/// [`generate`]: ProjectionMatrix::generate
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    seed: u64,
    index: u32,
}

impl ProjectionMatrix {
    /// Sample the `index`-th matrix of the stream keyed by `seed`.
    ///
    /// Entry `(i, j)` is the standard-normal draw at stream position
    /// `i*d + j` of the key `seed ^ index`, so any entry can be regenerated
    /// independently and matrices with the same identity are always
    /// bit-identical.
    pub fn generate(seed: u64, index: u32, k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 || k > d {
            return Err(Error::InvalidDimensions { k, d });
        }
        let key = seed ^ u64::from(index);
        let entries = (0..k * d)
            .map(|position| stream_normal(key, position as u64))
            .collect();
        Ok(ProjectionMatrix {
            rows: k,
            cols: d,
            entries,
            seed,
            index,
        })
    }

    /// Build a matrix from explicit entries (row-major).
    ///
    /// Intended for constructed probes — coordinate selectors, isometries —
    /// in tests and audits. Such a matrix carries no seed identity and
    /// cannot participate in a persisted ensemble.
    pub fn from_entries(entries: Vec<f64>, k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 || k > d {
            return Err(Error::InvalidDimensions { k, d });
        }
        if entries.len() != k * d {
            return Err(Error::DimensionMismatch {
                expected: k * d,
                actual: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(ProjectionMatrix {
            rows: k,
            cols: d,
            entries,
            seed: 0,
            index: 0,
        })
    }

    /// Subspace dimension k.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Ambient dimension d.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    /// Row `i` as a contiguous slice of length d.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// An ordered family of M projections for one layer, identified by a master
/// seed.
///
/// Matrix `m` is `ProjectionMatrix::generate(master_seed ^ fnv1a64(layer_id),
/// m, k, d)`: the layer name is folded into the key so different layers get
/// independent ensembles from the same master seed. Ensembles are only
/// constructible through [`sample_ensemble`], which is what lets detector
/// files persist `(master_seed, M, k)` instead of M·k·d floats.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionEnsemble {
    layer_id: String,
    master_seed: u64,
    matrices: Vec<ProjectionMatrix>,
}

impl ProjectionEnsemble {
    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Ensemble size M.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Subspace dimension k, shared by all members.
    pub fn subspace_dim(&self) -> usize {
        self.matrices[0].rows()
    }

    /// Ambient dimension d, shared by all members.
    pub fn ambient_dim(&self) -> usize {
        self.matrices[0].cols()
    }

    pub fn matrices(&self) -> &[ProjectionMatrix] {
        &self.matrices
    }
}

/// Sample the M-member ensemble for `layer_id` under `master_seed`.
pub fn sample_ensemble(
    master_seed: u64,
    layer_id: &str,
    m: usize,
    k: usize,
    d: usize,
) -> Result<ProjectionEnsemble> {
    if m == 0 {
        return Err(Error::InvalidConfig(
            "ensemble size M must be at least 1".into(),
        ));
    }
    let layer_key = master_seed ^ fnv1a64(layer_id.as_bytes());
    let matrices = (0..m)
        .map(|index| ProjectionMatrix::generate(layer_key, index as u32, k, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionEnsemble {
        layer_id: layer_id.to_string(),
        master_seed,
        matrices,
    })
}

/// Apply the projection: `ẑ = R z`, accumulated in `f64`.
///
/// No `1/sqrt(k)` rescaling is applied; nearest-prototype comparisons are
/// scale-free and the distortion checker normalizes explicitly.
pub fn project(matrix: &ProjectionMatrix, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != matrix.cols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.cols(),
            actual: z.len(),
        });
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok((0..matrix.rows())
        .map(|i| {
            matrix
                .row(i)
                .iter()
                .zip(z)
                .fold(0.0, |acc, (r, x)| acc + r * x)
        })
        .collect())
}

/// Empirical distortion profile of one matrix over one point set.
#[derive(Debug, Clone)]
pub struct DistortionReport {
    pub epsilon: f64,
    /// Distinct (unordered) pairs that entered the ratio statistics.
    pub pair_count: usize,
    /// Coincident pairs that were skipped.
    pub degenerate_pairs: usize,
    /// Fraction of pairs whose normalized ratio landed in `[1-eps, 1+eps]`.
    pub within_bound_fraction: f64,
    pub min_ratio: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    /// Dimension `ceil(8 ln(n) / eps^2)` sufficient for this point count.
    pub required_dim: usize,
}

/// Measure squared-distance distortion of `matrix` over all point pairs.
///
/// The per-pair statistic is `‖R z_i − R z_j‖² / (k · ‖z_i − z_j‖²)`; the
/// `1/k` factor makes 1.0 the ideal value. Coincident pairs are skipped and
/// counted separately; if every pair coincides there is nothing to measure
/// and the call fails.
pub fn jl_distortion_check(
    points: &[Vec<f64>],
    matrix: &ProjectionMatrix,
    epsilon: f64,
) -> Result<DistortionReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let projected = points
        .iter()
        .map(|p| project(matrix, p))
        .collect::<Result<Vec<_>>>()?;

    let k = matrix.rows() as f64;
    let mut pair_count = 0usize;
    let mut degenerate = 0usize;
    let mut within = 0usize;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut ratio_sum = 0.0;

    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let ambient = squared_distance(&points[i], &points[j]);
            if ambient == 0.0 {
                degenerate += 1;
                continue;
            }
            let ratio = squared_distance(&projected[i], &projected[j]) / (k * ambient);
            pair_count += 1;
            ratio_sum += ratio;
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
            if ((1.0 - epsilon)..=(1.0 + epsilon)).contains(&ratio) {
                within += 1;
            }
        }
    }

    if pair_count == 0 {
        return Err(Error::DegeneratePairs);
    }

    let n = points.len() as f64;
    Ok(DistortionReport {
        epsilon,
        pair_count,
        degenerate_pairs: degenerate,
        within_bound_fraction: within as f64 / pair_count as f64,
        min_ratio,
        mean_ratio: ratio_sum / pair_count as f64,
        max_ratio,
        required_dim: (8.0 * n.ln() / (epsilon * epsilon)).ceil() as usize,
    })
}

fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b))
}

/// Row-geometry summary of one matrix: Gaussian rows should be near-orthogonal
/// with squared norm concentrating around d.
#[derive(Debug, Clone, Copy)]
pub struct RowAudit {
    /// Mean inner product over unordered distinct row pairs (0.0 when k = 1).
    pub mean_row_inner_product: f64,
    /// Mean squared Euclidean norm over rows.
    pub mean_row_sq_norm: f64,
}

pub fn orthogonality_audit(matrix: &ProjectionMatrix) -> RowAudit {
    let k = matrix.rows();
    let mut norm_sum = 0.0;
    for i in 0..k {
        let row = matrix.row(i);
        norm_sum += row.iter().fold(0.0, |acc, x| acc + x * x);
    }
    let mut inner_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            inner_sum += matrix
                .row(i)
                .iter()
                .zip(matrix.row(j))
                .fold(0.0, |acc, (a, b)| acc + a * b);
            pairs += 1;
        }
    }
    RowAudit {
        mean_row_inner_product: if pairs == 0 { 0.0 } else { inner_sum / pairs as f64 },
        mean_row_sq_norm: norm_sum / k as f64,
    }
}
