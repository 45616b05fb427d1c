//! One error enum for the whole crate.
//!
//! Numeric preconditions fail loudly here instead of silently producing NaN:
//! every fallible operation names the invariant it refused to violate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Projection shapes must satisfy `1 <= k <= d`.
    #[error("invalid projection dimensions: k={k}, d={d} (need 1 <= k <= d)")]
    InvalidDimensions { k: usize, d: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// An input vector or score contained NaN or an infinity.
    #[error("non-finite input value")]
    NonFiniteInput,

    /// Distortion bounds are only meaningful for epsilon strictly inside (0, 1).
    #[error("epsilon {0} out of range (0, 1)")]
    EpsilonOutOfRange(f64),

    /// Every point pair coincided, so no distortion ratio could be formed.
    #[error("no distinct point pairs available for distortion check")]
    DegeneratePairs,

    #[error("class {class} has no calibration records")]
    EmptyClass { class: u32 },

    #[error("class {class} has {got} calibration records, need at least {needed}")]
    InsufficientClassRecords { class: u32, needed: usize, got: usize },

    /// Calibration must be clean; refusing to average adversarial points in.
    #[error("record '{sample_id}' is flagged adversarial and cannot be used for calibration")]
    AdversarialInCalibration { sample_id: String },

    #[error("record '{sample_id}' has no class label but calibration requires one")]
    UnlabeledCalibrationRecord { sample_id: String },

    #[error("record '{sample_id}' has class label {label} outside 0..{class_count}")]
    LabelOutOfRange {
        sample_id: String,
        label: u32,
        class_count: u32,
    },

    /// Cosine distance is undefined when either vector has zero norm.
    #[error("cosine distance undefined for zero-norm vector")]
    ZeroNormCosine,

    #[error("layer mismatch: expected '{expected}', got '{actual}'")]
    LayerMismatch { expected: String, actual: String },

    #[error("no test activations supplied for detector layer '{0}'")]
    MissingTestLayer(String),

    #[error("test activation sets are misaligned: {0}")]
    MisalignedTestSets(String),

    /// A label multiset (or layer list) was empty where at least one vote is required.
    #[error("empty label multiset")]
    EmptyLabelSet,

    #[error("alpha {0} out of range [0, 1]")]
    AlphaOutOfRange(f64),

    /// Nearest-prototype voting needs at least two classes to disagree about.
    #[error("detector requires at least 2 classes, got {0}")]
    ClassCountTooSmall(u32),

    /// The k-th neighbor sits at distance zero, so the local-dimension MLE is undefined.
    #[error("k-th neighbor radius is zero; local intrinsic dimension undefined")]
    ZeroRadius,

    #[error("need at least {needed} reference points, got {got}")]
    InsufficientReferences { needed: usize, got: usize },

    /// Pooled covariance was not positive definite even after regularization.
    #[error("covariance matrix is singular; increase the ridge term")]
    SingularCovariance,

    #[error("one-class calibration needs at least {needed} scores, got {got}")]
    TooFewScores { needed: usize, got: usize },

    /// ROC analysis needs both clean and adversarial examples present.
    #[error("scores contain only one class; ROC curve undefined")]
    SingleClassInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad magic bytes {found:?}; not an activation or detector file")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    /// The file ended before the header-declared payload did.
    #[error("truncated payload")]
    TruncatedPayload,

    #[error("trailing bytes after declared payload")]
    TrailingBytes,

    #[error("record '{sample_id}' contains a non-finite value")]
    NonFiniteValue { sample_id: String },

    #[error("record '{sample_id}' has invalid class label field {raw}")]
    InvalidLabel { sample_id: String, raw: i32 },

    #[error("invalid truth flag byte {0}")]
    InvalidTruthFlag(u8),

    /// Stored checksum disagrees with the ensemble regenerated from the seed.
    #[error("detector file failed integrity check: {0}")]
    CorruptDetector(String),

    #[error("malformed report: {0}")]
    InvalidReport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
