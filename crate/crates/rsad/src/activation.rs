//! Labeled activation vectors extracted from one network layer.
//!
//! An [`ActivationSet`] is the unit every pipeline stage consumes: a batch of
//! per-sample vectors from a single named layer, each carrying an optional
//! class label and a ground-truth flag. Vectors are stored as `f32` (the
//! on-disk precision); all downstream arithmetic widens to `f64`.

use crate::error::{Error, Result};

/// Ground truth attached to a record, used only for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthFlag {
    Clean,
    Adversarial,
    /// Truth unknown (e.g. field data); evaluation skips these records.
    Unknown,
}

impl TruthFlag {
    pub fn as_u8(self) -> u8 {
        match self {
            TruthFlag::Clean => 0,
            TruthFlag::Adversarial => 1,
            TruthFlag::Unknown => 2,
        }
    }

    pub fn from_u8(byte: u8) -> Result<Self> {
        match byte {
            0 => Ok(TruthFlag::Clean),
            1 => Ok(TruthFlag::Adversarial),
            2 => Ok(TruthFlag::Unknown),
            other => Err(Error::InvalidTruthFlag(other)),
        }
    }
}

/// One sample's activation vector at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub sample_id: String,
    /// Class label in `0..class_count`, or `None` when unlabeled.
    pub class_label: Option<u32>,
    pub truth: TruthFlag,
    pub vector: Vec<f32>,
}

impl ActivationRecord {
    /// Widen the stored vector to the `f64` working precision.
    pub fn vector_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&x| f64::from(x)).collect()
    }
}

/// A batch of activation records from a single layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    /// Name of the layer the vectors were extracted from.
    pub layer_id: String,
    /// Number of classes the labels are drawn from.
    pub class_count: u32,
    /// Ambient dimension of every vector in the set.
    pub dim: usize,
    pub records: Vec<ActivationRecord>,
}

impl ActivationSet {
    pub fn new(layer_id: impl Into<String>, class_count: u32, dim: usize) -> Self {
        ActivationSet {
            layer_id: layer_id.into(),
            class_count,
            dim,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Check the structural invariants: every vector has length `dim` and
    /// only finite entries, and every present label is below `class_count`.
    pub fn validate(&self) -> Result<()> {
        for record in &self.records {
            if record.vector.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: record.vector.len(),
                });
            }
            if record.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteValue {
                    sample_id: record.sample_id.clone(),
                });
            }
            if let Some(label) = record.class_label {
                if label >= self.class_count {
                    return Err(Error::LabelOutOfRange {
                        sample_id: record.sample_id.clone(),
                        label,
                        class_count: self.class_count,
                    });
                }
            }
        }
        Ok(())
    }
}
