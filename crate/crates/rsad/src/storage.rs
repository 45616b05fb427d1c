//! On-disk formats: binary activation sets, binary detector state, and CSV
//! score reports.
//!
//! All multi-byte integers and floats are little-endian. Strings are a u32
//! byte length followed by UTF-8. Writers emit canonical bytes (no padding,
//! no optional sections), so equal values produce equal files.
//!
//! Activation file (`.rsad`):
//!
//! ```text
//! magic    4 bytes  "RSAD"
//! version  u16      1
//! flags    u16      reserved, 0
//! layer_id string
//! K        u32      class count
//! d        u32      vector dimension
//! N        u64      record count
//! then N records:
//!   sample_id string
//!   label    i32    class label, -1 = unlabeled
//!   truth    u8     0 clean / 1 adversarial / 2 unknown
//!   vector   d × f32
//! ```
//!
//! Detector file (`.rsdf`): header (magic "RSDF", version, flags, metric,
//! alpha), then per layer the prototypes verbatim (f64) and the ensemble
//! *descriptor* — master seed, M, k — rather than any matrix entries.
//! Matrices are regenerated from the seed on load; a checksum over the first
//! regenerated row catches files whose seed or dimensions were corrupted.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::activation::{ActivationRecord, ActivationSet, TruthFlag};
use crate::detector::{Detector, DetectionResult, DetectorLayer};
use crate::error::{Error, Result};
use crate::prototype::{Metric, PrototypeSet};
use crate::projection::sample_ensemble;
use crate::rng::fnv1a64;

const ACTIVATION_MAGIC: [u8; 4] = *b"RSAD";
const DETECTOR_MAGIC: [u8; 4] = *b"RSDF";
const FORMAT_VERSION: u16 = 1;

// ---------------------------------------------------------------------------
// Little-endian primitives. A premature EOF anywhere inside a declared
// payload surfaces as TruncatedPayload, not a bare io error.

fn eof_as_truncation(err: io::Error) -> Error {
    if err.kind() == io::ErrorKind::UnexpectedEof {
        Error::TruncatedPayload
    } else {
        Error::Io(err)
    }
}

fn read_array<const N: usize, R: Read>(reader: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    reader.read_exact(&mut buf).map_err(eof_as_truncation)?;
    Ok(buf)
}

fn read_u16<R: Read>(reader: &mut R) -> Result<u16> {
    Ok(u16::from_le_bytes(read_array(reader)?))
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(reader)?))
}

fn read_i32<R: Read>(reader: &mut R) -> Result<i32> {
    Ok(i32::from_le_bytes(read_array(reader)?))
}

fn read_u64<R: Read>(reader: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(reader)?))
}

fn read_f32<R: Read>(reader: &mut R) -> Result<f32> {
    Ok(f32::from_le_bytes(read_array(reader)?))
}

fn read_f64<R: Read>(reader: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(reader)?))
}

fn read_string<R: Read>(reader: &mut R) -> Result<String> {
    let len = read_u32(reader)? as usize;
    let mut buf = vec![0u8; len];
    reader.read_exact(&mut buf).map_err(eof_as_truncation)?;
    String::from_utf8(buf)
        .map_err(|e| Error::InvalidConfig(format!("non-UTF-8 string in file: {e}")))
}

fn write_string<W: Write>(writer: &mut W, s: &str) -> Result<()> {
    writer.write_all(&(s.len() as u32).to_le_bytes())?;
    writer.write_all(s.as_bytes())?;
    Ok(())
}

/// Error unless the reader is exactly at EOF.
fn expect_eof<R: Read>(reader: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match reader.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::TrailingBytes),
    }
}

// ---------------------------------------------------------------------------
// Activation sets

/// Write `set` to `path` in the binary activation format.
pub fn write_activations(set: &ActivationSet, path: &Path) -> Result<()> {
    set.validate()?;
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(&ACTIVATION_MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    writer.write_all(&0u16.to_le_bytes())?; // flags, reserved
    write_string(&mut writer, &set.layer_id)?;
    writer.write_all(&set.class_count.to_le_bytes())?;
    writer.write_all(&(set.dim as u32).to_le_bytes())?;
    writer.write_all(&(set.len() as u64).to_le_bytes())?;
    for record in &set.records {
        write_string(&mut writer, &record.sample_id)?;
        let label = match record.class_label {
            Some(l) => l as i32,
            None => -1,
        };
        writer.write_all(&label.to_le_bytes())?;
        writer.write_all(&[record.truth.as_u8()])?;
        for &value in &record.vector {
            writer.write_all(&value.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Read an activation set, verifying magic, version, payload completeness,
/// finiteness of every value, and label range.
pub fn read_activations(path: &Path) -> Result<ActivationSet> {
    let mut reader = BufReader::new(File::open(path)?);

    let magic: [u8; 4] = read_array(&mut reader)?;
    if magic != ACTIVATION_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = read_u16(&mut reader)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let _flags = read_u16(&mut reader)?;
    let layer_id = read_string(&mut reader)?;
    let class_count = read_u32(&mut reader)?;
    let dim = read_u32(&mut reader)? as usize;
    let n = read_u64(&mut reader)? as usize;

    let mut set = ActivationSet::new(layer_id, class_count, dim);
    set.records.reserve(n);
    for _ in 0..n {
        let sample_id = read_string(&mut reader)?;
        let raw_label = read_i32(&mut reader)?;
        let class_label = match raw_label {
            -1 => None,
            l if l >= 0 => Some(l as u32),
            other => {
                return Err(Error::InvalidLabel {
                    sample_id,
                    raw: other,
                })
            }
        };
        let truth = TruthFlag::from_u8(read_array::<1, _>(&mut reader)?[0])?;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            let value = read_f32(&mut reader)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteValue {
                    sample_id: sample_id.clone(),
                });
            }
            vector.push(value);
        }
        set.records.push(ActivationRecord {
            sample_id,
            class_label,
            truth,
            vector,
        });
    }
    expect_eof(&mut reader)?;
    set.validate()?;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Detector state

fn metric_to_byte(metric: Metric) -> u8 {
    match metric {
        Metric::Euclidean => 0,
        Metric::Cosine => 1,
    }
}

fn metric_from_byte(byte: u8) -> Result<Metric> {
    match byte {
        0 => Ok(Metric::Euclidean),
        1 => Ok(Metric::Cosine),
        other => Err(Error::CorruptDetector(format!("unknown metric byte {other}"))),
    }
}

/// FNV-1a over the little-endian bytes of the first row of the first
/// regenerated matrix: cheap, and any corruption of seed, k, d, or layer id
/// changes it.
fn ensemble_checksum(layer: &DetectorLayer) -> u64 {
    let row = layer.ensemble().matrices()[0].row(0);
    let mut bytes = Vec::with_capacity(row.len() * 8);
    for &value in row {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    fnv1a64(&bytes)
}

/// Persist a calibrated detector: prototypes verbatim, ensembles by seed.
pub fn write_detector(detector: &Detector, path: &Path) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(&DETECTOR_MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    writer.write_all(&0u16.to_le_bytes())?; // flags, reserved
    writer.write_all(&[metric_to_byte(detector.metric())])?;
    writer.write_all(&detector.alpha().to_le_bytes())?;
    writer.write_all(&(detector.layers().len() as u32).to_le_bytes())?;
    for layer in detector.layers() {
        let prototypes = layer.prototypes();
        write_string(&mut writer, &prototypes.layer_id)?;
        writer.write_all(&prototypes.class_count.to_le_bytes())?;
        writer.write_all(&(prototypes.dim as u32).to_le_bytes())?;
        for proto in &prototypes.prototypes {
            for &value in proto {
                writer.write_all(&value.to_le_bytes())?;
            }
        }
        for &count in &prototypes.support_counts {
            writer.write_all(&count.to_le_bytes())?;
        }
        let ensemble = layer.ensemble();
        writer.write_all(&ensemble.master_seed().to_le_bytes())?;
        writer.write_all(&(ensemble.len() as u32).to_le_bytes())?;
        writer.write_all(&(ensemble.subspace_dim() as u32).to_le_bytes())?;
        writer.write_all(&ensemble_checksum(layer).to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

/// Load a detector, regenerating each layer's ensemble from its stored seed
/// and verifying the stored checksum against the regenerated entries.
pub fn read_detector(path: &Path) -> Result<Detector> {
    let mut reader = BufReader::new(File::open(path)?);

    let magic: [u8; 4] = read_array(&mut reader)?;
    if magic != DETECTOR_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = read_u16(&mut reader)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let _flags = read_u16(&mut reader)?;
    let metric = metric_from_byte(read_array::<1, _>(&mut reader)?[0])?;
    let alpha = read_f64(&mut reader)?;
    let layer_count = read_u32(&mut reader)?;

    let mut layers = Vec::with_capacity(layer_count as usize);
    for _ in 0..layer_count {
        let layer_id = read_string(&mut reader)?;
        let class_count = read_u32(&mut reader)?;
        let dim = read_u32(&mut reader)? as usize;
        let mut prototypes = Vec::with_capacity(class_count as usize);
        for _ in 0..class_count {
            let mut proto = Vec::with_capacity(dim);
            for _ in 0..dim {
                proto.push(read_f64(&mut reader)?);
            }
            prototypes.push(proto);
        }
        let mut support_counts = Vec::with_capacity(class_count as usize);
        for _ in 0..class_count {
            support_counts.push(read_u64(&mut reader)?);
        }
        let master_seed = read_u64(&mut reader)?;
        let m = read_u32(&mut reader)? as usize;
        let k = read_u32(&mut reader)? as usize;
        let stored_checksum = read_u64(&mut reader)?;

        let prototype_set = PrototypeSet {
            layer_id: layer_id.clone(),
            class_count,
            dim,
            prototypes,
            support_counts,
        };
        let ensemble = sample_ensemble(master_seed, &layer_id, m, k, dim)?;
        let layer = DetectorLayer::new(prototype_set, ensemble)?;
        let checksum = ensemble_checksum(&layer);
        if checksum != stored_checksum {
            return Err(Error::CorruptDetector(format!(
                "layer '{layer_id}': stored ensemble checksum {stored_checksum:#018x} \
                 does not match regenerated {checksum:#018x}"
            )));
        }
        layers.push(layer);
    }
    expect_eof(&mut reader)?;
    Detector::from_layers(metric, alpha, layers)
}

// ---------------------------------------------------------------------------
// Score reports

pub const REPORT_HEADER: [&str; 5] = ["sample_id", "score", "consistency", "verdict", "truth"];

/// One row of a score report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub sample_id: String,
    /// Anomaly score in [0, 1]; higher = more adversarial.
    pub score: f64,
    /// Agreement statistic in [0, 1]; higher = more consistent/clean.
    pub consistency: f64,
    pub verdict: bool,
    pub truth: TruthFlag,
}

/// Pair batch detection results with the truth flags of the test set they
/// were scored from.
pub fn report_rows(results: &[DetectionResult], test: &ActivationSet) -> Result<Vec<ReportRow>> {
    if results.len() != test.len() {
        return Err(Error::MisalignedTestSets(format!(
            "{} results for {} test records",
            results.len(),
            test.len()
        )));
    }
    results
        .iter()
        .zip(&test.records)
        .map(|(result, record)| {
            if result.sample_id != record.sample_id {
                return Err(Error::MisalignedTestSets(format!(
                    "result '{}' does not match record '{}'",
                    result.sample_id, record.sample_id
                )));
            }
            Ok(ReportRow {
                sample_id: result.sample_id.clone(),
                score: result.adversarial_score,
                consistency: result.consistency,
                verdict: result.verdict,
                truth: record.truth,
            })
        })
        .collect()
}

/// Write rows as CSV with the canonical header. Floats are serialized as
/// their shortest round-trip decimal form, so output is deterministic and
/// `read_report` recovers bit-identical values.
pub fn write_report<W: Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(REPORT_HEADER)?;
    for row in rows {
        csv_writer.write_record([
            row.sample_id.as_str(),
            &row.score.to_string(),
            &row.consistency.to_string(),
            if row.verdict { "1" } else { "0" },
            &row.truth.as_u8().to_string(),
        ])?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// Read a score report written by [`write_report`].
pub fn read_report<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(Error::InvalidReport(format!(
            "unexpected header '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in csv_reader.records() {
        let record = record?;
        if record.len() != REPORT_HEADER.len() {
            return Err(Error::InvalidReport(format!(
                "row has {} fields, expected {}",
                record.len(),
                REPORT_HEADER.len()
            )));
        }
        let parse_f64 = |field: &str, name: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|e| Error::InvalidReport(format!("bad {name} '{field}': {e}")))
        };
        let verdict = match &record[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::InvalidReport(format!("bad verdict '{other}'")))
            }
        };
        let truth_byte: u8 = record[4]
            .parse()
            .map_err(|e| Error::InvalidReport(format!("bad truth '{}': {e}", &record[4])))?;
        rows.push(ReportRow {
            sample_id: record[0].to_string(),
            score: parse_f64(&record[1], "score")?,
            consistency: parse_f64(&record[2], "consistency")?,
            verdict,
            truth: TruthFlag::from_u8(truth_byte)?,
        });
    }
    Ok(rows)
}
