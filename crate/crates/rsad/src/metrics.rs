//! Threshold-free evaluation: ROC curves and the area under them.
//!
//! Scores are anomaly scores: higher means "more adversarial". The curve is
//! built by sweeping a threshold down through the distinct score values,
//! collapsing ties into a single point; AUC is the trapezoidal area, which
//! for this construction equals the tie-corrected Mann–Whitney rank
//! statistic exactly.

use std::io::Write;

use crate::error::{Error, Result};

/// One scored sample with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScore {
    pub sample_id: String,
    /// Anomaly score; must be finite.
    pub score: f64,
    pub is_adversarial: bool,
}

/// One operating point: everything with `score >= threshold` is flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Starts at the `(+∞, 0, 0)` sentinel and ends at `(s_min, 1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// Emit the curve as CSV with header `threshold,fpr,tpr`. The sentinel
    /// threshold serializes as `inf`.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "threshold,fpr,tpr")?;
        for point in &self.points {
            writeln!(
                writer,
                "{},{},{}",
                point.threshold, point.false_positive_rate, point.true_positive_rate
            )?;
        }
        Ok(())
    }
}

/// Build the ROC curve of `scores`.
///
/// Requires at least one clean and one adversarial sample and finite scores.
/// Tied scores move the operating point diagonally in one step, which is
/// what makes the trapezoidal area handle ties exactly.
pub fn roc_curve(scores: &[LabeledScore]) -> Result<RocCurve> {
    let positives = scores.iter().filter(|s| s.is_adversarial).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassInput);
    }
    if let Some(bad) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::NonFiniteValue {
            sample_id: bad.sample_id.clone(),
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].score.total_cmp(&scores[a].score));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut cursor = 0;
    while cursor < order.len() {
        let threshold = scores[order[cursor]].score;
        // Consume the whole tie group at this threshold.
        while cursor < order.len() && scores[order[cursor]].score == threshold {
            if scores[order[cursor]].is_adversarial {
                tp += 1;
            } else {
                fp += 1;
            }
            cursor += 1;
        }
        points.push(RocPoint {
            threshold,
            false_positive_rate: fp as f64 / negatives as f64,
            true_positive_rate: tp as f64 / positives as f64,
        });
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        let dx = pair[1].false_positive_rate - pair[0].false_positive_rate;
        auc += dx * (pair[1].true_positive_rate + pair[0].true_positive_rate) / 2.0;
    }

    Ok(RocCurve { points, auc })
}

/// Area under the ROC curve of `scores`.
pub fn auc(scores: &[LabeledScore]) -> Result<f64> {
    roc_curve(scores).map(|curve| curve.auc)
}
