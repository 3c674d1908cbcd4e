//! ROC curves with tie-merged steps, trapezoidal AUC and vertically averaged
//! macro ROC.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// One operating point: items scoring `>= threshold` are called positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub tp: u64,
    pub fp: u64,
}

/// ROC curve of a binary scorer.
///
/// The first point has threshold `+inf` and sits at (0, 0); every distinct
/// score adds one point, so the last point is (1, 1). Thresholds are
/// strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_pos: u64,
    pub n_neg: u64,
}

/// A bare (fpr, tpr) vertex, used for averaged curves and plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fpr: f64,
    pub tpr: f64,
}

pub(crate) fn check_scores(labels: &[bool], scores: &[f64]) -> Result<(), MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(MetricsError::InvalidScore { index: i });
    }
    Ok(())
}

fn sorted_desc(labels: &[bool], scores: &[f64]) -> Vec<(f64, bool)> {
    let mut items: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    items.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    items
}

fn class_counts(labels: &[bool]) -> Result<(u64, u64), MetricsError> {
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateClasses {
            class: None,
            n_pos,
            n_neg,
        });
    }
    Ok((n_pos, n_neg))
}

pub fn roc_curve(labels: &[bool], scores: &[f64]) -> Result<RocCurve, MetricsError> {
    check_scores(labels, scores)?;
    let (n_pos, n_neg) = class_counts(labels)?;
    let items = sorted_desc(labels, scores);

    let mut points = Vec::with_capacity(items.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
        tp: 0,
        fp: 0,
    });
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < items.len() {
        let threshold = items[i].0;
        while i < items.len() && items[i].0 == threshold {
            if items[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            tp,
            fp,
        });
    }
    Ok(RocCurve {
        points,
        n_pos,
        n_neg,
    })
}

impl RocCurve {
    pub fn vertices(&self) -> Vec<CurvePoint> {
        self.points
            .iter()
            .map(|p| CurvePoint {
                fpr: p.fpr,
                tpr: p.tpr,
            })
            .collect()
    }
}

/// Trapezoidal area under the curve.
///
/// Accumulated on the integer counts, so with tie-merged steps the result is
/// exactly the Mann-Whitney statistic `P(s+ > s-) + P(s+ = s-)/2`.
pub fn auc(curve: &RocCurve) -> f64 {
    let twice_area: u128 = curve
        .points
        .windows(2)
        .map(|w| (w[1].fp - w[0].fp) as u128 * (w[1].tp + w[0].tp) as u128)
        .sum();
    twice_area as f64 / (2 * curve.n_pos as u128 * curve.n_neg as u128) as f64
}

/// AUC straight from labels and scores, without materializing the curve.
pub fn auc_from_scores(labels: &[bool], scores: &[f64]) -> Result<f64, MetricsError> {
    check_scores(labels, scores)?;
    let (n_pos, n_neg) = class_counts(labels)?;
    let items = sorted_desc(labels, scores);
    Ok(sweep_auc(&items, n_pos, n_neg))
}

// `items` sorted by descending score.
pub(crate) fn sweep_auc(items: &[(f64, bool)], n_pos: u64, n_neg: u64) -> f64 {
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < items.len() {
        let threshold = items[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < items.len() && items[i].0 == threshold {
            if items[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) as u128 * (tp + tp0) as u128;
    }
    twice_area as f64 / (2 * n_pos as u128 * n_neg as u128) as f64
}

/// Vertically averaged one-vs-all ROC.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroRoc {
    pub per_class: Vec<RocCurve>,
    pub per_class_auc: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub auc: f64,
}

/// Builds one-vs-all curves for every class and averages them.
pub fn macro_roc(per_class: &[(Vec<bool>, Vec<f64>)]) -> Result<MacroRoc, MetricsError> {
    if per_class.len() < 2 {
        return Err(MetricsError::Range(format!(
            "macro ROC needs at least 2 classes, got {}",
            per_class.len()
        )));
    }
    let curves = per_class
        .iter()
        .enumerate()
        .map(|(c, (labels, scores))| {
            roc_curve(labels, scores).map_err(|e| match e {
                MetricsError::DegenerateClasses { n_pos, n_neg, .. } => {
                    MetricsError::DegenerateClasses {
                        class: Some(c),
                        n_pos,
                        n_neg,
                    }
                }
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(macro_average(curves))
}

/// Averages TPR over the union of all FPR breakpoints.
///
/// At an FPR where some curve has a vertical step the averaged curve gets
/// two vertices, the mean of the lower ends and the mean of the upper ends,
/// so steps survive averaging. Between breakpoints each curve is linear.
pub fn macro_average(curves: Vec<RocCurve>) -> MacroRoc {
    let mut grid: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.fpr))
        .collect();
    grid.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    grid.dedup();

    let k = curves.len() as f64;
    let mut low = vec![0.0; grid.len()];
    let mut high = vec![0.0; grid.len()];
    for curve in &curves {
        let pts = &curve.points;
        let mut j = 0;
        for (g, &x) in grid.iter().enumerate() {
            while pts[j].fpr < x {
                j += 1;
            }
            let (lo, hi) = if pts[j].fpr == x {
                let mut last = j;
                while last + 1 < pts.len() && pts[last + 1].fpr == x {
                    last += 1;
                }
                (pts[j].tpr, pts[last].tpr)
            } else {
                let (a, b) = (pts[j - 1], pts[j]);
                let t = (x - a.fpr) / (b.fpr - a.fpr);
                let v = a.tpr + t * (b.tpr - a.tpr);
                (v, v)
            };
            low[g] += lo;
            high[g] += hi;
        }
    }

    let mut curve = Vec::with_capacity(2 * grid.len());
    for (g, &x) in grid.iter().enumerate() {
        let (lo, hi) = (low[g] / k, high[g] / k);
        curve.push(CurvePoint { fpr: x, tpr: lo });
        if hi > lo {
            curve.push(CurvePoint { fpr: x, tpr: hi });
        }
    }
    let auc_value = trapezoid(&curve);
    let per_class_auc = curves.iter().map(auc).collect();
    MacroRoc {
        per_class: curves,
        per_class_auc,
        curve,
        auc: auc_value,
    }
}

pub fn trapezoid(curve: &[CurvePoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}
