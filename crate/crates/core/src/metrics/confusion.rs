use serde::{Deserialize, Serialize};

use super::MetricsError;

/// K x K counts, rows = ground truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u64>>", into = "Vec<Vec<u64>>")]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(MetricsError::Range("confusion matrix rows must be square".into()));
        }
        Ok(Self {
            k,
            counts: rows.into_iter().flatten().collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.k).map(|j| self.get(truth, j)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, predicted)).sum()
    }

    fn is_diagonal(&self) -> bool {
        (0..self.k).all(|i| (0..self.k).all(|j| i == j || self.get(i, j) == 0))
    }
}

impl TryFrom<Vec<Vec<u64>>> for ConfusionMatrix {
    type Error = MetricsError;

    fn try_from(rows: Vec<Vec<u64>>) -> Result<Self, Self::Error> {
        Self::from_rows(rows)
    }
}

impl From<ConfusionMatrix> for Vec<Vec<u64>> {
    fn from(cm: ConfusionMatrix) -> Self {
        cm.rows()
    }
}

pub fn confusion(
    labels: &[usize],
    predictions: &[usize],
    k: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            scores: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&t, &p) in labels.iter().zip(predictions) {
        if t >= k || p >= k {
            return Err(MetricsError::Range(format!(
                "class pair ({t}, {p}) outside 0..{k}"
            )));
        }
        cm.counts[t * k + p] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryRates {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

/// Rates of a 2 x 2 matrix with class 1 as the positive class.
pub fn binary_rates(cm: &ConfusionMatrix) -> Result<BinaryRates, MetricsError> {
    if cm.k() != 2 {
        return Err(MetricsError::NotBinary(cm.k()));
    }
    let (tn, fp, fneg, tp) = (cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1));
    if tp + fneg == 0 {
        return Err(MetricsError::EmptyClass("positive"));
    }
    if tn + fp == 0 {
        return Err(MetricsError::EmptyClass("negative"));
    }
    Ok(BinaryRates {
        sensitivity: tp as f64 / (tp + fneg) as f64,
        specificity: tn as f64 / (tn + fp) as f64,
        accuracy: (tp + tn) as f64 / cm.total() as f64,
    })
}

/// Cohen's kappa with quadratic weights `(i - j)^2 / (K - 1)^2`.
///
/// When the chance-expected disagreement is zero the statistic is defined as
/// 1 for a diagonal matrix and is an error otherwise.
pub fn quadratic_weighted_kappa(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let k = cm.k();
    if k < 2 {
        return Err(MetricsError::Range(format!("kappa needs K >= 2, got {k}")));
    }
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = total as f64;
    let scale = ((k - 1) * (k - 1)) as f64;
    let rows: Vec<f64> = (0..k).map(|i| cm.row_sum(i) as f64).collect();
    let cols: Vec<f64> = (0..k).map(|j| cm.col_sum(j) as f64).collect();
    let (mut observed, mut expected) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let d = i as f64 - j as f64;
            let w = d * d / scale;
            observed += w * cm.get(i, j) as f64;
            expected += w * rows[i] * cols[j] / n;
        }
    }
    if expected == 0.0 {
        return if cm.is_diagonal() {
            Ok(1.0)
        } else {
            Err(MetricsError::DegenerateMarginals)
        };
    }
    Ok(1.0 - observed / expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_confusion() {
        let l = [0, 1, 2, 2, 1];
        let cm = confusion(&l, &l, 3).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        assert_eq!(quadratic_weighted_kappa(&cm).unwrap(), 1.0);
    }

    #[test]
    fn single_off_diagonal() {
        let cm = confusion(&[2], &[0], 3).unwrap();
        assert_eq!(cm.get(2, 0), 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn order_invariance() {
        let l = [0, 1, 2, 0, 1, 2, 2];
        let p = [0, 2, 2, 1, 1, 0, 2];
        let a = confusion(&l, &p, 3).unwrap();
        let mut idx: Vec<usize> = (0..l.len()).rev().collect();
        idx.rotate_left(3);
        let l2: Vec<usize> = idx.iter().map(|&i| l[i]).collect();
        let p2: Vec<usize> = idx.iter().map(|&i| p[i]).collect();
        assert_eq!(a, confusion(&l2, &p2, 3).unwrap());
    }

    #[test]
    fn confusion_range_error() {
        assert!(matches!(confusion(&[3], &[0], 3), Err(MetricsError::Range(_))));
        assert!(matches!(confusion(&[0], &[0, 1], 3), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn binary_rate_arithmetic() {
        let cm = ConfusionMatrix::from_rows(vec![vec![90, 10], vec![5, 95]]).unwrap();
        let r = binary_rates(&cm).unwrap();
        assert!((r.sensitivity - 0.95).abs() < 1e-15);
        assert!((r.specificity - 0.90).abs() < 1e-15);
        assert!((r.accuracy - 0.925).abs() < 1e-15);

        let perfect = ConfusionMatrix::from_rows(vec![vec![3, 0], vec![0, 4]]).unwrap();
        let r = binary_rates(&perfect).unwrap();
        assert_eq!((r.sensitivity, r.specificity, r.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn binary_rates_reconstructed_rdr_counts() {
        // TN, FP / FN, TP of the largest-input RDR row.
        let cm = ConfusionMatrix::from_rows(vec![vec![3926, 105], vec![321, 2766]]).unwrap();
        let r = binary_rates(&cm).unwrap();
        assert_eq!(format!("{:.3}", r.sensitivity), "0.896");
        assert_eq!(format!("{:.3}", r.specificity), "0.974");
        assert_eq!(format!("{:.3}", r.accuracy), "0.940");
    }

    #[test]
    fn binary_rate_errors() {
        let three = ConfusionMatrix::zeros(3);
        assert!(matches!(binary_rates(&three), Err(MetricsError::NotBinary(3))));
        let no_pos = ConfusionMatrix::from_rows(vec![vec![3, 1], vec![0, 0]]).unwrap();
        assert!(matches!(binary_rates(&no_pos), Err(MetricsError::EmptyClass("positive"))));
        assert!(matches!(accuracy(&three), Err(MetricsError::EmptyMatrix)));
    }

    #[test]
    fn kappa_chance_level() {
        let cm = ConfusionMatrix::from_rows(vec![vec![25, 25], vec![25, 25]]).unwrap();
        assert_eq!(quadratic_weighted_kappa(&cm).unwrap(), 0.0);
    }

    #[test]
    fn kappa_degenerate_marginals() {
        // All mass in one cell: no expected disagreement, diagonal -> 1.
        let one = ConfusionMatrix::from_rows(vec![vec![0, 0], vec![0, 9]]).unwrap();
        assert_eq!(quadratic_weighted_kappa(&one).unwrap(), 1.0);
        assert!(quadratic_weighted_kappa(&ConfusionMatrix::zeros(2)).is_err());
        assert!(quadratic_weighted_kappa(&ConfusionMatrix::zeros(1)).is_err());
    }

    #[test]
    fn kappa_hand_computed() {
        // K = 3, weights 0, 1/4, 1. O = [[2,1,0],[0,1,1],[1,0,2]], n = 8.
        // rows (3,2,3), cols (3,2,3).
        // sum w*O = 1/4 + 1/4 + 1 = 1.5
        // sum w*E = (1/8) * [1/4*(3*2+2*3+2*3+3*2) + 1*(3*3+3*3)] = 3
        let cm = ConfusionMatrix::from_rows(vec![vec![2, 1, 0], vec![0, 1, 1], vec![1, 0, 2]])
            .unwrap();
        assert!((quadratic_weighted_kappa(&cm).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn serde_as_rows() {
        let cm = ConfusionMatrix::from_rows(vec![vec![1, 2], vec![3, 4]]).unwrap();
        let json = serde_json::to_string(&cm).unwrap();
        assert_eq!(json, "[[1,2],[3,4]]");
        assert_eq!(serde_json::from_str::<ConfusionMatrix>(&json).unwrap(), cm);
        assert!(serde_json::from_str::<ConfusionMatrix>("[[1,2],[3]]").is_err());
    }

    proptest! {
        #[test]
        fn kappa_invariant_under_class_reversal(
            cells in proptest::collection::vec(0u64..50, 16)
        ) {
            let rows: Vec<Vec<u64>> = cells.chunks(4).map(<[u64]>::to_vec).collect();
            let cm = ConfusionMatrix::from_rows(rows.clone()).unwrap();
            let reversed: Vec<Vec<u64>> = rows
                .iter()
                .rev()
                .map(|r| r.iter().rev().copied().collect())
                .collect();
            let rc = ConfusionMatrix::from_rows(reversed).unwrap();
            match (quadratic_weighted_kappa(&cm), quadratic_weighted_kappa(&rc)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }

        #[test]
        fn kappa_bounded(cells in proptest::collection::vec(0u64..30, 9)) {
            let rows: Vec<Vec<u64>> = cells.chunks(3).map(<[u64]>::to_vec).collect();
            let cm = ConfusionMatrix::from_rows(rows).unwrap();
            if let Ok(k) = quadratic_weighted_kappa(&cm) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
            }
        }
    }
}
