mod common;

use fundus_eval::evaluation::evaluate_multiclass;
use fundus_eval::metrics::{accuracy, quadratic_weighted_kappa, ConfusionMatrix};
use fundus_eval::GradingSystem;

#[test]
fn accuracy_matches_printed_summary() {
    let all = common::all_matrices();
    assert_eq!(all.len(), 15);
    for (system, size, rows, (acc, _)) in all {
        let cm = ConfusionMatrix::from_rows(rows).unwrap();
        let got = accuracy(&cm).unwrap();
        assert!((got - acc).abs() <= 0.0005, "{system} {size}: {got} vs {acc}");
    }
}

#[test]
fn pirc_kappa_matches_printed_summary() {
    for (i, m) in common::PIRC.iter().enumerate() {
        let cm = ConfusionMatrix::from_rows(common::rows(m)).unwrap();
        let got = quadratic_weighted_kappa(&cm).unwrap();
        let want = common::PIRC_SUMMARY[i].1;
        assert!((got - want).abs() <= 0.005, "PIRC {}: {got} vs {want}", common::SIZES[i]);
    }
}

#[test]
fn other_kappas_match_printed_summary() {
    for (system, size, rows, (_, kappa)) in common::all_matrices() {
        let cm = ConfusionMatrix::from_rows(rows).unwrap();
        let got = quadratic_weighted_kappa(&cm).unwrap();
        assert!((got - kappa).abs() <= 0.005, "{system} {size}: {got} vs {kappa}");
    }
}

// Expands a matrix into labels and one-hot-ish probability vectors whose
// argmax reproduces each cell.
fn injected(rows: &[Vec<u64>]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let k = rows.len();
    let mut labels = Vec::new();
    let mut probs = Vec::new();
    for (t, row) in rows.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            for i in 0..n {
                let mut v = vec![0.0; k];
                let jitter = (i % 97) as f64 / 1000.0;
                v[p] = 0.5 + jitter;
                let rest = (1.0 - v[p]) / (k - 1) as f64;
                for (j, x) in v.iter_mut().enumerate() {
                    if j != p {
                        *x = rest;
                    }
                }
                labels.push(t);
                probs.push(v);
            }
        }
    }
    (labels, probs)
}

#[test]
fn multiclass_evaluation_reproduces_pirc_2095() {
    let rows = common::rows(&common::PIRC[4]);
    let (labels, probs) = injected(&rows);
    let refs: Vec<&[f64]> = probs.iter().map(Vec::as_slice).collect();
    let report = evaluate_multiclass(GradingSystem::Pirc, "2095", &labels, &refs).unwrap();
    assert_eq!(report.confusion.rows(), rows);
    assert_eq!(format!("{:.3}", report.accuracy), "0.869");
    assert!((report.kappa - 0.910).abs() <= 0.005);
    assert_eq!(accuracy(&report.confusion).unwrap(), report.accuracy);
}
