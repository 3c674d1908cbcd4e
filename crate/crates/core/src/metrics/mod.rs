//! Statistical kernel: ROC and AUC, macro-averaged ROC, confusion matrices,
//! quadratic-weighted kappa, binary rates and confidence intervals.

mod confusion;
mod interval;
mod roc;
mod scores;

use thiserror::Error;

pub use confusion::{
    accuracy, binary_rates, confusion, quadratic_weighted_kappa, BinaryRates, ConfusionMatrix,
};
pub use interval::{
    clopper_pearson, clopper_pearson_real, cluster_bootstrap_auc, BootstrapOptions, CiMethod,
    Interval, DEFAULT_LEVEL, DEFAULT_REPLICATES,
};
pub use roc::{
    auc, auc_from_scores, macro_average, macro_roc, roc_curve, trapezoid, CurvePoint, MacroRoc,
    RocCurve, RocPoint,
};
pub use scores::{argmax, parse_scores, write_scores, ParsedScores, ScoreSet, SUM_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{} has no positive or no negative items ({n_pos} positive, {n_neg} negative)",
        class.map_or_else(|| "input".to_string(), |c| format!("class {c}")))]
    DegenerateClasses {
        class: Option<usize>,
        n_pos: u64,
        n_neg: u64,
    },
    #[error("{labels} labels but {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("score at index {index} is NaN")]
    InvalidScore { index: usize },
    #[error("{0}")]
    Range(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no {0} items in the ground truth")]
    EmptyClass(&'static str),
    #[error("expected a 2x2 matrix, got {0}x{0}")]
    NotBinary(usize),
    #[error("kappa undefined: no expected disagreement and off-diagonal mass")]
    DegenerateMarginals,
    #[error("{degenerate} of {total} bootstrap replicates lack a class")]
    DegenerateReplicates { degenerate: usize, total: usize },
    #[error("scores: {0}")]
    ScoreFormat(String),
}
