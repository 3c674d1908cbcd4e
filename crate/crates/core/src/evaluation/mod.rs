//! Operating-point selection on the tuning set, binary and multiclass
//! evaluation on the validation set, and report rendering.

mod render;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grading::{GradingSystem, LabeledRecord};
use crate::metrics::{
    accuracy, argmax, auc, binary_rates, clopper_pearson, clopper_pearson_real, cluster_bootstrap_auc,
    confusion, macro_roc, quadratic_weighted_kappa, roc_curve, BootstrapOptions, ConfusionMatrix,
    CurvePoint, Interval, MetricsError, RocCurve, ScoreSet, DEFAULT_LEVEL,
};
use crate::split::Set;

pub use render::{render_report, Formats, Report};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{set} set: {source}")]
    Metrics {
        set: &'static str,
        #[source]
        source: MetricsError,
    },
    #[error("{0}")]
    Range(String),
    #[error("{0} is not a binary grading system")]
    NotBinary(GradingSystem),
    #[error("{set} set: {missing} images have no scores (first: {first:?})")]
    MissingScores {
        set: &'static str,
        missing: usize,
        first: String,
    },
    #[error("scores carry {found} classes, {system} needs {expected}")]
    ClassCount {
        system: GradingSystem,
        found: usize,
        expected: usize,
    },
    #[error("{set} set is empty")]
    EmptySet { set: &'static str },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn in_set(set: &'static str) -> impl Fn(MetricsError) -> EvalError {
    move |source| EvalError::Metrics { set, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    TargetSensitivity,
    TargetSpecificity,
}

mod threshold_repr {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            Repr::Finite(*x)
        } else if *x > 0.0 {
            Repr::Named("inf".into())
        } else {
            Repr::Named("-inf".into())
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(x) => Ok(x),
            Repr::Named(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Named(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Named(s) => Err(serde::de::Error::custom(format!("bad threshold {s:?}"))),
        }
    }
}

/// Decision threshold chosen on the tuning set. Scores at or above the
/// threshold are called positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    #[serde(with = "threshold_repr")]
    pub threshold: f64,
    pub criterion: Criterion,
    pub target: f64,
    pub tuning_sensitivity: f64,
    pub tuning_specificity: f64,
    /// The point calls everything positive or everything negative.
    pub trivial: bool,
}

/// Picks the threshold whose tuning sensitivity (or specificity) is the
/// smallest value not below `target`; ties go to the higher specificity
/// (or sensitivity).
pub fn select_operating_point(
    curve: &RocCurve,
    criterion: Criterion,
    target: f64,
) -> Result<OperatingPoint, EvalError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(EvalError::Range(format!("target {target} outside [0, 1]")));
    }
    let (p, n) = (curve.n_pos, curve.n_neg);
    // Integer requirements avoid float comparisons against the target.
    let point = match criterion {
        Criterion::TargetSensitivity => {
            let need = ((target * p as f64) - 1e-9).ceil().max(0.0) as u64;
            let tp = curve.points.iter().map(|q| q.tp).filter(|&tp| tp >= need).min();
            curve.points.iter().find(|q| Some(q.tp) == tp)
        }
        Criterion::TargetSpecificity => {
            let need_tn = ((target * n as f64) - 1e-9).ceil().max(0.0) as u64;
            let max_fp = n - need_tn.min(n);
            let fp = curve.points.iter().map(|q| q.fp).filter(|&fp| fp <= max_fp).max();
            curve.points.iter().rev().find(|q| Some(q.fp) == fp)
        }
    }
    .ok_or_else(|| EvalError::Range(format!("target {target} unattainable")))?;
    Ok(OperatingPoint {
        threshold: point.threshold,
        criterion,
        target,
        tuning_sensitivity: point.tp as f64 / p as f64,
        tuning_specificity: (n - point.fp) as f64 / n as f64,
        trivial: (point.tp == p && point.fp == n) || (point.tp == 0 && point.fp == 0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AucCi {
    /// Clopper-Pearson on AUC * n successes out of n validation images.
    Proportion,
    ClusterBootstrap(BootstrapOptions),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryOptions {
    pub criterion: Criterion,
    pub target: f64,
    pub level: f64,
    pub auc_ci: AucCi,
}

impl Default for BinaryOptions {
    fn default() -> Self {
        Self {
            criterion: Criterion::TargetSensitivity,
            target: 0.9,
            level: DEFAULT_LEVEL,
            auc_ci: AucCi::Proportion,
        }
    }
}

/// Labels, scores and patient ids of one set.
#[derive(Debug, Clone, Copy)]
pub struct BinarySet<'a> {
    pub labels: &'a [bool],
    pub scores: &'a [f64],
    pub groups: Option<&'a [String]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub system: GradingSystem,
    pub input_size: String,
    pub n: u64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub auc: f64,
    pub auc_ci: Interval,
    pub sensitivity: f64,
    pub sensitivity_ci: Interval,
    pub specificity: f64,
    pub specificity_ci: Interval,
    pub accuracy: f64,
    pub accuracy_ci: Interval,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub operating_point: OperatingPoint,
    pub tuning_auc: f64,
    pub roc: Vec<CurvePoint>,
}

/// Freezes an operating point on `tuning` and measures `validation` at it.
pub fn evaluate_binary(
    system: GradingSystem,
    input_size: &str,
    tuning: BinarySet<'_>,
    validation: BinarySet<'_>,
    options: &BinaryOptions,
) -> Result<BinaryReport, EvalError> {
    if !system.is_binary() {
        return Err(EvalError::NotBinary(system));
    }
    let tuning_curve = roc_curve(tuning.labels, tuning.scores).map_err(in_set("tuning"))?;
    let op = select_operating_point(&tuning_curve, options.criterion, options.target)?;

    let curve = roc_curve(validation.labels, validation.scores).map_err(in_set("validation"))?;
    let auc_value = auc(&curve);
    let preds: Vec<usize> = validation
        .scores
        .iter()
        .map(|&s| usize::from(s >= op.threshold))
        .collect();
    let truth: Vec<usize> = validation.labels.iter().map(|&l| usize::from(l)).collect();
    let cm = confusion(&truth, &preds, 2).map_err(in_set("validation"))?;
    let rates = binary_rates(&cm).map_err(in_set("validation"))?;
    let (tn, fp, fn_, tp) = (cm.get(0, 0), cm.get(0, 1), cm.get(1, 0), cm.get(1, 1));
    let (n_pos, n_neg) = (tp + fn_, tn + fp);
    let n = n_pos + n_neg;
    let level = options.level;
    let cp = |k, n| clopper_pearson(k, n, level).map_err(in_set("validation"));

    let auc_ci = match options.auc_ci {
        AucCi::Proportion => clopper_pearson_real(auc_value * n as f64, n as f64, level)
            .map_err(in_set("validation"))?,
        AucCi::ClusterBootstrap(boot) => {
            let groups = validation.groups.ok_or_else(|| {
                EvalError::Range("cluster bootstrap needs patient ids".into())
            })?;
            let mut ci = cluster_bootstrap_auc(
                validation.labels,
                validation.scores,
                groups,
                &BootstrapOptions { level, ..boot },
            )
            .map_err(in_set("validation"))?;
            ci.lo = ci.lo.min(auc_value);
            ci.hi = ci.hi.max(auc_value);
            ci
        }
    };

    Ok(BinaryReport {
        system,
        input_size: input_size.to_string(),
        n,
        n_pos,
        n_neg,
        auc: auc_value,
        auc_ci,
        sensitivity: rates.sensitivity,
        sensitivity_ci: cp(tp, n_pos)?,
        specificity: rates.specificity,
        specificity_ci: cp(tn, n_neg)?,
        accuracy: rates.accuracy,
        accuracy_ci: cp(tp + tn, n)?,
        tp,
        fp,
        tn,
        fn_,
        operating_point: op,
        tuning_auc: auc(&tuning_curve),
        roc: curve.vertices(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassReport {
    pub system: GradingSystem,
    pub input_size: String,
    pub n: u64,
    pub class_names: Vec<String>,
    pub macro_auc: f64,
    pub per_class_auc: Vec<f64>,
    pub accuracy: f64,
    pub kappa: f64,
    pub confusion: ConfusionMatrix,
    pub per_class_roc: Vec<Vec<CurvePoint>>,
    pub macro_roc: Vec<CurvePoint>,
}

/// One-vs-all macro ROC, argmax confusion matrix, accuracy and quadratic
/// weighted kappa of probability vectors against integer labels.
pub fn evaluate_multiclass(
    system: GradingSystem,
    input_size: &str,
    labels: &[usize],
    probs: &[&[f64]],
) -> Result<MulticlassReport, EvalError> {
    let k = system.num_classes();
    if labels.len() != probs.len() {
        return Err(in_set("validation")(MetricsError::LengthMismatch {
            labels: labels.len(),
            scores: probs.len(),
        }));
    }
    if let Some(p) = probs.iter().find(|p| p.len() != k) {
        return Err(EvalError::ClassCount {
            system,
            found: p.len(),
            expected: k,
        });
    }
    let one_vs_all: Vec<(Vec<bool>, Vec<f64>)> = (0..k)
        .map(|c| {
            (
                labels.iter().map(|&y| y == c).collect(),
                probs.iter().map(|p| p[c]).collect(),
            )
        })
        .collect();
    let roc = macro_roc(&one_vs_all).map_err(in_set("validation"))?;
    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let cm = confusion(labels, &preds, k).map_err(in_set("validation"))?;
    Ok(MulticlassReport {
        system,
        input_size: input_size.to_string(),
        n: labels.len() as u64,
        class_names: system.class_names().iter().map(|s| s.to_string()).collect(),
        macro_auc: roc.auc,
        per_class_auc: roc.per_class_auc.clone(),
        accuracy: accuracy(&cm).map_err(in_set("validation"))?,
        kappa: quadratic_weighted_kappa(&cm).map_err(in_set("validation"))?,
        confusion: cm,
        per_class_roc: roc.per_class.iter().map(RocCurve::vertices).collect(),
        macro_roc: roc.curve,
    })
}

/// Records of one set joined with their scores, ordered by image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SetData {
    pub image_ids: Vec<String>,
    pub patient_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

impl SetData {
    pub fn binary_labels(&self) -> Vec<bool> {
        self.labels.iter().map(|&y| y == 1).collect()
    }

    /// Probability of class 1.
    pub fn positive_scores(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p[1]).collect()
    }

    pub fn prob_refs(&self) -> Vec<&[f64]> {
        self.probs.iter().map(Vec::as_slice).collect()
    }
}

/// Collects the records assigned to `set` together with their scores.
/// Every such record must have scores.
pub fn gather(
    records: &[LabeledRecord],
    sets: &BTreeMap<String, Set>,
    scores: &ScoreSet,
    set: Set,
) -> Result<SetData, EvalError> {
    let name = match set {
        Set::Train => "train",
        Set::Tune => "tuning",
        Set::Validation => "validation",
    };
    let system = records.first().map(|r| r.label.system());
    if let Some(system) = system {
        if scores.k() != system.num_classes() {
            return Err(EvalError::ClassCount {
                system,
                found: scores.k(),
                expected: system.num_classes(),
            });
        }
    }
    let mut chosen: Vec<&LabeledRecord> = records
        .iter()
        .filter(|r| sets.get(&r.record.image_id) == Some(&set))
        .collect();
    chosen.sort_by(|a, b| a.record.image_id.cmp(&b.record.image_id));
    if chosen.is_empty() {
        return Err(EvalError::EmptySet { set: name });
    }
    let mut data = SetData::default();
    let mut missing = Vec::new();
    for r in chosen {
        match scores.get(&r.record.image_id) {
            Some(p) => {
                data.image_ids.push(r.record.image_id.clone());
                data.patient_ids.push(r.record.patient_id.clone());
                data.labels.push(r.label.index());
                data.probs.push(p.to_vec());
            }
            None => missing.push(r.record.image_id.clone()),
        }
    }
    if let Some(first) = missing.first() {
        return Err(EvalError::MissingScores {
            set: name,
            missing: missing.len(),
            first: first.clone(),
        });
    }
    Ok(data)
}
