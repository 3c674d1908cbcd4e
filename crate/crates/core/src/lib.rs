//! Evaluation toolkit for diabetic retinopathy and macular edema screening
//! models.
//!
//! Grading systems and manifests live in [`grading`], patient-exclusive
//! splitting in [`split`], fundus cropping and resizing in [`preprocess`],
//! the statistics in [`metrics`], the evaluation pipeline and report
//! rendering in [`evaluation`], and synthetic test data in [`synth`].

pub mod evaluation;
pub mod grading;
pub mod metrics;
pub mod preprocess;
pub mod special;
pub mod split;
pub mod synth;

pub use evaluation::{
    evaluate_binary, evaluate_multiclass, gather, render_report, select_operating_point, AucCi,
    BinaryOptions, BinaryReport, BinarySet, Criterion, EvalError, Formats, MulticlassReport,
    OperatingPoint, Report, SetData,
};
pub use grading::{
    derive_class, map_messidor, parse_manifest, records_for_system, write_manifest, ClassLabel,
    Eye, Field, GradeRecord, Grades, GradingError, GradingSystem, LabeledRecord, PimecGrade,
    PircGrade,
};
pub use metrics::{
    auc, clopper_pearson, confusion, quadratic_weighted_kappa, roc_curve, ConfusionMatrix,
    CurvePoint, Interval, MetricsError, RocCurve, ScoreSet,
};
pub use preprocess::{
    crop_resize, detect_fundus_square, run_preprocess, CropBox, PreprocessError,
    PreprocessReport, RasterImage, TargetSize,
};
pub use split::{split, split_table, DistributionTable, Set, SplitAssignment, SplitError, SplitSpec};
pub use synth::{BinormalSpec, FundusSpec, PopulationSpec, Preset, SynthError};
