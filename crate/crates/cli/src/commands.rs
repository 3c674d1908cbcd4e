use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use fundus_eval::evaluation::{self, AucCi, BinaryOptions, BinarySet, Criterion, EvalError, Formats, Report};
use fundus_eval::grading::{parse_manifest, records_for_system, write_manifest, GradeRecord, ManifestOptions};
use fundus_eval::metrics::{parse_scores, write_scores, BootstrapOptions, ScoreSet};
use fundus_eval::preprocess::{
    encode_png, resolve_image_path, run_preprocess, ImageSource, PreprocessError, TargetSize,
};
use fundus_eval::split::{read_split, split, write_split, Set, SplitSpec};
use fundus_eval::synth::{
    binormal_score_set, gen_fundus_image, gen_ordinal_scores, gen_population, FundusSpec, PopulationSpec,
};
use fundus_eval::{GradingSystem, LabeledRecord};
use log::{info, warn};
use rayon::prelude::*;

use super::{
    BinaryArgs, CiMethod, Command, EvalCommand, EvalInputs, ManifestArgs, MultiArgs, PreprocessArgs,
    ReportArgs, SplitArgs, SynthCommand, SynthImagesArgs, SynthManifestArgs, SynthScoresArgs,
};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(e: impl fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_error(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(invalid("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(invalid)?;
            Ok(pool.install(f))
        }
    }
}

fn load_manifest(args: &ManifestArgs) -> Result<Vec<GradeRecord>> {
    let options = ManifestOptions {
        drop_flagged: args.drop_flagged,
    };
    let parsed = parse_manifest(open(&args.manifest)?, options).map_err(invalid)?;
    for d in &parsed.diagnostics {
        warn!("{}: {d}", args.manifest.display());
    }
    if parsed.dropped_flagged > 0 {
        info!("dropped {} flagged rows", parsed.dropped_flagged);
    }
    if parsed.records.is_empty() {
        return Err(invalid(format!("{}: no usable records", args.manifest.display())));
    }
    Ok(parsed.records)
}

fn labeled(args: &ManifestArgs, system: GradingSystem) -> Result<Vec<LabeledRecord>> {
    let records = records_for_system(&load_manifest(args)?, system);
    if records.is_empty() {
        return Err(invalid(format!("no records are usable under {system}")));
    }
    Ok(records)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("in-memory csv");
    buf
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Split(args) => run_split(args),
        Command::Preprocess(args) => run_preprocess_cmd(args),
        Command::Eval(EvalCommand::Binary(args)) => run_eval_binary(args),
        Command::Eval(EvalCommand::Multi(args)) => run_eval_multi(args),
        Command::Synth(SynthCommand::Manifest(args)) => run_synth_manifest(args),
        Command::Synth(SynthCommand::Scores(args)) => run_synth_scores(args),
        Command::Synth(SynthCommand::Images(args)) => run_synth_images(args),
        Command::Report(args) => run_report(args),
    }
}

fn run_split(args: SplitArgs) -> Result<()> {
    let records = labeled(&args.manifest, args.system)?;
    let spec = SplitSpec {
        fractions: [args.fractions[0], args.fractions[1], args.fractions[2]],
        seed: args.seed,
        tolerance: args.tolerance,
    };
    let assignment = split(&records, &spec).map_err(invalid)?;
    write_file(&args.out, &csv_bytes(|w| write_split(w, &assignment.sets)))?;
    let table = &assignment.distribution;
    write_file(&args.out.with_extension("table.csv"), &csv_bytes(|w| table.write_csv(w)))?;
    write_file(&args.out.with_extension("table.txt"), table.to_text().as_bytes())?;
    info!("{} images split into {}", records.len(), args.out.display());
    Ok(())
}

fn run_preprocess_cmd(args: PreprocessArgs) -> Result<()> {
    let sizes = args
        .sizes
        .iter()
        .map(|&s| TargetSize::new(s))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let records = load_manifest(&args.manifest)?;
    let sources: Vec<ImageSource> = records
        .iter()
        .map(|r| ImageSource {
            image_id: r.image_id.clone(),
            path: resolve_image_path(&args.images, &r.image_id)
                .unwrap_or_else(|| args.images.join(format!("{}.png", r.image_id))),
        })
        .collect();
    let report = with_pool(args.jobs, || run_preprocess(&sources, &sizes, &args.out))??;
    for f in &report.failed {
        warn!("{}: {}", f.image_id, f.message);
    }
    let json = serde_json::to_string_pretty(&report).map_err(invalid)? + "\n";
    write_file(&args.out.join("preprocess_report.json"), json.as_bytes())?;
    info!(
        "{} images processed, {} failed, {} files written",
        report.processed,
        report.failed.len(),
        report.rewritten
    );
    if report.processed == 0 {
        return Err(invalid("no image could be processed"));
    }
    Ok(())
}

struct EvalData {
    tune: evaluation::SetData,
    validation: evaluation::SetData,
}

fn load_eval(inputs: &EvalInputs, need_tune: bool) -> Result<EvalData> {
    let system = inputs.system;
    let records = labeled(&inputs.manifest, system)?;
    let sets = read_split(open(&inputs.split)?).map_err(invalid)?;
    let parsed = parse_scores(open(&inputs.scores)?, Some(system.num_classes())).map_err(invalid)?;
    for d in &parsed.diagnostics {
        warn!("{}: {d}", inputs.scores.display());
    }
    let scores: ScoreSet = parsed.scores;
    let tune = if need_tune {
        evaluation::gather(&records, &sets, &scores, Set::Tune)?
    } else {
        evaluation::SetData::default()
    };
    let validation = evaluation::gather(&records, &sets, &scores, Set::Validation)?;
    Ok(EvalData { tune, validation })
}

fn write_report(report: &Report, out: &Path) -> Result<()> {
    for path in evaluation::render_report(report, out, Formats::default())? {
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn run_eval_binary(args: BinaryArgs) -> Result<()> {
    let inputs = &args.inputs;
    let (criterion, target) = match (args.target_sens, args.target_spec) {
        (_, Some(t)) => (Criterion::TargetSpecificity, t),
        (Some(t), None) => (Criterion::TargetSensitivity, t),
        (None, None) => (Criterion::TargetSensitivity, 0.9),
    };
    let auc_ci = match args.ci_method {
        CiMethod::Proportion => AucCi::Proportion,
        CiMethod::Bootstrap => AucCi::ClusterBootstrap(BootstrapOptions {
            replicates: args.replicates,
            seed: args.seed,
            level: args.level,
        }),
    };
    let options = BinaryOptions {
        criterion,
        target,
        level: args.level,
        auc_ci,
    };
    let data = load_eval(inputs, true)?;
    let (tl, ts) = (data.tune.binary_labels(), data.tune.positive_scores());
    let (vl, vs) = (data.validation.binary_labels(), data.validation.positive_scores());
    let report = with_pool(inputs.jobs, || {
        evaluation::evaluate_binary(
            inputs.system,
            &inputs.input_size,
            BinarySet { labels: &tl, scores: &ts, groups: Some(&data.tune.patient_ids) },
            BinarySet { labels: &vl, scores: &vs, groups: Some(&data.validation.patient_ids) },
            &options,
        )
    })??;
    if report.operating_point.trivial {
        warn!("operating point calls every tuning image the same class");
    }
    write_report(&Report::Binary(report), &inputs.out)
}

fn run_eval_multi(args: MultiArgs) -> Result<()> {
    let inputs = &args.inputs;
    let data = load_eval(inputs, false)?;
    let report = with_pool(inputs.jobs, || {
        evaluation::evaluate_multiclass(
            inputs.system,
            &inputs.input_size,
            &data.validation.labels,
            &data.validation.prob_refs(),
        )
    })??;
    write_report(&Report::Multiclass(report), &inputs.out)
}

fn run_synth_manifest(args: SynthManifestArgs) -> Result<()> {
    let spec = PopulationSpec::preset(args.preset, args.patients, args.seed);
    let records = gen_population(&spec).map_err(invalid)?;
    write_file(&args.out, &csv_bytes(|w| write_manifest(w, &records)))?;
    info!("{} images for {} patients", records.len(), args.patients);
    Ok(())
}

fn run_synth_scores(args: SynthScoresArgs) -> Result<()> {
    let records = labeled(&args.manifest, args.system)?;
    let scores = match (args.target_auc, args.quality) {
        (Some(auc), _) => {
            if !args.system.is_binary() {
                return Err(invalid(format!(
                    "--target-auc needs a binary system, {} has {} classes",
                    args.system,
                    args.system.num_classes()
                )));
            }
            let items: Vec<(String, bool)> = records
                .iter()
                .map(|r| (r.record.image_id.clone(), r.label.index() == 1))
                .collect();
            binormal_score_set(&items, auc, args.seed)
        }
        (None, Some(q)) => {
            let items: Vec<(String, usize)> = records
                .iter()
                .map(|r| (r.record.image_id.clone(), r.label.index()))
                .collect();
            gen_ordinal_scores(&items, args.system.num_classes(), q, args.seed)
        }
        (None, None) => return Err(invalid("one of --target-auc or --quality is required")),
    }
    .map_err(invalid)?;
    write_file(&args.out, &csv_bytes(|w| write_scores(w, &scores)))
}

fn run_synth_images(args: SynthImagesArgs) -> Result<()> {
    if !(args.radius > 0.0 && args.radius <= 0.5) {
        return Err(invalid(format!("--radius {} outside (0, 0.5]", args.radius)));
    }
    let records = load_manifest(&args.manifest)?;
    let n = args.limit.unwrap_or(records.len()).min(records.len());
    let radius = args.radius * args.width.min(args.height) as f64;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    records[..n]
        .par_iter()
        .enumerate()
        .try_for_each(|(i, r)| {
            let spec = FundusSpec {
                width: args.width,
                height: args.height,
                radius,
                annotation: !args.no_annotation,
                seed: args.seed.wrapping_add(i as u64),
            };
            let img = gen_fundus_image(&spec).map_err(invalid)?;
            write_file(&args.out.join(format!("{}.png", r.image_id)), &encode_png(&img))
        })?;
    info!("wrote {n} images to {}", args.out.display());
    Ok(())
}

fn report_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for path in inputs {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| io_error(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    if files.is_empty() {
        return Err(invalid("no JSON reports found"));
    }
    Ok(files)
}

fn run_report(args: ReportArgs) -> Result<()> {
    for path in report_inputs(&args.input)? {
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let report = Report::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        write_report(&report, &args.out)?;
    }
    Ok(())
}
