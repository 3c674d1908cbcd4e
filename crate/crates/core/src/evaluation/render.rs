use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BinaryReport, Criterion, EvalError, MulticlassReport};
use crate::metrics::{ConfusionMatrix, CurvePoint, Interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Binary(BinaryReport),
    Multiclass(MulticlassReport),
}

impl Report {
    /// File stem `<system>_<size>`.
    pub fn stem(&self) -> String {
        let (system, size) = match self {
            Report::Binary(r) => (r.system, &r.input_size),
            Report::Multiclass(r) => (r.system, &r.input_size),
        };
        format!("{}_{}", system.as_str(), size)
    }

    pub fn confusion(&self) -> (Vec<String>, ConfusionMatrix) {
        match self {
            Report::Binary(r) => (
                r.system.class_names().iter().map(|s| s.to_string()).collect(),
                ConfusionMatrix::from_rows(vec![vec![r.tn, r.fp], vec![r.fn_, r.tp]])
                    .expect("2x2 matrix"),
            ),
            Report::Multiclass(r) => (r.class_names.clone(), r.confusion.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub text: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            text: true,
            svg: true,
        }
    }
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

fn ci_text(x: f64, ci: &Interval) -> String {
    format!("{} ({}-{})", f3(x), f3(ci.lo), f3(ci.hi))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

/// Writes `report/<stem>.{csv,json,txt}`, `roc/<stem>.svg` and
/// `confusion/<stem>.csv` under `out_dir`, returning the paths written.
pub fn render_report(report: &Report, out_dir: &Path, formats: Formats) -> Result<Vec<PathBuf>, EvalError> {
    let stem = report.stem();
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    if formats.csv {
        files.push((out_dir.join("report").join(format!("{stem}.csv")), table_csv(report)));
        let (names, cm) = report.confusion();
        files.push((
            out_dir.join("confusion").join(format!("{stem}.csv")),
            confusion_csv(&names, &cm),
        ));
    }
    if formats.json {
        files.push((out_dir.join("report").join(format!("{stem}.json")), report.to_json()));
    }
    if formats.text {
        files.push((out_dir.join("report").join(format!("{stem}.txt")), table_text(report)));
    }
    if formats.svg {
        files.push((out_dir.join("roc").join(format!("{stem}.svg")), roc_svg(report)));
    }
    for (path, body) in &files {
        write_file(path, body.as_bytes())?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn csv_string(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

pub fn table_csv(report: &Report) -> String {
    match report {
        Report::Binary(r) => {
            let mut header = vec!["system", "input_size"];
            let mut row = vec![r.system.label().to_string(), r.input_size.clone()];
            for (name, x, ci) in [
                ("auc", r.auc, &r.auc_ci),
                ("sensitivity", r.sensitivity, &r.sensitivity_ci),
                ("specificity", r.specificity, &r.specificity_ci),
                ("accuracy", r.accuracy, &r.accuracy_ci),
            ] {
                header.push(name);
                row.push(f3(x));
                header.push(match name {
                    "auc" => "auc_lo",
                    "sensitivity" => "sensitivity_lo",
                    "specificity" => "specificity_lo",
                    _ => "accuracy_lo",
                });
                row.push(f3(ci.lo));
                header.push(match name {
                    "auc" => "auc_hi",
                    "sensitivity" => "sensitivity_hi",
                    "specificity" => "specificity_hi",
                    _ => "accuracy_hi",
                });
                row.push(f3(ci.hi));
            }
            header.extend(["threshold", "n", "n_pos", "n_neg", "tp", "fp", "tn", "fn"]);
            row.push(format!("{:.6}", r.operating_point.threshold));
            row.extend([r.n, r.n_pos, r.n_neg, r.tp, r.fp, r.tn, r.fn_].map(|v| v.to_string()));
            csv_string(&[header.into_iter().map(String::from).collect(), row])
        }
        Report::Multiclass(r) => {
            let mut header: Vec<String> = ["system", "input_size", "macro_auc", "accuracy", "kappa"]
                .map(String::from)
                .to_vec();
            header.extend((0..r.per_class_auc.len()).map(|c| format!("auc_class{c}")));
            let mut row = vec![
                r.system.label().to_string(),
                r.input_size.clone(),
                f3(r.macro_auc),
                f3(r.accuracy),
                f3(r.kappa),
            ];
            row.extend(r.per_class_auc.iter().map(|&a| f3(a)));
            csv_string(&[header, row])
        }
    }
}

pub fn confusion_csv(names: &[String], cm: &ConfusionMatrix) -> String {
    let mut rows = Vec::with_capacity(cm.k() + 1);
    let mut header = vec!["truth".to_string()];
    header.extend(names.iter().cloned());
    rows.push(header);
    for (t, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..cm.k()).map(|p| cm.get(t, p).to_string()));
        rows.push(row);
    }
    csv_string(&rows)
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|i| rows.iter().filter_map(|r| r.get(i)).map(|c| c.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[i]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn table_text(report: &Report) -> String {
    match report {
        Report::Binary(r) => {
            let op = &r.operating_point;
            let target = match op.criterion {
                Criterion::TargetSensitivity => "sensitivity",
                Criterion::TargetSpecificity => "specificity",
            };
            let mut out = format!("{} {}\n", r.system.label(), r.input_size);
            out.push_str(&aligned(&[
                vec!["AUC".into(), ci_text(r.auc, &r.auc_ci)],
                vec!["Sensitivity".into(), ci_text(r.sensitivity, &r.sensitivity_ci)],
                vec!["Specificity".into(), ci_text(r.specificity, &r.specificity_ci)],
                vec!["Accuracy".into(), ci_text(r.accuracy, &r.accuracy_ci)],
            ]));
            let _ = writeln!(
                out,
                "Operating point: threshold {:.6} at tuning sensitivity {}, specificity {} (target {target} {}){}",
                op.threshold,
                f3(op.tuning_sensitivity),
                f3(op.tuning_specificity),
                f3(op.target),
                if op.trivial { " [trivial]" } else { "" },
            );
            let _ = writeln!(
                out,
                "Validation images: {} ({} positive, {} negative); TP {} FP {} TN {} FN {}",
                r.n, r.n_pos, r.n_neg, r.tp, r.fp, r.tn, r.fn_
            );
            out
        }
        Report::Multiclass(r) => {
            let mut out = format!("{} {}\n", r.system.label(), r.input_size);
            out.push_str(&aligned(&[
                vec!["Macro-AUC".into(), f3(r.macro_auc)],
                vec!["Accuracy".into(), f3(r.accuracy)],
                vec!["Quadratic-weighted kappa".into(), f3(r.kappa)],
            ]));
            out.push('\n');
            let mut rows = vec![{
                let mut h = vec!["Truth \\ Predicted".to_string()];
                h.extend(r.class_names.iter().cloned());
                h.push("AUC".into());
                h
            }];
            for (t, name) in r.class_names.iter().enumerate() {
                let mut row = vec![name.clone()];
                row.extend((0..r.confusion.k()).map(|p| r.confusion.get(t, p).to_string()));
                row.push(f3(r.per_class_auc[t]));
                rows.push(row);
            }
            out.push_str(&aligned(&rows));
            out
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#000000"];
const LEFT: f64 = 90.0;
const TOP: f64 = 40.0;
const SIDE: f64 = 660.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn path_data(curve: &[CurvePoint]) -> String {
    let mut d = String::new();
    for (i, p) in curve.iter().enumerate() {
        let x = LEFT + p.fpr * SIDE;
        let y = TOP + (1.0 - p.tpr) * SIDE;
        let _ = write!(d, "{}{x:.2} {y:.2}", if i == 0 { "M" } else { " L" });
    }
    d
}

/// Standalone SVG with one `<path>` per curve, the chance diagonal and a
/// legend of `name (AUC)` entries.
pub fn roc_svg(report: &Report) -> String {
    let (title, curves): (String, Vec<(String, f64, &[CurvePoint])>) = match report {
        Report::Binary(r) => (
            format!("{} {}", r.system.label(), r.input_size),
            vec![(r.system.label().to_string(), r.auc, r.roc.as_slice())],
        ),
        Report::Multiclass(r) => {
            let mut v: Vec<(String, f64, &[CurvePoint])> = r
                .class_names
                .iter()
                .zip(&r.per_class_auc)
                .zip(&r.per_class_roc)
                .map(|((n, &a), c)| (n.clone(), a, c.as_slice()))
                .collect();
            v.push(("macro-average".into(), r.macro_auc, r.macro_roc.as_slice()));
            (format!("{} {}", r.system.label(), r.input_size), v)
        }
    };

    let mut s = String::new();
    s.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 800\" width=\"800\" height=\"800\" font-family=\"sans-serif\" font-size=\"14\">\n");
    let _ = writeln!(s, "<title>{} ROC</title>", escape(&title));
    s.push_str("<rect x=\"0\" y=\"0\" width=\"800\" height=\"800\" fill=\"#ffffff\"/>\n");
    let _ = writeln!(
        s,
        "<rect class=\"frame\" x=\"{LEFT:.2}\" y=\"{TOP:.2}\" width=\"{SIDE:.2}\" height=\"{SIDE:.2}\" fill=\"none\" stroke=\"#000000\"/>"
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let x = LEFT + v * SIDE;
        let y = TOP + (1.0 - v) * SIDE;
        let bottom = TOP + SIDE;
        let _ = writeln!(
            s,
            "<line class=\"tick\" x1=\"{x:.2}\" y1=\"{bottom:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
            bottom + 6.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{v:.1}</text>",
            bottom + 22.0
        );
        let _ = writeln!(
            s,
            "<line class=\"tick\" x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{LEFT:.2}\" y2=\"{y:.2}\" stroke=\"#000000\"/>",
            LEFT - 6.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.1}</text>",
            LEFT - 10.0,
            y + 5.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">False positive rate (1 - specificity)</text>",
        LEFT + SIDE / 2.0,
        TOP + SIDE + 50.0
    );
    let _ = writeln!(
        s,
        "<text x=\"25.00\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 25.00 {:.2})\">True positive rate (sensitivity)</text>",
        TOP + SIDE / 2.0,
        TOP + SIDE / 2.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"25.00\" text-anchor=\"middle\">{}</text>",
        LEFT + SIDE / 2.0,
        escape(&title)
    );
    let _ = writeln!(
        s,
        "<line class=\"diagonal\" x1=\"{LEFT:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{TOP:.2}\" stroke=\"#888888\" stroke-dasharray=\"6 4\"/>",
        TOP + SIDE,
        LEFT + SIDE
    );
    for (i, (name, auc, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if i + 1 == curves.len() && curves.len() > 1 {
            " stroke-dasharray=\"10 4\""
        } else {
            ""
        };
        let _ = writeln!(
            s,
            "<path class=\"roc\" d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
            path_data(curve)
        );
        let ly = TOP + SIDE - 20.0 - 22.0 * (curves.len() - 1 - i) as f64;
        let lx = LEFT + SIDE - 250.0;
        let _ = writeln!(
            s,
            "<rect class=\"swatch\" x=\"{lx:.2}\" y=\"{:.2}\" width=\"20.00\" height=\"4.00\" fill=\"{color}\"/>",
            ly - 6.0
        );
        let _ = writeln!(
            s,
            "<text class=\"legend\" x=\"{:.2}\" y=\"{ly:.2}\">{} ({})</text>",
            lx + 28.0,
            escape(name),
            f3(*auc)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{evaluate_binary, evaluate_multiclass, BinaryOptions, BinarySet};
    use crate::grading::GradingSystem;

    fn binary() -> Report {
        let labels = [true, false, true, false, true, false];
        let scores = [0.9, 0.4, 0.7, 0.6, 0.3, 0.1];
        let set = BinarySet { labels: &labels, scores: &scores, groups: None };
        Report::Binary(
            evaluate_binary(GradingSystem::Rdr, "299", set, set, &BinaryOptions::default()).unwrap(),
        )
    }

    fn multi() -> Report {
        let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let probs: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let mut p = vec![0.1; 5];
                p[(i * 7 / 3) % 5] += 0.5;
                p
            })
            .collect();
        let refs: Vec<&[f64]> = probs.iter().map(Vec::as_slice).collect();
        Report::Multiclass(evaluate_multiclass(GradingSystem::Pirc, "512", &labels, &refs).unwrap())
    }

    #[test]
    fn binary_svg_structure() {
        let svg = roc_svg(&binary());
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches("class=\"diagonal\"").count(), 1);
        assert!(svg.contains("viewBox=\"0 0 800 800\""));
        assert!(svg.contains("RDR (0.778)"));
    }

    #[test]
    fn multiclass_svg_has_six_paths() {
        let svg = roc_svg(&multi());
        assert_eq!(svg.matches("<path").count(), 6);
        assert!(svg.contains("macro-average ("));
    }

    #[test]
    fn rendering_is_byte_stable_and_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for report in [binary(), multi()] {
            let paths = render_report(&report, dir.path(), Formats::default()).unwrap();
            assert_eq!(paths.len(), 5);
            let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
            let json = fs::read_to_string(dir.path().join("report").join(format!("{}.json", report.stem()))).unwrap();
            let back = Report::from_json(&json).unwrap();
            assert_eq!(back, report);
            render_report(&back, dir.path(), Formats::default()).unwrap();
            let second: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
            assert_eq!(first, second);
        }
        assert!(dir.path().join("roc/rdr_299.svg").is_file());
        assert!(dir.path().join("confusion/pirc_512.csv").is_file());
    }

    #[test]
    fn text_tables() {
        let text = table_text(&binary());
        assert!(text.starts_with("RDR 299\n"));
        assert!(text.contains("Sensitivity"));
        let text = table_text(&multi());
        assert!(text.contains("Quadratic-weighted kappa"));
        assert!(text.contains("Truth \\ Predicted"));
        let csv = table_csv(&multi());
        assert!(csv.starts_with("system,input_size,macro_auc,accuracy,kappa,auc_class0"));
    }
}
