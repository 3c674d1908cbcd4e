use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fundus-eval"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(dir: &Path, args: &[&str]) -> Option<i32> {
    bin().current_dir(dir).args(args).output().unwrap().status.code()
}

#[test]
fn five_command_sequence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, &["synth", "manifest", "--preset", "table1-rdr", "--patients", "400", "--seed", "5", "--out", "m.csv"]);
    run(d, &["synth", "images", "--manifest", "m.csv", "--limit", "6", "--width", "200", "--height", "150", "--out", "raw"]);
    run(d, &["synth", "scores", "--manifest", "m.csv", "--system", "rdr", "--target-auc", "0.95", "--seed", "1", "--out", "s.csv"]);
    run(d, &["split", "--manifest", "m.csv", "--system", "rdr", "--seed", "42", "--out", "split.csv"]);
    let pre = run(d, &["preprocess", "--manifest", "m.csv", "--images", "raw", "--sizes", "256,299", "--out", "imgs"]);
    assert!(pre.stdout.is_empty());
    run(d, &["eval", "binary", "--system", "rdr", "--scores", "s.csv", "--split", "split.csv", "--manifest", "m.csv", "--target-sens", "0.90", "--out", "out"]);
    run(d, &["report", "--input", "out/report", "--out", "again"]);

    for f in ["split.table.csv", "split.table.txt", "imgs/256/P00001-L-fovea.png", "imgs/299/P00001-L-fovea.png"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let pre: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("imgs/preprocess_report.json")).unwrap()).unwrap();
    assert_eq!(pre["processed"], 6);
    for f in ["report/rdr_2095.json", "report/rdr_2095.csv", "report/rdr_2095.txt", "roc/rdr_2095.svg", "confusion/rdr_2095.csv"] {
        let a = fs::read(d.join("out").join(f)).unwrap();
        let b = fs::read(d.join("again").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/report/rdr_2095.json")).unwrap()).unwrap();
    for key in ["auc", "auc_ci", "sensitivity", "specificity", "accuracy", "operating_point", "tp", "fn"] {
        assert!(report.get(key).is_some(), "{key}");
    }
}

#[test]
fn multiclass_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, &["synth", "manifest", "--preset", "table1-pirc", "--patients", "600", "--seed", "2", "--out", "m.csv"]);
    run(d, &["synth", "scores", "--manifest", "m.csv", "--system", "pirc", "--quality", "2.0", "--out", "s.csv"]);
    run(d, &["split", "--manifest", "m.csv", "--system", "pirc", "--seed", "1", "--tolerance", "0.05", "--out", "split.csv"]);
    run(d, &["eval", "multi", "--system", "pirc", "--scores", "s.csv", "--split", "split.csv", "--manifest", "m.csv", "--input-size", "512", "--out", "out"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/report/pirc_512.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "multiclass");
    assert!(report["kappa"].as_f64().unwrap() > 0.5);
}

#[test]
fn seeded_outputs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for tag in ["a", "b"] {
        run(d, &["synth", "manifest", "--patients", "300", "--seed", "9", "--out", &format!("m_{tag}.csv")]);
        run(d, &["synth", "scores", "--manifest", "m_a.csv", "--system", "rdr", "--target-auc", "0.9", "--seed", "4", "--out", &format!("s_{tag}.csv")]);
        run(d, &["split", "--manifest", "m_a.csv", "--system", "rdr", "--seed", "3", "--out", &format!("split_{tag}.csv")]);
        run(d, &[
            "eval", "binary", "--system", "rdr", "--scores", "s_a.csv", "--split", "split_a.csv", "--manifest", "m_a.csv",
            "--ci-method", "bootstrap", "--replicates", "200", "--jobs", if tag == "a" { "1" } else { "4" },
            "--out", &format!("out_{tag}"),
        ]);
    }
    for (a, b) in [
        ("m_a.csv", "m_b.csv"),
        ("s_a.csv", "s_b.csv"),
        ("split_a.csv", "split_b.csv"),
        ("split_a.table.csv", "split_b.table.csv"),
        ("out_a/report/rdr_2095.json", "out_b/report/rdr_2095.json"),
    ] {
        assert_eq!(fs::read(d.join(a)).unwrap(), fs::read(d.join(b)).unwrap(), "{a}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["split", "--bogus"]), Some(64));
    assert_eq!(code(d, &["frobnicate"]), Some(64));
    assert_eq!(code(d, &["split", "--help"]), Some(0));
    assert_eq!(code(d, &["split", "--manifest", "missing.csv", "--system", "rdr", "--out", "x.csv"]), Some(2));

    fs::write(d.join("bad.csv"), "id,patient\n1,2\n").unwrap();
    assert_eq!(code(d, &["split", "--manifest", "bad.csv", "--system", "rdr", "--out", "x.csv"]), Some(1));
    assert_eq!(code(d, &["split", "--manifest", "bad.csv", "--system", "nope", "--out", "x.csv"]), Some(64));

    run(d, &["synth", "manifest", "--patients", "50", "--out", "m.csv"]);
    assert_eq!(
        code(d, &["synth", "scores", "--manifest", "m.csv", "--system", "pirc", "--target-auc", "0.9", "--out", "s.csv"]),
        Some(1)
    );
    assert!(!d.join("x.csv").exists());
}

#[test]
fn malformed_rows_go_to_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    run(d, &["synth", "manifest", "--patients", "200", "--seed", "1", "--out", "m.csv"]);
    let mut text = fs::read_to_string(d.join("m.csv")).unwrap();
    text.push_str("Z1,Z,L,fovea,1,7,0\n");
    fs::write(d.join("m.csv"), text).unwrap();
    let out = run(d, &["split", "--manifest", "m.csv", "--system", "rdr", "--tolerance", "0.1", "--out", "split.csv"]);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pirc"));
    let split = fs::read_to_string(d.join("split.csv")).unwrap();
    assert!(!split.contains("Z1"));
}
