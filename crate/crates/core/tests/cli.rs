use std::fs;
use std::path::Path;
use std::process::Command;

use clcc::cli::run;
use clcc::eval::read_csv;

fn run_ok(args: &[&str]) {
    let mut argv = vec!["clcc"];
    argv.extend_from_slice(args);
    assert_eq!(run(argv), 0, "command failed: {args:?}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        run_ok(&["synth", "--scenes", "2", "--illums", "2", "--seed", "7", "--out", p(d)]);
    }
    let (ba, bb) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(ba.len(), 3);
    assert_eq!(ba, bb);
}

#[test]
fn gray_world_is_exact_on_neutral_mean_scenes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let csv = tmp.path().join("gw.csv");
    run_ok(&["synth", "--scenes", "12", "--illums", "6", "--seed", "3", "--neutral-mean", "--out", p(&data)]);
    run_ok(&["eval", "--method", "gray-world", "--data", p(&data), "--folds", "3", "--seed", "0", "--csv", p(&csv)]);
    let rows = read_csv(&csv).unwrap();
    let pooled = rows.iter().find(|r| r.fold == "pooled").unwrap();
    assert_eq!(pooled.n, 12);
    assert!(pooled.mean < 0.1, "mean {}", pooled.mean);
}

#[test]
fn train_then_eval_writes_metric_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg = tmp.path().join("train.cfg");
    let ck = tmp.path().join("model.ckpt");
    let csv = tmp.path().join("m.csv");
    run_ok(&["synth", "--scenes", "10", "--illums", "10", "--seed", "1", "--out", p(&data)]);
    fs::write(&cfg, "# short run\nepochs = 2\nbatch_size = 5\n").unwrap();
    run_ok(&["train", "--mode", "clcc-full", "--config", p(&cfg), "--data", p(&data), "--out", p(&ck)]);
    run_ok(&["eval", "--method", "clcc-full", "--checkpoint", p(&ck), "--data", p(&data), "--csv", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let header = text.lines().next().unwrap();
    for col in ["Mean", "Median", "Tri.", "Best-25%", "Worst-25%"] {
        assert!(header.split(',').any(|c| c == col), "missing {col} in {header}");
    }
    let rows = read_csv(&csv).unwrap();
    assert_eq!(rows[0].method, "clcc-full");
    assert!(rows[0].mean.is_finite());
}

#[test]
fn eval_errors_feed_report_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let errs = tmp.path().join("errors.csv");
    let csv = tmp.path().join("clusters.csv");
    run_ok(&["synth", "--scenes", "30", "--illums", "30", "--seed", "5", "--out", p(&data)]);
    run_ok(&[
        "eval", "--method", "white-patch", "--data", p(&data), "--csv", p(&tmp.path().join("wp.csv")), "--errors", p(&errs),
    ]);
    run_ok(&["report", "--errors", p(&errs), "--clusters", "3", "--csv", p(&csv)]);
    let rows = read_csv(&csv).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1..].iter().map(|r| r.n).sum::<usize>(), 30);
}

#[test]
fn augment_dumps_five_views_per_quadruple() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("aug");
    run_ok(&["synth", "--scenes", "4", "--illums", "4", "--seed", "2", "--out", p(&data)]);
    run_ok(&["augment", "--data", p(&data), "--mode", "full", "--out", p(&out), "--count", "3"]);
    let files = dir_bytes(&out);
    assert_eq!(files.len(), 3 * 5 + 1);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("quadruples.json")).unwrap()).unwrap();
    assert_eq!(meta.as_array().unwrap().len(), 3);
}

#[test]
fn binary_reports_errors_on_one_line() {
    let bin = env!("CARGO_BIN_EXE_clcc");
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(bin)
        .args(["eval", "--method", "gray-world", "--data", p(&tmp.path().join("missing")), "--csv", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=io message="), "{err}");

    let out = Command::new(bin).arg("nonsense").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("Usage"));
}
