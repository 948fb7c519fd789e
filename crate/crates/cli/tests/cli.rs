use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ddt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ddt(args);
    assert!(
        out.status.success(),
        "ddt {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn help_and_version_exit_zero_usage_errors_exit_one() {
    assert_eq!(ddt(&["--help"]).status.code(), Some(0));
    assert_eq!(ddt(&["--version"]).status.code(), Some(0));
    assert_eq!(ddt(&["run", "--help"]).status.code(), Some(0));
    assert_eq!(ddt(&[]).status.code(), Some(1));
    assert_eq!(ddt(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ddt(&["run", "--descriptors", "x"]).status.code(), Some(1));
    assert_eq!(
        ddt(&["run", "--descriptors", "x", "-o", "y", "--components", "0"]).status.code(),
        Some(1)
    );
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddt(&["run", "--descriptors", s(&dir.path().join("nope")), "-o", s(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let bad = ddt(&["synth", "--out", s(dir.path()), "--n-images", "2", "--n-noisy", "3"]);
    assert_eq!(bad.status.code(), Some(2));
    let outside = ddt(&["synth", "--out", s(dir.path()), "--n-images", "1", "--grid-h", "4", "--grid-w", "4", "--planted", "0,0,4,1"]);
    assert_eq!(outside.status.code(), Some(2));
}

#[test]
fn synth_run_eval_roc_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--n-images", "10", "--n-noisy", "2", "--seed", "3"]);
    for f in ["manifest.tsv", "annotations.json", "noise_labels.json", "truth.json", "img_000.ddtd"] {
        assert!(data.join(f).is_file(), "{f} missing");
    }

    let results = dir.path().join("results.json");
    ok(&["run", "--descriptors", s(&data), "-o", s(&results)]);
    let v = read_json(&results);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["method"], "ddt");
    assert_eq!(v["model"]["k"], 1);
    assert_eq!(v["images"].as_array().unwrap().len(), 10);
    assert!(v["images"][0]["noise_score"].is_u64());
    assert!(v["images"][0]["noise_score_normalized"].is_f64());
    for key in ["load", "fit", "transform"] {
        assert!(v["timing_ms"][key].is_f64(), "timing {key}");
    }

    let report = dir.path().join("report.json");
    let printed = ok(&["eval", "--results", s(&results), "--annotations", s(&data.join("annotations.json")), "-o", s(&report)]);
    assert!(printed.contains("CorLoc: 100.0% (8/8)"), "{printed}");
    let r = read_json(&report);
    assert_eq!(r["annotated"], 8);
    assert_eq!(r["auc"], 1.0);

    let roc = dir.path().join("roc.json");
    let printed = ok(&["roc", "--results", s(&results), "--labels", s(&data.join("noise_labels.json")), "-o", s(&roc)]);
    assert!(printed.contains("AUC: 1.0000"), "{printed}");
    let r = read_json(&roc);
    assert_eq!(r["positive_class"], "noisy");
    assert_eq!(r["points"][0]["fpr"], 0.0);
    let by_ann = ok(&["roc", "--results", s(&results), "--annotations", s(&data.join("annotations.json"))]);
    assert!(by_ann.contains("AUC: 1.0000"));
}

#[test]
fn scda_results_have_no_model() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--n-images", "4"]);
    let results = dir.path().join("r.json");
    ok(&["run", "--descriptors", s(dir.path()), "--method", "scda", "-o", s(&results)]);
    let v = read_json(&results);
    assert!(v["model"].is_null());
    assert_eq!(v["method"], "scda");
    assert!(v["images"][0]["box"].is_array());
}

#[test]
fn single_image_set_runs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--n-images", "1"]);
    let results = dir.path().join("r.json");
    ok(&["run", "--descriptors", s(dir.path()), "-o", s(&results)]);
    assert_eq!(read_json(&results)["images"].as_array().unwrap().len(), 1);
}

#[test]
fn eval_reports_missing_ids_and_single_class_roc_fails() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--n-images", "3"]);
    let results = dir.path().join("r.json");
    ok(&["run", "--descriptors", s(dir.path()), "-o", s(&results)]);
    let ann = dir.path().join("extra.json");
    fs::write(&ann, r#"{"img_000": [[0,0,5,5]], "ghost_7": [[0,0,1,1]]}"#).unwrap();
    let out = ddt(&["eval", "--results", s(&results), "--annotations", s(&ann)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost_7"));

    let out = ddt(&["roc", "--results", s(&results), "--labels", s(&dir.path().join("noise_labels.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_of_all_null_boxes_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--n-images", "3"]);
    let results = dir.path().join("r.json");
    ok(&["run", "--descriptors", s(dir.path()), "-o", s(&results)]);
    let mut v = read_json(&results);
    for img in v["images"].as_array_mut().unwrap() {
        img["box"] = Value::Null;
    }
    fs::write(&results, serde_json::to_string(&v).unwrap()).unwrap();
    let printed = ok(&["eval", "--results", s(&results), "--annotations", s(&dir.path().join("annotations.json"))]);
    assert!(printed.contains("CorLoc: 0.0% (0/3)"), "{printed}");
}

#[test]
fn degenerate_spectrum_needs_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    // all-zero descriptors: nothing varies
    synth(dir.path(), &["--n-images", "2", "--grid-h", "4", "--grid-w", "4", "--d", "2", "--signal-strength", "0", "--noise-sigma", "0"]);
    let results = dir.path().join("r.json");
    let out = ddt(&["run", "--descriptors", s(dir.path()), "-o", s(&results)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--allow-degenerate"));
    ok(&["run", "--descriptors", s(dir.path()), "-o", s(&results), "--allow-degenerate"]);
    assert_eq!(read_json(&results)["model"]["degenerate"], true);
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), &["--n-images", "3", "--seed", "9", "--n-noisy", "1"]);
    synth(b.path(), &["--n-images", "3", "--seed", "9", "--n-noisy", "1"]);
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn viz_boxes_and_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--n-images", "4", "--n-noisy", "1", "--render-images", "--part-strength", "3", "--seed", "2"]);
    let results = dir.path().join("r.json");
    ok(&["run", "--descriptors", s(&data), "--components", "2", "-o", s(&results)]);
    fs::remove_file(data.join("images/img_003.png")).unwrap();

    let out = dir.path().join("boxes");
    let r = ddt(&["viz", "--results", s(&results), "--images", s(&data.join("images")), "--out", s(&out)]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("img_003"));
    let v = read_json(&results);
    let rendered: Vec<_> = (0..3).map(|i| format!("img_00{i}.png")).filter(|n| out.join(n).is_file()).collect();
    assert_eq!(rendered.len(), 3);
    for (i, img) in v["images"].as_array().unwrap().iter().take(3).enumerate() {
        let png = image::open(out.join(format!("img_00{i}.png"))).unwrap().to_rgb8();
        assert_eq!(png.dimensions(), (240, 240));
        let red = png.pixels().filter(|p| p.0 == [255, 0, 0]).count();
        assert!(red > 0, "image {i} ({}) has no overlay", img["box"]);
    }

    let heat = dir.path().join("heat");
    ok(&["viz", "--results", s(&results), "--images", s(&data.join("images")), "--out", s(&heat), "--mode", "heatmap", "--component", "2"]);
    assert!(heat.join("img_000_p2.png").is_file());
    let bad = ddt(&["viz", "--results", s(&results), "--images", s(&data.join("images")), "--out", s(&heat), "--mode", "heatmap", "--component", "3"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn second_heatmap_is_warm_on_one_planted_half() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--n-images", "6", "--render-images", "--part-strength", "3", "--seed", "4"]);
    let results = dir.path().join("r.json");
    ok(&["run", "--descriptors", s(&data), "--components", "2", "-o", s(&results)]);
    let heat = dir.path().join("heat");
    ok(&["viz", "--results", s(&results), "--images", s(&data.join("images")), "--out", s(&heat), "--mode", "heatmap", "--component", "2", "--alpha", "1"]);

    let truth = read_json(&data.join("truth.json"));
    for img in truth["images"].as_array().unwrap() {
        let id = img["image_id"].as_str().unwrap();
        let o = &img["object"];
        let cell = |k: &str| o[k].as_u64().unwrap() as u32;
        let (r0, c0, r1, c1) = (cell("row0"), cell("col0"), cell("row1"), cell("col1"));
        let mid = r0 + (r1 - r0 + 1).div_ceil(2);
        let png = image::open(heat.join(format!("{id}_p2.png"))).unwrap().to_rgb8();
        let warmth = |rows: std::ops::Range<u32>| {
            let mut acc = 0i64;
            for r in rows {
                for c in c0..=c1 {
                    let p = png.get_pixel(c * 8 + 4, r * 8 + 4);
                    acc += i64::from(p.0[0]) - i64::from(p.0[2]);
                }
            }
            acc
        };
        let (top, bottom) = (warmth(r0..mid), warmth(mid..r1 + 1));
        // the sign of the second direction is arbitrary: one half warm, one cool
        assert!(top * bottom < 0, "{id}: top {top} bottom {bottom}");
    }
}
