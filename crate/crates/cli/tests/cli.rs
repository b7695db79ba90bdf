use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use fguide_cli::app::main_with;
use fguide_cli::field::{gradient_field, Grid};
use fguide_core::classifier::AnalyticClassifier;
use fguide_core::guidance::{guidance_grad, GuidanceKind, GuidanceSpec};
use fguide_core::GaussianMixture;
use serde_json::json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fguide"))
}

fn two_modes() -> serde_json::Value {
    json!({
        "weights": [0.5, 0.5],
        "means": [[-2.0, 0.0], [2.0, 0.0]],
        "covariances": [[[0.5, 0.0], [0.0, 0.5]], [[0.5, 0.0], [0.0, 0.5]]]
    })
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

fn small(extra: serde_json::Value) -> serde_json::Value {
    let mut cfg = json!({
        "seed": 11,
        "mixture": "mixture.json",
        "chains": 200,
        "schedule": {"steps": 40},
        "oracle_trials": 0
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    cfg
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("mixture.json"), two_modes().to_string()).unwrap();
    dir
}

fn run_in_process(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_with(std::iter::once("fguide").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn results(dir: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(dir.join("results.csv")).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn column(dir: &Path, name: &str) -> usize {
    let mut r = csv::Reader::from_path(dir.join("results.csv")).unwrap();
    r.headers().unwrap().iter().position(|h| h == name).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = setup();
    let cfg = write_config(dir.path(), "cfg.json", small(json!({"kinds": ["none", "rkl"], "classes": [0, 1]})));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let output = bin().arg("run").arg(&cfg).arg("--out").arg(out).output().unwrap();
        assert!(output.status.success());
    }
    for file in ["results.csv", "trajectories.csv", "config.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_eq!(results(&a).len(), 4);
    let run: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn results_schema_is_stable() {
    let dir = setup();
    let cfg = write_config(dir.path(), "cfg.json", small(json!({})));
    let out = dir.path().join("out");
    let (code, _, err) = run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "point,point_hash,kind,tilt,alpha,epsilon,lambda_start,lambda_end,class,frechet_class,frechet_mixture,\
         precision,recall,mean_final_confidence,failed_chains"
    );
    let traj = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert_eq!(
        traj.lines().next().unwrap(),
        "point,kind,class,t,mean_confidence,mean_entropy,top_quartile_confidence,mean_grad_norm"
    );
    assert_eq!(traj.lines().count(), 1 + 40);
    assert_eq!(results(&out).len(), 1);
    let embedded: serde_json::Value = serde_json::from_slice(&fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(embedded["mixture"]["weights"], json!([0.5, 0.5]));
}

#[test]
fn alpha_sweep_emits_one_row_per_point_with_distinct_hashes() {
    let dir = setup();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        small(json!({
            "guidance": {"kind": "rkl", "epsilon": 0.1},
            "sweep": {"alpha": [0.0, 0.05, 0.1, 0.15]}
        })),
    );
    let out = dir.path().join("out");
    let (code, _, err) = run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = results(&out);
    assert_eq!(rows.len(), 4);
    let (pi, hi, ai) = (column(&out, "point"), column(&out, "point_hash"), column(&out, "alpha"));
    let points: Vec<usize> = rows.iter().map(|r| r[pi].parse().unwrap()).collect();
    assert_eq!(points, vec![0, 1, 2, 3]);
    let alphas: Vec<f64> = rows.iter().map(|r| r[ai].parse().unwrap()).collect();
    assert_eq!(alphas, vec![0.0, 0.05, 0.1, 0.15]);
    let mut hashes: Vec<&str> = rows.iter().map(|r| &r[hi]).collect();
    hashes.sort();
    hashes.dedup();
    assert_eq!(hashes.len(), 4);
}

#[test]
fn zero_tilt_row_matches_untilted_baseline() {
    let dir = setup();
    let tilted = write_config(
        dir.path(),
        "tilt.json",
        small(json!({"sweep": {"tilt": [0.1, 0.0, -0.1, -0.2, -0.3, -0.5]}})),
    );
    let plain = write_config(dir.path(), "plain.json", small(json!({})));
    let (a, b) = (dir.path().join("tilt"), dir.path().join("plain"));
    assert_eq!(run_in_process(&["run", tilted.to_str().unwrap(), "--out", a.to_str().unwrap()]).0, 0);
    assert_eq!(run_in_process(&["run", plain.to_str().unwrap(), "--out", b.to_str().unwrap()]).0, 0);
    let rows = results(&a);
    assert_eq!(rows.len(), 6);
    let baseline = &results(&b)[0];
    let zero = &rows[1];
    assert_eq!(&zero[column(&a, "tilt")], "0.0");
    for name in ["frechet_class", "frechet_mixture", "precision", "recall", "mean_final_confidence"] {
        let i = column(&a, name);
        assert_eq!(zero[i], baseline[i], "{name}");
    }
    assert_ne!(rows[0][column(&a, "mean_final_confidence")], baseline[column(&a, "mean_final_confidence")]);
}

#[test]
fn config_errors_exit_one_with_field_path() {
    let dir = setup();
    let bad_class = write_config(dir.path(), "c.json", small(json!({"classes": [0, 7]})));
    let (code, _, err) = run_in_process(&["run", bad_class.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("classes[1]"), "{err}");

    let mut no_seed = small(json!({}));
    no_seed.as_object_mut().unwrap().remove("seed");
    let p = write_config(dir.path(), "s.json", no_seed);
    let (code, _, err) = run_in_process(&["run", p.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("seed"), "{err}");

    let p = write_config(dir.path(), "e.json", small(json!({"sweep": {"epsilon": []}})));
    let (code, _, err) = run_in_process(&["run", p.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("sweep.epsilon"), "{err}");

    let p = write_config(dir.path(), "m.json", small(json!({"mixture": "missing.json"})));
    assert_eq!(run_in_process(&["run", p.to_str().unwrap()]).0, 1);

    let p = write_config(dir.path(), "t.json", small(json!({"guidance": {"tau1": "hot"}})));
    let (code, _, err) = run_in_process(&["run", p.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("guidance.tau1"), "{err}");
}

#[test]
fn usage_and_help_exit_codes() {
    assert_eq!(run_in_process(&["--help"]).0, 0);
    assert_eq!(run_in_process(&["--version"]).0, 0);
    assert_eq!(run_in_process(&["bogus"]).0, 1);
    assert_eq!(run_in_process(&["field", "x.json"]).0, 1);
    assert_eq!(run_in_process(&["run"]).0, 1);
}

#[test]
fn failed_chain_threshold_exits_three() {
    let dir = setup();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        small(json!({
            "guidance": {"gamma": {"type": "constant", "value": 1e308}, "mean_shift": "direct"},
            "max_failed_fraction": 0.1
        })),
    );
    let out = dir.path().join("out");
    let (code, _, err) = run_in_process(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
    let rows = results(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][column(&out, "failed_chains")], "200");
}

#[test]
fn oracle_smoke_run_is_fast_and_passes() {
    let start = Instant::now();
    let (code, out, err) = run_in_process(&["oracles", "--trials", "1", "--seed", "5"]);
    assert!(start.elapsed().as_secs_f64() < 1.0);
    assert_eq!(code, 0, "{out}{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines.len() >= 10);
    assert!(lines.iter().all(|l| l.starts_with("PASS")));
}

#[test]
fn as_printed_js_weight_fails_the_js_oracle() {
    let output = bin()
        .args(["oracles", "--trials", "20", "--js-weight", "as-printed"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stdout = String::from_utf8(output.stdout).unwrap();
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("gradient:js(as-printed)"), "{stderr}");
    let failing: Vec<&str> = stdout.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert!(failing.iter().all(|l| l.contains("js")), "{stdout}");
}

fn field_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|x| x.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn single_point_field_matches_kernel() {
    let dir = setup();
    let cfg = write_config(dir.path(), "cfg.json", small(json!({"guidance": {"kind": "js"}})));
    let out = dir.path().join("out");
    let (code, _, err) = run_in_process(&[
        "field",
        cfg.to_str().unwrap(),
        "--grid",
        "0.3,1,-0.7,1,1,1",
        "--class",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(out.join("field.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,g1,g2,w_0,w_1");
    let rows = field_rows(&out.join("field.csv"));
    assert_eq!(rows.len(), 1);
    let gmm = GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![-2.0, 0.0], vec![2.0, 0.0]], 0.5).unwrap();
    let spec = GuidanceSpec::with_kind(GuidanceKind::Js);
    let direct = guidance_grad(&AnalyticClassifier::new(gmm), &[0.3, -0.7], 1, &spec, 0.2).unwrap();
    assert_eq!(&rows[0][..2], &[0.3, -0.7]);
    assert_eq!(rows[0][2], direct.value[0]);
    assert_eq!(rows[0][3], direct.value[1]);
}

#[test]
fn field_on_three_dimensional_mixture_is_an_input_error() {
    let dir = setup();
    let mut cfg = small(json!({}));
    cfg["mixture"] = json!({"weights": [1.0], "means": [[0.0, 0.0, 0.0]],
        "covariances": [[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]]});
    let p = write_config(dir.path(), "cfg.json", cfg);
    assert_eq!(run_in_process(&["field", p.to_str().unwrap(), "--grid", "0,1,0,1,2,2"]).0, 1);
}

#[test]
fn baseline_field_respects_reflection_symmetry() {
    let gmm = GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![2.0, 0.0], vec![-2.0, 0.0]], 0.7).unwrap();
    let model = AnalyticClassifier::new(gmm);
    let spec = GuidanceSpec::with_kind(GuidanceKind::None);
    let grid: Grid = "-3,3,-2,2,7,9".parse().unwrap();
    let rows = gradient_field(&model, &spec, &grid, 0, 0.0).unwrap();
    // Reflection across the x1 axis fixes both modes: g1 is even, g2 odd.
    // Reflection across the x2 axis swaps the classes: class-1 field is the
    // mirror image of the class-0 field.
    let swapped = gradient_field(&model, &spec, &grid, 1, 0.0).unwrap();
    let find = |rows: &[fguide_cli::field::FieldRow], x: [f64; 2]| {
        rows.iter()
            .find(|r| (r.x[0] - x[0]).abs() < 1e-12 && (r.x[1] - x[1]).abs() < 1e-12)
            .unwrap()
            .clone()
    };
    for r in &rows {
        let m = find(&rows, [r.x[0], -r.x[1]]);
        assert!((m.g[0] - r.g[0]).abs() < 1e-8 && (m.g[1] + r.g[1]).abs() < 1e-8);
        let s = find(&swapped, [-r.x[0], r.x[1]]);
        assert!((s.g[0] + r.g[0]).abs() < 1e-8 && (s.g[1] - r.g[1]).abs() < 1e-8);
    }
}

#[test]
fn rkl_field_puts_weight_on_non_target_modes_where_confident() {
    let gmm = GaussianMixture::isotropic(
        vec![1.0 / 3.0; 3],
        vec![vec![0.0, 3.0], vec![-2.6, -1.5], vec![2.6, -1.5]],
        0.4,
    )
    .unwrap();
    let model = AnalyticClassifier::new(gmm);
    let grid: Grid = "-4,4,-4,4,21,21".parse().unwrap();
    let rkl = gradient_field(&model, &GuidanceSpec::with_kind(GuidanceKind::Rkl), &grid, 0, 0.0).unwrap();
    let base = gradient_field(&model, &GuidanceSpec::with_kind(GuidanceKind::None), &grid, 0, 0.0).unwrap();
    let mut confident = 0;
    for (r, b) in rkl.iter().zip(&base) {
        let p = fguide_core::prob::softmax(&fguide_core::LogitModel::logits(&model, &r.x).unwrap());
        if p[0] > 0.99 {
            confident += 1;
            for i in 1..3 {
                assert!(r.weights[i] > 0.0, "w_{i} = {} at {:?}", r.weights[i], r.x);
                assert!(r.weights[i] > b.weights[i]);
            }
        }
    }
    assert!(confident > 10);
}

#[test]
fn calibrate_writes_per_seed_rows() {
    let dir = setup();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        small(json!({"calibration": {"seeds": [1, 2], "train_samples": 300, "test_samples": 300}})),
    );
    let out = dir.path().join("out");
    let (code, stdout, err) = run_in_process(&["calibrate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("seed")).count(), 2);
    let text = fs::read_to_string(out.join("calibration.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "seed,lambda,accuracy,binned_ece,smooth_ece");
    assert_eq!(text.lines().count(), 5);
    assert!(out.join("calibrated_1.json").exists() && out.join("calibrated_2.json").exists());
}

#[test]
fn tables_preset_runs_every_stage() {
    let dir = setup();
    let cfg = write_config(dir.path(), "cfg.json", small(json!({"chains": 30, "schedule": {"steps": 10}})));
    let out = dir.path().join("out");
    let (code, _, err) = run_in_process(&["run", cfg.to_str().unwrap(), "--preset", "tables", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    for (stage, rows) in [("tilt", 6), ("alpha", 4), ("epsilon", 3), ("divergence_alpha", 6)] {
        assert_eq!(results(&out.join(stage)).len(), rows, "{stage}");
    }
    assert!(out.join("preset.json").exists());
}
