//! End-to-end checks of the `mixcal` binary: every subcommand, file format,
//! and the reproducibility contract on run and sweep outputs.

use std::path::{Path, PathBuf};
use std::process::Command;

use mixcal_harness::models::{separation_model, write_model};
use mixcal_harness::sweep::csv_without_wall_ms;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixcal"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mixcal-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn model_file(dir: &Path) -> PathBuf {
    let path = dir.join("model.json");
    write_model(&path, &separation_model(1.0, 2)).unwrap();
    path
}

#[test]
fn generate_writes_expected_csv() {
    let dir = tmpdir("generate");
    let model = model_file(&dir);
    let out = dir.join("samples.csv");
    let status = bin()
        .args(["generate", "--model"])
        .arg(&model)
        .args(["--n", "50", "--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x0,x1,y,true_component");
    assert_eq!(lines.count(), 50);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_output_is_reproducible_modulo_wall_time() {
    let dir = tmpdir("run");
    let model = model_file(&dir);
    let (a, b) = (dir.join("a.json"), dir.join("b.json"));
    for out in [&a, &b] {
        let status = bin()
            .args(["run", "--model"])
            .arg(&model)
            .args(["--pipeline", "mo_dce", "--t", "512", "--seed", "5", "--candidates", "40", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let strip = |path: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        v["result"]
            .as_object_mut()
            .unwrap()
            .remove("wall_ms")
            .unwrap();
        v
    };
    assert_eq!(strip(&a), strip(&b));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_csv_summary_has_metric_rows() {
    let dir = tmpdir("runcsv");
    let model = model_file(&dir);
    let out = dir.join("summary.csv");
    let status = bin()
        .args(["run", "--model"])
        .arg(&model)
        .args(["--pipeline", "marginal", "--t", "256", "--seed", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("metric,t,max_abs,argmax_g,argmax_v"));
    assert!(text.contains("\ndce,256,"));
    assert!(text.contains("\nmce,256,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_reexecuted_from_manifest_is_bitwise_identical() {
    let dir = tmpdir("sweep");
    let spec_path = dir.join("spec.json");
    std::fs::write(
        &spec_path,
        r#"{
          "schema": "mixcal-sweep-v1",
          "separations": [1.0],
          "dim": 2,
          "pipelines": [{"pipeline": "marginal", "tprime": "t23"},
                        {"pipeline": "ctp_dce", "tprime": "t23"}],
          "t_grid": [128, 256, 512],
          "seeds": 5,
          "seed_base": 11,
          "lambda": 10
        }"#,
    )
    .unwrap();
    let out1 = dir.join("out1");
    let out2 = dir.join("out2");
    let status = bin()
        .args(["sweep", "--spec"])
        .arg(&spec_path)
        .arg("--out-dir")
        .arg(&out1)
        .status()
        .unwrap();
    assert!(status.success());
    let status = bin()
        .args(["sweep", "--from-manifest"])
        .arg(out1.join("manifest.json"))
        .arg("--out-dir")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(status.success());
    let a = std::fs::read_to_string(out1.join("curve.csv")).unwrap();
    let b = std::fs::read_to_string(out2.join("curve.csv")).unwrap();
    assert_eq!(csv_without_wall_ms(&a), csv_without_wall_ms(&b));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_cover_round_trips_cover_json() {
    let dir = tmpdir("cover");
    let model = model_file(&dir);
    let cover_path = dir.join("cover.json");
    let out = bin()
        .args(["verify-cover", "--model"])
        .arg(&model)
        .args([
            "--mode",
            "dce",
            "--candidates",
            "80",
            "--construction-n",
            "400",
            "--holdout-n",
            "400",
            "--eps",
            "0.05",
            "--seed",
            "2",
            "--cover-out",
        ])
        .arg(&cover_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("PASS"), "unexpected verdict: {text}");
    // Re-verify from the serialized cover.
    let out2 = bin()
        .args(["verify-cover", "--model"])
        .arg(&model)
        .args(["--holdout-n", "400", "--seed", "2", "--cover-in"])
        .arg(&cover_path)
        .output()
        .unwrap();
    assert!(out2.status.success());
    assert_eq!(String::from_utf8(out2.stdout).unwrap(), text);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn shatter_demos_report_known_dimensions() {
    let out = bin()
        .args(["shatter", "--demo", "halfspace-2d", "--seed", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("empirical shatter dimension: 3"));
    let out = bin()
        .args(["shatter", "--demo", "ratio-1d", "--seed", "4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("empirical shatter dimension: 2"));
}

#[test]
fn report_exits_nonzero_below_gap_threshold() {
    let dir = tmpdir("report");
    // A gap of exactly zero: identical curves labeled as ctp and mo.
    let mk = |pipeline: &str| {
        let mut text = String::from(
            "schema,model,pipeline,t,seed,status,dce,lce,mce,tprime,cover_size,wall_ms\n",
        );
        for t in [1024u32, 4096, 16384] {
            for seed in 0..5 {
                let err = (t as f64).powf(0.5);
                text.push_str(&format!(
                    "curve-v1,m0,{pipeline},{t},{seed},ok,{err},{err},,1,,0\n"
                ));
            }
        }
        text
    };
    let ctp = dir.join("ctp.csv");
    let mo = dir.join("mo.csv");
    std::fs::write(&ctp, mk("ctp_dce")).unwrap();
    std::fs::write(&mo, mk("mo_dce")).unwrap();
    let status = bin()
        .arg("report")
        .arg(&ctp)
        .arg(&mo)
        .args(["--min-gap", "0.05"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    // Without a configured threshold the same input passes.
    let status = bin().arg("report").arg(&ctp).arg(&mo).status().unwrap();
    assert_eq!(status.code(), Some(0));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors_exit_with_code_two() {
    let status = bin().arg("report").status().unwrap();
    assert_eq!(status.code(), Some(2));
}
