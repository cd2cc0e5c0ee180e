use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mbcrb::config::ConfigFile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mbcrb"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// `quantity -> row-major values` from a long-format bound.csv.
fn read_bound(path: &Path, quantity: &str) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[0] == quantity)
        .map(|r| r[3].parse().unwrap())
        .collect()
}

#[test]
fn bundled_configs_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let parsed = ConfigFile::from_path(&path).unwrap();
        let experiment = parsed.to_experiment().unwrap();
        let again = ConfigFile::from_json(&parsed.to_json()).unwrap();
        assert_eq!(parsed, again, "{}", path.display());
        assert_eq!(again.to_experiment().unwrap(), experiment);
        count += 1;
    }
    assert!(count >= 5);
}

#[test]
fn bound_writes_psd_mbcrb_block() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(bin().args(["bound", "--config"]).arg(bundled("paper_fig1.json")).arg("--out").arg(tmp.path()));
    let values = read_bound(&tmp.path().join("bound.csv"), "mbcrb");
    assert_eq!(values.len(), 9);
    let m = nalgebra::DMatrix::from_row_slice(3, 3, &values);
    assert!(mbcrb_core::linalg::is_psd(&m, 1e-10));
    assert!(tmp.path().join("bound_summary.csv").exists());
}

#[test]
fn matched_flat_config_gives_equal_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(bin().args(["bound", "--config"]).arg(bundled("matched_flat.json")).arg("--out").arg(tmp.path()));
    let path = tmp.path().join("bound.csv");
    let (m, b) = (read_bound(&path, "mbcrb"), read_bound(&path, "bcrb"));
    assert_eq!(m.len(), 9);
    for (x, y) in m.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-3), "{x} vs {y}");
    }
}

#[test]
fn out_of_range_rho_exits_one_with_path() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(bundled("paper_fig1.json")).unwrap();
    let bad = text.replacen("\"rho\": 0.5", "\"rho\": 1.5", 1);
    assert_ne!(bad, text);
    let config = tmp.path().join("bad.json");
    std::fs::write(&config, bad).unwrap();
    let out_dir = tmp.path().join("out");
    let out = bin().args(["bound", "--config"]).arg(&config).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("true_model.noise.ar1.rho"), "{stderr}");
    assert!(!out_dir.exists());
}

#[test]
fn indefinite_covariance_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(bundled("scalar_example.json")).unwrap();
    let bad = text.replacen("\"noise\": {\"matrix\": [[1.0]]}", "\"noise\": {\"matrix\": [[-1.0]]}", 1);
    assert_ne!(bad, text);
    let config = tmp.path().join("bad.json");
    std::fs::write(&config, bad).unwrap();
    let out = bin().args(["run", "--config"]).arg(&config).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_and_bad_arguments_exit_one() {
    let out = bin().args(["bound", "--config", "/nonexistent.json", "--out", "/tmp/x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["run", "--config"]).arg(bundled("scalar_example.json")).args(["--out", "/tmp/x", "--trials", "five"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["run", "--config"]).arg(bundled("scalar_example.json")).args(["--out", "/tmp/x", "--trials", "10"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn sweep_run(config: &Path, out: &Path, extra: &[&str]) -> Vec<u8> {
    run_ok(bin().args(["run", "--config"]).arg(config).arg("--out").arg(out).args(extra));
    std::fs::read(out.join("sweep.csv")).unwrap()
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = bundled("paper_fig2.json");
    let a = sweep_run(&config, &tmp.path().join("a"), &["--trials", "500", "--threads", "1"]);
    let b = sweep_run(&config, &tmp.path().join("b"), &["--trials", "500", "--threads", "1"]);
    let c = sweep_run(&config, &tmp.path().join("c"), &["--trials", "500", "--threads", "4"]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("axis_value,component_index,rmse,rmse_stderr,biased_bound_floor,bcrb_floor\n"));
    assert_eq!(text.lines().count(), 1 + 40 * 3);
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = bundled("scalar_example.json");
    let first = sweep_run(&config, &tmp.path().join("a"), &["--trials", "300", "--seed", "4242"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 4242);
    assert_eq!(manifest["trials"], 300);
    let digest = mbcrb::output::sha256_hex(&std::fs::read(&config).unwrap());
    assert_eq!(manifest["config_sha256"], digest.as_str());
    let seed = manifest["master_seed"].to_string();
    let trials = manifest["trials"].to_string();
    let second = sweep_run(&config, &tmp.path().join("b"), &["--trials", &trials, "--seed", &seed]);
    assert_eq!(first, second);
    let other = sweep_run(&config, &tmp.path().join("c"), &["--trials", &trials]);
    assert_ne!(first, other);
}

#[test]
fn svg_outputs_are_well_formed() {
    let tmp = tempfile::tempdir().unwrap();
    sweep_run(&bundled("paper_fig3_top.json"), tmp.path(), &["--trials", "200"]);
    for i in 0..3 {
        let text = std::fs::read_to_string(tmp.path().join(format!("component_{i}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert_eq!(polylines, 3);
    }
    let trace = std::fs::read_to_string(tmp.path().join("sweep_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 10);
}

#[test]
fn pseudotrue_command_agrees_with_closed_form() {
    let out = run_ok(bin().args(["pseudotrue", "--config"]).arg(bundled("scalar_example.json")).args(["--psi", "3"]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("closed form: 1.2"), "{text}");

    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        bin()
            .args(["pseudotrue", "--config"])
            .arg(bundled("paper_fig1.json"))
            .args(["--psi", "10", "20", "5", "--out"])
            .arg(tmp.path()),
    );
    let mut reader = csv::Reader::from_path(tmp.path().join("pseudotrue.csv")).unwrap();
    for record in reader.records() {
        let diff: f64 = record.unwrap()[3].parse().unwrap();
        assert!(diff <= 1e-8);
    }

    let out = run_ok(bin().args(["pseudotrue", "--config"]).arg(bundled("matched_flat.json")).args(["--psi", "-3", "0.5", "7"]));
    let text = String::from_utf8(out.stdout).unwrap();
    for (prefix, expected) in [("closed form:", [-3.0, 0.5, 7.0]), ("numeric:", [-3.0, 0.5, 7.0])] {
        let line = text.lines().find(|l| l.starts_with(prefix)).unwrap();
        let values: Vec<f64> = line[prefix.len()..].split_whitespace().map(|v| v.parse().unwrap()).collect();
        for (v, e) in values.iter().zip(expected) {
            assert!((v - e).abs() <= 1e-12, "{text}");
        }
    }
}

#[test]
fn pseudotrue_rejects_wrong_length() {
    let out = bin().args(["pseudotrue", "--config"]).arg(bundled("paper_fig1.json")).args(["--psi", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
