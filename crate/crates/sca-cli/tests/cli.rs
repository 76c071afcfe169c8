//! End-to-end tests against the compiled binary: artifact layout, exit
//! codes, determinism, and the protocol walk an owner, server, and user
//! would actually perform.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sca_cli::format::{read_codes, read_matrix, write_matrix};
use sca_core::DataMatrix;

fn sca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sca"))
}

fn run(args: &[&str]) -> Output {
    sca().args(args).output().expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Minimal gaussian config with the given sweep values, pointed at `out`.
fn write_config(dir: &Path, s_x: usize, s_p: usize, s_q: usize, radius: &str) -> PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"{{
  "data": {{ "kind": "gaussian", "sigma_x": 1.0, "n_dims": 12, "n_points": 80 }},
  "code_len": 16,
  "s_x_sweep": [{s_x}],
  "s_p_sweep": [{s_p}],
  "s_q": {s_q},
  "radius": {radius},
  "epsilon": 0.05,
  "beta": 1.0,
  "gamma": 0.5,
  "seed": 42,
  "out_dir": "{}"
}}"#,
        out.display()
    );
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn prepare(config: &Path) {
    let out = run(&["--config", config.to_str().unwrap(), "owner-prepare"]);
    assert!(out.status.success(), "owner-prepare failed: {}", stderr(&out));
}

/// Extracts the first column of the generated data as a one-column query file.
fn extract_query(out_dir: &Path, column: usize) -> PathBuf {
    let data = read_matrix(&out_dir.join("data.scam")).unwrap();
    let q = DataMatrix::from_columns(&[data.column_owned(column)]).unwrap();
    let path = out_dir.join("query.scam");
    write_matrix(&path, &q).unwrap();
    path
}

#[test]
fn owner_prepare_writes_the_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, 6, 2, r#"{ "quantile": 0.1 }"#);
    prepare(&config);

    let out = dir.path().join("out");
    for (name, magic) in [
        ("data.scam", b"SCAM".as_slice()),
        ("transform.scam", b"SCAM".as_slice()),
        ("codebook.scac", b"SCAC".as_slice()),
    ] {
        let bytes = fs::read(out.join(name)).unwrap();
        assert_eq!(&bytes[..4], magic, "{name} magic");
    }
    let data = read_matrix(&out.join("data.scam")).unwrap();
    assert_eq!((data.n_dims(), data.n_points()), (12, 80));
    let (code_len, codes) = read_codes(&out.join("codebook.scac")).unwrap();
    assert_eq!(code_len, 16);
    assert_eq!(codes.len(), 80);
    assert!(codes.iter().all(|c| c.nnz() == 4 + 6));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, 6, 2, r#"{ "quantile": 0.1 }"#);
    prepare(&config);
    let out = dir.path().join("out");
    let first: Vec<Vec<u8>> = ["data.scam", "transform.scam", "codebook.scac"]
        .iter()
        .map(|n| fs::read(out.join(n)).unwrap())
        .collect();
    prepare(&config);
    for (i, name) in ["data.scam", "transform.scam", "codebook.scac"]
        .iter()
        .enumerate()
    {
        let again = fs::read(out.join(name)).unwrap();
        assert_eq!(first[i], again, "{name} changed across identical runs");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, 6, 2, r#"{ "quantile": 0.1 }"#);
    let cfg = config.to_str().unwrap();
    let out = dir.path().join("out");

    let ok = run(&["--config", cfg, "--seed", "1", "owner-prepare"]);
    assert!(ok.status.success());
    let seed1 = fs::read(out.join("codebook.scac")).unwrap();

    let ok = run(&["--config", cfg, "--seed", "2", "owner-prepare"]);
    assert!(ok.status.success());
    let seed2 = fs::read(out.join("codebook.scac")).unwrap();
    assert_ne!(seed1, seed2, "different seeds should change the codebook");

    let ok = run(&["--config", cfg, "--seed", "1", "owner-prepare"]);
    assert!(ok.status.success());
    let seed1_again = fs::read(out.join("codebook.scac")).unwrap();
    assert_eq!(seed1, seed1_again);
}

#[test]
fn overbudget_noise_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    // L = 16, S_x = 4 leaves a free budget of 12; ask for 13
    let config = write_config(dir.path(), 4, 13, 0, r#"{ "quantile": 0.1 }"#);
    let out = run(&["--config", config.to_str().unwrap(), "owner-prepare"]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("s_p_sweep"),
        "error should name the offending field: {}",
        stderr(&out)
    );
}

#[test]
fn corrupt_codebook_is_a_format_error_with_an_offset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, 6, 2, r#"{ "quantile": 0.1 }"#);
    prepare(&config);
    let path = dir.path().join("out").join("codebook.scac");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();

    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "server-index",
        "--codebook",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let msg = stderr(&out);
    assert!(msg.contains("at byte"), "diagnostic should carry an offset: {msg}");
}

#[test]
fn missing_query_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, 6, 2, r#"{ "quantile": 0.1 }"#);
    prepare(&config);
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "user-query",
        "--query",
        dir.path().join("nope.scam").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn noiseless_exact_query_returns_the_stored_point() {
    let dir = tempfile::tempdir().unwrap();
    // no database noise, no query noise, radius zero: only the exact
    // latent match can be in the ball
    let config = write_config(dir.path(), 4, 0, 0, r#"{ "absolute": 0.0 }"#);
    prepare(&config);
    let out_dir = dir.path().join("out");
    let query = extract_query(&out_dir, 17);

    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "user-query",
        "--query",
        query.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("chosen_id=17"),
        "expected the stored point back: {text}"
    );
    assert!(text.contains("neighborhood_size=1"), "{text}");

    // the probe should carry exactly S_x entries when S_q = 0
    let (_, probe) = read_codes(&out_dir.join("probe.scac")).unwrap();
    assert_eq!(probe.len(), 1);
    assert_eq!(probe[0].nnz(), 4);
}

#[test]
fn unauthorized_distortion_is_not_lower_than_authorized() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, 8, 2, r#"{ "quantile": 0.05 }"#);
    prepare(&config);
    let out_dir = dir.path().join("out");
    let query = extract_query(&out_dir, 3);

    let distortion = |mode: &str| -> f64 {
        let out = run(&[
            "--config",
            config.to_str().unwrap(),
            "user-query",
            "--query",
            query.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        let text = stdout(&out);
        let line = text
            .lines()
            .find(|l| l.contains("distortion="))
            .unwrap_or_else(|| panic!("no distortion line in: {text}"));
        line.split("distortion=")
            .nth(1)
            .unwrap()
            .split_whitespace()
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    let auth = distortion("authorized");
    let unauth = distortion("unauthorized");
    assert!(
        unauth >= auth,
        "support key should never hurt: authorized {auth}, unauthorized {unauth}"
    );
}

#[test]
fn empty_neighborhood_reports_and_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, 6, 2, r#"{ "absolute": 0.0 }"#);
    prepare(&config);
    let out_dir = dir.path().join("out");
    let query = extract_query(&out_dir, 0);

    // with S_p = 6 > 0 the probe is noisy, so a zero radius finds nothing
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "user-query",
        "--query",
        query.to_str().unwrap(),
        "--radius",
        "0.0",
        "--mode",
        "unauthorized",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(
        stdout(&out).contains("no such point within radius"),
        "stdout: {}",
        stdout(&out)
    );
}

fn write_study_config(dir: &Path) -> PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"{{
  "data": {{ "kind": "clusters", "k": 3, "center_spread": 4.0, "within_sigma": 0.3, "n_dims": 12, "n_points": 90 }},
  "code_len": 12,
  "s_x_sweep": [3, 5],
  "s_p_sweep": [4, 7],
  "s_q": 2,
  "radius": {{ "quantile": 0.1 }},
  "epsilon": 0.05,
  "beta": 1.0,
  "gamma": 0.5,
  "seed": 11,
  "out_dir": "{}",
  "n_pairs": 400,
  "n_queries": 40,
  "fairness_draws": 50000
}}"#,
        out.display()
    );
    let path = dir.join("study.json");
    fs::write(&path, text).unwrap();
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn distortion_study_covers_the_whole_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_study_config(dir.path());
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "experiment",
        "--study",
        "distortion-sparsity",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let rows = read_csv(&dir.path().join("out").join("distortion_sparsity.csv"));
    assert_eq!(rows.len(), 2 * 2, "one row per (s_x, s_p) pair");
    let mut seen: Vec<(String, String)> = rows
        .iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 4, "grid points should not repeat");
}

#[test]
fn recall_study_is_perfect_at_full_report_size() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_study_config(dir.path());
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "experiment",
        "--study",
        "recall",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let rows = read_csv(&dir.path().join("out").join("recall.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], "90", "largest report size should be M");
    let recall: f64 = last[1].parse().unwrap();
    assert!(
        (recall - 1.0).abs() < 1e-12,
        "reporting everything must find everything, got {recall}"
    );
    // monotone in T
    let values: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for pair in values.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-12, "recall should grow with T: {values:?}");
    }
}

#[test]
fn fairness_study_frequencies_stay_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_study_config(dir.path());
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "experiment",
        "--study",
        "fairness",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let rows = read_csv(&dir.path().join("out").join("fairness.csv"));
    assert!(rows.len() >= 2, "need at least two candidates to compare");
    let freqs: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let total: f64 = freqs.iter().sum();
    assert!((total - 1.0).abs() < 1e-9, "frequencies must sum to one");
    let max = freqs.iter().copied().fold(0.0f64, f64::max);
    let min = freqs.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(
        max / min <= 1.05f64 * 1.05,
        "pick frequencies outside the (1+eps)^2 band: {freqs:?}"
    );
}

#[test]
fn study_csvs_are_stable_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_study_config(dir.path());
    let csv = dir.path().join("out").join("distance_preservation.csv");

    let run_with = |threads: &str| {
        let out = sca()
            .args([
                "--config",
                config.to_str().unwrap(),
                "experiment",
                "--study",
                "distance-preservation",
            ])
            .env("SCA_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        fs::read(&csv).unwrap()
    };
    let serial = run_with("1");
    let parallel = run_with("4");
    assert_eq!(serial, parallel, "thread count must not change the CSV");
}

#[test]
fn clustering_study_needs_cluster_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 4, 6, 2, r#"{ "quantile": 0.1 }"#);
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "experiment",
        "--study",
        "clustering-leakage",
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("clusters"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let text = format!(
        r#"{{
  "data": {{ "kind": "gaussian", "sigma_x": 1.0, "n_dims": 8, "n_points": 20 }},
  "code_len": 8,
  "s_x_sweep": [2],
  "s_p_sweep": [2],
  "s_q": 0,
  "radius": {{ "quantile": 0.1 }},
  "epsilon": 0.05,
  "beta": 1.0,
  "gamma": 0.5,
  "seed": 1,
  "out_dir": "{}",
  "surprise": true
}}"#,
        out_dir.display()
    );
    let path = dir.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let out = run(&["--config", path.to_str().unwrap(), "owner-prepare"]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("surprise"), "{}", stderr(&out));
}
