//! End-to-end tests of the command-line interface, run against the compiled
//! binary. Corpora are generated through the CLI itself (simulate --samples)
//! so the tests exercise the full file round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pointctl"))
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(dir: &Path, args: &[&str]) -> (Output, String) {
    let out = bin().current_dir(dir).args(args).output().expect("spawn");
    assert!(!out.status.success(), "command {args:?} unexpectedly passed");
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    (out, stderr)
}

fn csv_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).expect("csv opens");
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column {name} in {header:?}"))
}

fn num(cell: &str) -> f64 {
    cell.parse().unwrap_or_else(|_| panic!("numeric cell, got '{cell}'"))
}

/// Single corpus CSV written under `<out>/samples`.
fn sampled_corpus_file(out: &Path) -> PathBuf {
    let mut files: Vec<_> = std::fs::read_dir(out.join("samples"))
        .expect("samples dir")
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(files.len(), 1, "expected one corpus file in {out:?}");
    files.pop().unwrap()
}

#[test]
fn simulate_two_ol_reaches_target() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        tmp.path(),
        &[
            "simulate", "--model", "2ol-eq", "--k", "40", "--zeta", "1", "--target", "0.212",
            "--n", "485", "--out", "out",
        ],
    );
    let text = std::fs::read_to_string(tmp.path().join("out/trajectory.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "frame,time_s,pos_m,vel_mps,acc_mps2,control");
    assert_eq!(lines.len(), 487);
    let last: Vec<&str> = lines[486].split(',').collect();
    assert_eq!(last[0], "485");
    let final_pos = num(last[2]);
    assert!(
        (final_pos - 0.212).abs() <= 0.0141 / 2.0,
        "final position {final_pos} outside the target zone"
    );
    // Control is one step shorter than the state series.
    assert!(last[5].is_empty());
    assert!(!lines[1].split(',').nth(5).unwrap().is_empty());
}

#[test]
fn simulate_minjerk_zero_duration_is_constant() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        tmp.path(),
        &[
            "simulate", "--model", "minjerk", "--nmj", "0", "--target", "0.1", "--n", "50",
            "--out", "out",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("out/trajectory.csv"));
    let p = col(&header, "pos_m");
    assert_eq!(rows.len(), 51);
    let first = num(&rows[0][p]);
    assert!(rows.iter().all(|r| num(&r[p]) == first));
}

#[test]
fn simulate_same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--model", "lqg", "--omega-r", "1e-3", "--omega-v", "1", "--omega-f", "0.5",
        "--sigma-u", "0.5", "--sigma-s", "0.5", "--target", "0.15", "--n", "150", "--samples",
        "3", "--jitter", "0.0002", "--seed", "7",
    ];
    let mut a = args.to_vec();
    a.extend(["--out", "a"]);
    run_ok(tmp.path(), &a);
    let mut b = args.to_vec();
    b.extend(["--out", "b"]);
    run_ok(tmp.path(), &b);
    for name in ["trajectory.csv", "distribution.json"] {
        let x = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let y = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let x = std::fs::read(sampled_corpus_file(&tmp.path().join("a"))).unwrap();
    let y = std::fs::read(sampled_corpus_file(&tmp.path().join("b"))).unwrap();
    assert_eq!(x, y, "sampled corpus differs between identical runs");
}

#[test]
fn config_file_matches_flags_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("cfg.json"),
        r#"{"model": "2ol-eq", "k": 40, "zeta": 1, "target": 0.1, "n": 80}"#,
    )
    .unwrap();
    run_ok(
        tmp.path(),
        &["simulate", "--config", "cfg.json", "--out", "from-config"],
    );
    run_ok(
        tmp.path(),
        &[
            "simulate", "--model", "2ol-eq", "--k", "40", "--zeta", "1", "--target", "0.1",
            "--n", "80", "--out", "from-flags",
        ],
    );
    let a = std::fs::read(tmp.path().join("from-config/trajectory.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("from-flags/trajectory.csv")).unwrap();
    assert_eq!(a, b, "config run and flag run should agree");

    // An explicit flag overrides the same key in the config.
    run_ok(
        tmp.path(),
        &["simulate", "--config", "cfg.json", "--k", "80", "--out", "override"],
    );
    let c = std::fs::read(tmp.path().join("override/trajectory.csv")).unwrap();
    assert_ne!(a, c, "--k on the command line must override the config");
}

fn make_two_ol_corpus(dir: &Path) -> PathBuf {
    run_ok(
        dir,
        &[
            "simulate", "--model", "2ol-eq", "--k", "40", "--zeta", "1", "--target", "0.15",
            "--n", "120", "--samples", "6", "--jitter", "0.0001", "--seed", "3", "--out", "gen",
        ],
    );
    dir.join("gen/samples")
}

#[test]
fn fit_recovers_generator_on_synthetic_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = make_two_ol_corpus(tmp.path());
    run_ok(
        tmp.path(),
        &[
            "fit", "--model", "2ol-eq", "--corpus", corpus.to_str().unwrap(),
            "--skip-reaction-strip", "--seed", "5", "--out", "fit",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("fit/summary.csv"));
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row[col(&header, "model")], "2ol-eq");
    assert!(row[col(&header, "error")].is_empty());
    assert_eq!(row[col(&header, "converged")], "true");
    let k = num(&row[col(&header, "k")]);
    let d = num(&row[col(&header, "d")]);
    let zeta = d / (2.0 * k.sqrt());
    assert!((k - 40.0).abs() / 40.0 < 0.05, "k = {k}");
    assert!((zeta - 1.0).abs() < 0.05, "zeta = {zeta}");

    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(
            tmp.path().join("fit/fit-2ol-eq__sim__d0.15__w0.0141__right.json"),
        )
        .unwrap(),
    )
    .unwrap();
    assert_eq!(json["model"], "2ol-eq");
    assert_eq!(json["seed"], 5);
    assert_eq!(json["loss"].as_f64().unwrap(), num(&row[col(&header, "loss")]));
    assert_eq!(json["params"]["k"].as_f64().unwrap(), k);
    assert!(json["history"].as_array().unwrap().len() > 1);
}

#[test]
fn fit_zero_generations_reports_unconverged() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = make_two_ol_corpus(tmp.path());
    run_ok(
        tmp.path(),
        &[
            "fit", "--model", "2ol-eq", "--corpus", corpus.to_str().unwrap(),
            "--skip-reaction-strip", "--max-generations", "0", "--out", "fit0",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("fit0/summary.csv"));
    assert_eq!(rows[0][col(&header, "converged")], "false");
    assert_eq!(rows[0][col(&header, "generations")], "0");
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(
            tmp.path().join("fit0/fit-2ol-eq__sim__d0.15__w0.0141__right.json"),
        )
        .unwrap(),
    )
    .unwrap();
    assert_eq!(json["history"].as_array().unwrap().len(), 1);
}

#[test]
fn fit_batch_writes_one_row_per_condition() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("corpus")).unwrap();
    for (participant, target, seed) in [("pa", "0.15", "3"), ("pb", "0.1", "4")] {
        run_ok(
            tmp.path(),
            &[
                "simulate", "--model", "2ol-eq", "--k", "40", "--zeta", "1", "--target", target,
                "--n", "120", "--samples", "5", "--jitter", "0.0001", "--seed", seed,
                "--participant", participant, "--out", &format!("gen-{participant}"),
            ],
        );
        let file = sampled_corpus_file(&tmp.path().join(format!("gen-{participant}")));
        std::fs::copy(&file, tmp.path().join("corpus").join(file.file_name().unwrap())).unwrap();
    }
    run_ok(
        tmp.path(),
        &[
            "fit", "--model", "2ol-eq", "--corpus", "corpus", "--skip-reaction-strip",
            "--max-generations", "40", "--out", "fit",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("fit/summary.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][col(&header, "participant")], "pa");
    assert_eq!(rows[1][col(&header, "participant")], "pb");
    assert!(rows.iter().all(|r| r[col(&header, "error")].is_empty()));
}

#[test]
fn fit_empty_selection_fails_with_one_error_line() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = make_two_ol_corpus(tmp.path());
    let (_, stderr) = run_err(
        tmp.path(),
        &[
            "fit", "--model", "2ol-eq", "--corpus", corpus.to_str().unwrap(),
            "--participant", "nobody",
        ],
    );
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {stderr}");
    assert!(lines[0].starts_with("error: cli: "), "stderr: {stderr}");
}

#[test]
fn compare_reference_against_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = make_two_ol_corpus(tmp.path());
    let file = sampled_corpus_file(&tmp.path().join("gen"));
    run_ok(
        tmp.path(),
        &[
            "compare", "--corpus", corpus.to_str().unwrap(), "--external",
            file.to_str().unwrap(), "--skip-reaction-strip", "--out", "cmp",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("cmp/comparison.csv"));
    let row = rows
        .iter()
        .find(|r| r[col(&header, "model")] == "external" && r[col(&header, "participant")] != "ALL")
        .expect("external row");
    for name in ["sse_pos", "max_err_pos", "sse_vel", "max_err_vel", "mwd"] {
        assert_eq!(num(&row[col(&header, name)]), 0.0, "{name} should be exactly zero");
    }
    assert!(num(&row[col(&header, "mkl")]).abs() < 1e-9);
}

#[test]
fn compare_prefers_the_generating_family() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        tmp.path(),
        &[
            "simulate", "--model", "lqg", "--omega-r", "1e-3", "--omega-v", "1", "--omega-f",
            "0.5", "--sigma-u", "0.5", "--sigma-s", "0.5", "--target", "0.15", "--n", "150",
            "--samples", "12", "--seed", "11", "--out", "gen",
        ],
    );
    run_ok(
        tmp.path(),
        &[
            "compare", "--corpus", "gen/samples", "--models", "lqg,2ol-eq",
            "--skip-reaction-strip", "--seed", "9", "--max-generations", "60", "--patience",
            "25", "--out", "cmp",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("cmp/comparison.csv"));
    let mwd_of = |label: &str| -> f64 {
        let row = rows
            .iter()
            .find(|r| r[col(&header, "model")] == label && r[col(&header, "participant")] != "ALL")
            .unwrap_or_else(|| panic!("row for {label}"));
        assert!(row[col(&header, "error")].is_empty(), "{label} fit failed");
        num(&row[col(&header, "mwd")])
    };
    assert!(
        mwd_of("lqg") < mwd_of("2ol-eq"),
        "the generating family should score the lower distribution distance"
    );
}

#[test]
fn compare_clips_external_series_of_different_length() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = make_two_ol_corpus(tmp.path());
    run_ok(
        tmp.path(),
        &[
            "simulate", "--model", "2ol-eq", "--k", "40", "--zeta", "1", "--target", "0.15",
            "--n", "80", "--samples", "4", "--jitter", "0.0001", "--seed", "8", "--out", "short",
        ],
    );
    let external = sampled_corpus_file(&tmp.path().join("short"));
    run_ok(
        tmp.path(),
        &[
            "compare", "--corpus", corpus.to_str().unwrap(), "--external",
            external.to_str().unwrap(), "--skip-reaction-strip", "--out", "cmp",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("cmp/comparison.csv"));
    let row = rows
        .iter()
        .find(|r| r[col(&header, "model")] == "external" && r[col(&header, "participant")] != "ALL")
        .expect("external row");
    assert_eq!(row[col(&header, "n_ref")], "121");
    assert_eq!(row[col(&header, "n_used")], "81");
}

#[test]
fn sweep_damping_ratio_overshoots_only_underdamped() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        tmp.path(),
        &[
            "sweep", "--model", "2ol-eq", "--k", "40", "--param", "zeta", "--grid", "0.5,1,2",
            "--target", "0.1", "--n", "400", "--svg", "--out", "sw",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("sw/sweep.csv"));
    assert_eq!(rows.len(), 3);
    let overshoot = col(&header, "max_overshoot_m");
    assert!(num(&rows[0][overshoot]) > 1e-3, "underdamped should overshoot");
    assert_eq!(num(&rows[1][overshoot]), 0.0);
    assert_eq!(num(&rows[2][overshoot]), 0.0);
    let svg = std::fs::read_to_string(tmp.path().join("sw/sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("zeta=0.5"));
}

#[test]
fn sweep_control_noise_time_to_target_dips_at_interior_point() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        tmp.path(),
        &[
            "sweep", "--model", "lqg", "--omega-r", "1e-3", "--omega-v", "1", "--omega-f",
            "0.5", "--sigma-s", "0.5", "--param", "sigma-u", "--grid",
            "0.001,0.25,0.5,0.75,1,1.5,2,2.75,3.5,5", "--target", "0.212", "--n", "485",
            "--out", "sw",
        ],
    );
    let (header, rows) = csv_table(&tmp.path().join("sw/sweep.csv"));
    assert_eq!(rows.len(), 10);
    let ttt = col(&header, "time_to_target_s");
    // A movement that never enters the target zone counts as infinitely slow.
    let times: Vec<f64> = rows
        .iter()
        .map(|r| {
            let cell = &r[ttt];
            if cell.is_empty() { f64::INFINITY } else { num(cell) }
        })
        .collect();
    let best = times
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!(times[best].is_finite());
    assert!(
        best > 0 && best < times.len() - 1,
        "expected an interior minimum, got index {best} of {times:?}"
    );
    assert!(times[0] > times[best] && times[times.len() - 1] > times[best]);
}

#[test]
fn sweep_single_grid_point_yields_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        tmp.path(),
        &[
            "sweep", "--model", "2ol-eq", "--k", "40", "--param", "zeta", "--from", "1",
            "--to", "9", "--steps", "1", "--target", "0.1", "--n", "100", "--out", "sw",
        ],
    );
    let (_, rows) = csv_table(&tmp.path().join("sw/sweep.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "1");
}

#[test]
fn failures_emit_one_machine_parsable_line() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, stderr) = run_err(
        tmp.path(),
        &["simulate", "--model", "warp", "--target", "1"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error: parameter: "), "stderr: {stderr}");

    let (out, stderr) = run_err(tmp.path(), &["sweep", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error: cli: "), "stderr: {stderr}");

    let (_, stderr) = run_err(tmp.path(), &["simulate", "--model", "lqg", "--target", "1"]);
    assert!(stderr.starts_with("error: cli: model lqg requires "), "stderr: {stderr}");
}
