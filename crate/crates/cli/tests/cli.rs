use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn lidqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lidqr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let o = lidqr(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn code(args: &[&str]) -> i32 {
    lidqr(args).status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn linear_csv(dir: &Path, n: usize) -> String {
    let mut t = String::from("x,y\n");
    for i in 0..n {
        let x = i as f64 / n as f64;
        let e = ((i * 7919) % 97) as f64 / 97.0 - 0.5;
        t += &format!("{x},{}\n", 1.0 + 2.0 * x + e);
    }
    write(dir, "lin.csv", &t)
}

#[test]
fn rq_median_of_constant_offsets() {
    let d = scratch("rq_median");
    let input = write(&d, "toy.csv", "y\n1\n2\n3\n4\n2\n");
    let out = d.join("out");
    ok(&["fit", "--input", &input, "--method", "rq", "--taus", "0.5", "--out", out.to_str().unwrap()]);
    let rows = read_rows(&out.join("summary.csv"));
    assert_eq!(rows[0], ["target", "estimate", "sd", "q025", "q50", "q975"]);
    assert_eq!(rows[1][0], "intercept@0.5");
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), 2.0);
}

#[test]
fn lid_fit_is_deterministic_and_replayable() {
    let d = scratch("lid_replay");
    let input = linear_csv(&d, 80);
    let run = |name: &str| {
        let out = d.join(name);
        ok(&["fit", "--input", &input, "--m", "3", "--iters", "5000", "--seed", "9", "--contrast", "x@0.75-x@0.25", "--out", out.to_str().unwrap()]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["draws.csv", "summary.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = d.join("c");
    ok(&["replay", a.join("manifest.json").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(std::fs::read(a.join("draws.csv")).unwrap(), std::fs::read(c.join("draws.csv")).unwrap());

    let draws = read_rows(&a.join("draws.csv"));
    assert_eq!(draws[0].len(), 6);
    assert_eq!(draws.len() - 1, 1250);
    let summary = read_rows(&a.join("summary.csv"));
    assert!(summary.iter().any(|r| r[0] == "x@0.75-x@0.25"));
}

#[test]
fn replay_detects_changed_input() {
    let d = scratch("replay_changed");
    let input = linear_csv(&d, 30);
    let out = d.join("out");
    ok(&["fit", "--input", &input, "--method", "rq", "--out", out.to_str().unwrap()]);
    std::fs::write(&input, "x,y\n0,1\n1,2\n").unwrap();
    let m = out.join("manifest.json");
    assert_eq!(code(&["replay", m.to_str().unwrap(), "--out", d.join("again").to_str().unwrap()]), 3);
}

#[test]
fn thread_count_does_not_change_results() {
    let d = scratch("threads");
    let run = |threads: &str| {
        let out = d.join(format!("t{threads}"));
        ok(&["simulate", "--example", "1", "--n", "50", "--reps", "4", "--methods", "rq,lid", "--iters", "3000", "--seed", "1", "--threads", threads, "--out", out.to_str().unwrap()]);
        std::fs::read(out.join("mse.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn simulate_example_two_reports_both_slopes() {
    let d = scratch("sim2");
    let out = d.join("out");
    ok(&["simulate", "--example", "2", "--n", "60", "--reps", "2", "--methods", "oracle,rq", "--out", out.to_str().unwrap()]);
    let rows = read_rows(&out.join("mse.csv"));
    assert_eq!(rows[0], ["method", "target", "n_times_mse", "se"]);
    for t in ["b@0.5", "c@0.75-c@0.5"] {
        assert!(rows.iter().any(|r| r[0] == "rq" && r[1] == t));
    }
    for r in rows.iter().filter(|r| r[0] == "oracle") {
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn evaluate_writes_coverage_near_nominal() {
    let d = scratch("evaluate");
    let input = linear_csv(&d, 1000);
    let out = d.join("out");
    ok(&["evaluate", "--input", &input, "--methods", "rq", "--test-fraction", "0.3", "--out", out.to_str().unwrap()]);
    let rows = read_rows(&out.join("coverage.csv"));
    assert_eq!(rows[0], ["method", "tau", "coverage", "n_test"]);
    assert_eq!(rows.len(), 6);
    for r in &rows[1..] {
        let (tau, cov): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert_eq!(r[3], "300");
        assert!((cov - tau).abs() < 0.1, "{tau} {cov}");
    }
}

#[test]
fn exit_codes() {
    let d = scratch("exit_codes");
    let input = linear_csv(&d, 40);
    let bad = write(&d, "bad.csv", "x,y\n1,2\n3,oops\n");
    let o = d.join("out");
    let o = o.to_str().unwrap();
    assert_eq!(code(&["simulate", "--reps", "0", "--out", o]), 2);
    assert_eq!(code(&["evaluate", "--input", &input, "--test-fraction", "1.0", "--out", o]), 2);
    assert_eq!(code(&["fit", "--input", &input, "--taus", "0.3", "--out", o]), 2);
    assert_eq!(code(&["fit", "--input", &input, "--method", "lid", "--bootstrap", "10", "--out", o]), 2);
    assert_eq!(code(&["fit", "--input", &bad, "--method", "rq", "--out", o]), 3);
    assert_eq!(code(&["fit", "--input", &input, "--response", "z", "--out", o]), 3);
    assert_eq!(code(&["fit", "--input", d.join("missing.csv").to_str().unwrap(), "--out", o]), 3);
}

#[test]
fn bootstrap_summary_has_spread() {
    let d = scratch("bootstrap");
    let input = linear_csv(&d, 60);
    let out = d.join("out");
    ok(&["fit", "--input", &input, "--method", "ewrq", "--bootstrap", "40", "--seed", "2", "--out", out.to_str().unwrap()]);
    let rows = read_rows(&out.join("summary.csv"));
    for r in &rows[1..] {
        let (est, sd, lo, hi): (f64, f64, f64, f64) =
            (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap(), r[5].parse().unwrap());
        assert!(sd > 0.0 && lo < hi && est.is_finite(), "{r:?}");
    }
}
