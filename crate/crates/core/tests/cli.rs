//! End-to-end runs of the `gasg` binary.

use std::path::Path;
use std::process::Command;

use gasg_core::gasg21::init_subspace;
use gasg_core::io;
use gasg_core::rng;
use tempfile::TempDir;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn gasg(dir: &Path, args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_gasg")).current_dir(dir).args(args).output().unwrap();
    Out {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = gasg(dir, args);
    assert_eq!(o.code, 0, "gasg {args:?} failed: {}", o.stderr);
    o.stdout
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn field(line: &str, key: &str) -> f64 {
    let tok = line.split_whitespace().find_map(|t| t.strip_prefix(&format!("{key}="))).unwrap();
    tok.trim_end_matches('%').parse().unwrap()
}

const SMALL: &[&str] = &[
    "synth", "--mode", "low-rank", "--n", "200", "--m", "200", "--d", "5", "--outliers", "0.5", "--smin", "2000",
    "--smax", "10000", "--seed", "7",
];

fn small_union(dir: &Path) {
    ok(
        dir,
        &["synth", "--mode", "union", "--k", "3", "--d", "2", "--n", "20", "--per", "40", "--outliers", "0.1", "--observe", "0.8", "--seed", "5"],
    );
}

#[test]
fn synth_low_rank_writes_the_expected_files() {
    let t = TempDir::new().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--observe", "0.7"]);
    ok(t.path(), &args);
    let data = io::parse_matrix(&read(t.path(), "data.csv")).unwrap();
    assert_eq!((data.nrows(), data.ncols()), (200, 200));
    let obs = io::parse_observations(&read(t.path(), "observations.txt")).unwrap();
    assert_eq!(obs.columns.len(), 200);
    assert!(obs.columns.iter().all(|c| c.len() == 140));
    assert_eq!(io::parse_bases(&read(t.path(), "truth.csv"), Some(5)).unwrap().len(), 1);
    let labels = io::parse_labels(&read(t.path(), "labels.txt")).unwrap();
    assert_eq!(labels.len(), 200);
    assert_eq!(labels.iter().filter(|l| l.is_none()).count(), 100);
}

#[test]
fn synth_union_has_two_thousand_columns() {
    let t = TempDir::new().unwrap();
    let out = ok(
        t.path(),
        &["synth", "--mode", "union", "--k", "20", "--d", "3", "--n", "100", "--per", "50", "--outliers", "0.5", "--seed", "1"],
    );
    assert!(out.contains("columns=2000"), "{out}");
    let labels = io::parse_labels(&read(t.path(), "labels.txt")).unwrap();
    assert_eq!(labels.len(), 2000);
    assert_eq!(labels.iter().filter(|l| l.is_some()).count(), 1000);
    assert_eq!(io::parse_bases(&read(t.path(), "truth.csv"), Some(3)).unwrap().len(), 20);
}

#[test]
fn synth_is_byte_identical_under_a_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--observe", "0.6"]);
    ok(a.path(), &args);
    ok(b.path(), &args);
    for f in ["data.csv", "observations.txt", "truth.csv", "labels.txt"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
}

#[test]
fn recover_stops_at_the_angle_tolerance() {
    let t = TempDir::new().unwrap();
    ok(t.path(), SMALL);
    let out = ok(
        t.path(),
        &["recover", "--mask", "observations.txt", "--truth", "truth.csv", "-d", "5", "--passes", "20", "--angle-tol", "1e-3", "--seed", "3"],
    );
    assert!(field(&out, "final_angle") <= 1e-3, "{out}");
    assert!(field(&out, "iterations") < 4000.0);
    let trace = gasg_core::trace::RunTrace::from_csv(&read(t.path(), "trace.csv")).unwrap();
    assert_eq!(trace.len() as f64, field(&out, "iterations"));
}

#[test]
fn diminishing_ends_further_from_the_truth_than_adaptive() {
    let t = TempDir::new().unwrap();
    ok(t.path(), SMALL);
    let common = ["recover", "--mask", "observations.txt", "--truth", "truth.csv", "-d", "5", "--iters", "2000", "--seed", "3"];
    let adaptive = field(&ok(t.path(), &common), "final_angle");
    let mut args = common.to_vec();
    args.extend(["--step-rule", "diminishing"]);
    let diminishing = field(&ok(t.path(), &args), "final_angle");
    assert!(diminishing > adaptive, "diminishing {diminishing} vs adaptive {adaptive}");
}

#[test]
fn zero_iterations_writes_the_initial_basis() {
    let t = TempDir::new().unwrap();
    ok(t.path(), SMALL);
    let out = ok(t.path(), &["recover", "--mask", "observations.txt", "-d", "5", "--iters", "0", "--seed", "42"]);
    assert!(out.contains("iterations=0"));
    let basis = io::parse_bases(&read(t.path(), "basis.csv"), Some(5)).unwrap();
    let init = init_subspace(200, 5, &mut rng::seeded(42)).unwrap();
    assert_eq!(basis, vec![init]);
}

#[test]
fn cluster_with_one_subspace_matches_recover() {
    let t = TempDir::new().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--observe", "0.7"]);
    ok(t.path(), &args);
    let common = ["--mask", "observations.txt", "-d", "5", "--iters", "700", "--seed", "9"];
    let mut rec = vec!["recover", "--basis-out", "r.csv", "--trace-out", "rt.csv"];
    rec.extend(common);
    ok(t.path(), &rec);
    let mut clu = vec!["cluster", "--k", "1", "--basis-out", "c.csv", "--trace-out", "ct.csv"];
    clu.extend(common);
    ok(t.path(), &clu);
    assert_eq!(read(t.path(), "r.csv"), read(t.path(), "c.csv"));
    assert_eq!(read(t.path(), "rt.csv"), read(t.path(), "ct.csv"));
}

#[test]
fn segmentation_error_ignores_label_ids() {
    let t = TempDir::new().unwrap();
    small_union(t.path());
    let labels = io::parse_labels(&read(t.path(), "labels.txt")).unwrap();
    let permuted: Vec<_> = labels.iter().map(|l| l.map(|k| (k + 1) % 3 + 10)).collect();
    std::fs::write(t.path().join("permuted.txt"), io::format_labels(&permuted)).unwrap();
    let run = |labels: &str| {
        let out = ok(
            t.path(),
            &["cluster", "--mask", "observations.txt", "--k", "3", "-d", "2", "--q-factor", "4", "--max-iter", "3000", "--seed", "2", "--truth-labels", labels],
        );
        out.lines().find(|l| l.starts_with("segmentation_error=")).unwrap().to_string()
    };
    assert_eq!(run("labels.txt"), run("permuted.txt"));
}

#[test]
fn eval_reproduces_the_cluster_report() {
    let t = TempDir::new().unwrap();
    small_union(t.path());
    std::fs::rename(t.path().join("labels.txt"), t.path().join("truth_labels.txt")).unwrap();
    let out = ok(
        t.path(),
        &["cluster", "--mask", "observations.txt", "--truth", "truth.csv", "--truth-labels", "truth_labels.txt", "--k", "3", "-d", "2", "--q-factor", "4", "--max-iter", "3000", "--seed", "2", "--labels-out", "pred.txt"],
    );
    let eval = ok(
        t.path(),
        &["eval", "--truth", "truth.csv", "-d", "2", "--basis", "basis_0.csv", "--basis", "basis_1.csv", "--basis", "basis_2.csv", "--truth-labels", "truth_labels.txt", "--labels", "pred.txt"],
    );
    let want: Vec<&str> = out.lines().filter(|l| l.starts_with("theta_") || l.starts_with("segmentation_")).collect();
    let got: Vec<&str> = eval.lines().collect();
    assert_eq!(got, want);
    let json: serde_json::Value = serde_json::from_str(
        &ok(t.path(), &["eval", "--truth", "truth.csv", "-d", "2", "--basis", "basis_0.csv", "--basis", "basis_1.csv", "--basis", "basis_2.csv", "--json"]),
    )
    .unwrap();
    assert_eq!(format!("{:.6e}", json["angles"]["mean"].as_f64().unwrap()), format!("{:.6e}", field(want[0], "theta_mean")));
}

#[test]
fn eval_angles_of_identical_and_disjoint_bases() {
    let t = TempDir::new().unwrap();
    std::fs::write(t.path().join("a.csv"), "1,0\n0,1\n0,0\n0,0\n").unwrap();
    std::fs::write(t.path().join("b.csv"), "0,0\n0,0\n1,0\n0,1\n").unwrap();
    let same = ok(t.path(), &["eval", "--truth", "a.csv", "--basis", "a.csv"]);
    assert!(field(&same, "theta_worst") < 1e-15, "{same}");
    let disjoint = ok(t.path(), &["eval", "--truth", "a.csv", "--basis", "b.csv"]);
    assert!((field(&disjoint, "theta_worst") - std::f64::consts::FRAC_PI_2).abs() < 1e-6, "{disjoint}");
}

#[test]
fn exit_codes() {
    let t = TempDir::new().unwrap();
    assert_eq!(gasg(t.path(), &["recover", "--mask", "observations.txt"]).code, 1, "missing --rank");
    assert_eq!(gasg(t.path(), &["frobnicate"]).code, 1);
    assert_eq!(gasg(t.path(), &["--help"]).code, 0);
    assert_eq!(gasg(t.path(), &["recover", "--mask", "missing.txt", "-d", "2"]).code, 2);
    std::fs::write(t.path().join("bad.txt"), "0 0 x\n").unwrap();
    assert_eq!(gasg(t.path(), &["recover", "--mask", "bad.txt", "-d", "2"]).code, 2);
    std::fs::write(t.path().join("a.csv"), "1,0\n0,1\n0,0\n").unwrap();
    std::fs::write(t.path().join("c.csv"), "1\n0\n0\n0\n").unwrap();
    assert_eq!(gasg(t.path(), &["eval", "--truth", "a.csv", "--basis", "c.csv"]).code, 2, "shape mismatch");
    // every column has fewer observed rows than the rank
    std::fs::write(t.path().join("thin.txt"), "0 0 1\n1 3 2\n2 4 -1\n").unwrap();
    let o = gasg(t.path(), &["recover", "--mask", "thin.txt", "-d", "2", "--ambient-dim", "5", "--iters", "10"]);
    assert_eq!(o.code, 3, "{}", o.stderr);
    std::fs::write(t.path().join("ok.txt"), "0 0 1\n0 1 2\n0 2 3\n").unwrap();
    assert_eq!(gasg(t.path(), &["recover", "--mask", "ok.txt", "-d", "1", "--mu-max=-1"]).code, 1);
}
