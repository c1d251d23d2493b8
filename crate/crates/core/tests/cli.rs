//! End-to-end tests of the `inflap` binary: file round-trips, byte-level
//! determinism, and the exit-code contract (0 pass, 1 config, 2 numeric,
//! 3 verification failure).

use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inflap"))
}

fn write(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn solve_writes_field_and_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let dom = write(
        dir.path(),
        "interval.dom",
        "shape = interval\nendpoints = -1 1\n",
    );
    let out = bin()
        .args(["solve", "--eps", "0.125", "--f", "1"])
        .arg("--domain")
        .arg(&dom)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("sup_diff"), "per-sweep log expected");

    let text = std::fs::read_to_string(dir.path().join("solution.field")).unwrap();
    let field = inflap::ScalarField::from_field_file(&text).unwrap();
    // center value approximates 0.5, and rewriting is byte-identical
    let c = field.grid.node_at([0.0, 0.0]).unwrap();
    assert!((field.value(c) - 0.5).abs() < 0.05);
    assert_eq!(field.to_field_file(), text);
}

#[test]
fn jacobi_solve_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let dom = write(
        dir.path(),
        "ball.dom",
        "shape = ball\ncenter = 0 0\nradius = 1\n",
    );
    let run = |sub: &str| {
        let outdir = dir.path().join(sub);
        let out = bin()
            .args(["solve", "--eps", "0.3", "--sweep", "jacobi"])
            .arg("--domain")
            .arg(&dom)
            .arg("--out")
            .arg(&outdir)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(outdir.join("solution.field")).unwrap()
    };
    assert_eq!(
        run("a"),
        run("b"),
        "jacobi field files must be byte-identical"
    );
}

#[test]
fn tow_is_byte_deterministic_and_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let dom = write(
        dir.path(),
        "interval.dom",
        "shape = interval\nendpoints = -1 1\n",
    );
    let run = || {
        let out = bin()
            .args([
                "tow", "--eps", "0.125", "--trials", "30000", "--seed", "42", "--start", "0",
            ])
            .arg("--domain")
            .arg(&dom)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        stdout(&out)
    };
    let first = run();
    assert_eq!(
        first,
        run(),
        "fixed seed must reproduce byte-identical output"
    );
    let mean: f64 = first
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("mean="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((mean - 0.5).abs() < 0.02, "tow mean {mean}");
}

#[test]
fn tow_boundary_start_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let dom = write(
        dir.path(),
        "interval.dom",
        "shape = interval\nendpoints = -1 1\n",
    );
    let out = bin()
        .args([
            "tow", "--eps", "0.125", "--trials", "50", "--seed", "1", "--start", "1.0",
        ])
        .arg("--domain")
        .arg(&dom)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(
        stdout(&out).contains("mean=0.0000000000e0"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let dom = write(
        dir.path(),
        "sq.dom",
        "shape = polygon\nvertices = 0 0 1 0 1 1 0 1\n",
    );

    // config error: eps beyond the grid preconditions
    let out = bin()
        .args(["solve", "--eps", "2.0"])
        .arg("--domain")
        .arg(&dom)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // config error: missing key
    let out = bin().args(["solve", "--eps", "0.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // config error: malformed domain file
    let bad = write(dir.path(), "bad.dom", "shape = dodecahedron\n");
    let out = bin()
        .args(["solve", "--eps", "0.1"])
        .arg("--domain")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // numeric failure: iteration cap too small
    let out = bin()
        .args(["solve", "--eps", "0.1", "--max-iter", "2"])
        .arg("--domain")
        .arg(&dom)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // verification failure: kinked field injected into the gradient check
    let square2 =
        inflap::ConvexDomain::polygon(vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
            .unwrap();
    let mut args = vec![
        "verify".to_string(),
        "gradient".to_string(),
        "--eps".to_string(),
        "0.3".to_string(),
    ];
    for (k, h) in [(0usize, 0.1), (1, 0.05), (2, 0.025)] {
        let g = Arc::new(inflap::build_grid(&square2, h).unwrap());
        let f = inflap::ScalarField::sample(g, |p| p[0].abs());
        let path = write(dir.path(), &format!("kink{k}.field"), &f.to_field_file());
        args.push("--field".to_string());
        args.push(path.display().to_string());
    }
    let dom2 = write(
        dir.path(),
        "sq2.dom",
        "shape = polygon\nvertices = -1 -1 1 -1 1 1 -1 1\n",
    );
    args.push("--domain".to_string());
    args.push(dom2.display().to_string());
    let out = bin().args(&args).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stalled oscillation must fail verification: {}",
        stdout(&out)
    );
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn verify_passes_on_solved_field() {
    let dir = tempfile::tempdir().unwrap();
    let dom = write(
        dir.path(),
        "interval.dom",
        "shape = interval\nendpoints = -1 1\n",
    );
    let out = bin()
        .args(["verify", "concavity", "--eps", "0.0625"])
        .arg("--domain")
        .arg(&dom)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("verdict: pass"));
}

#[test]
fn report_and_envelope_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let dom = write(
        dir.path(),
        "ball.dom",
        "shape = ball\ncenter = 0 0\nradius = 1\n",
    );
    let out = bin()
        .args([
            "report",
            "--eps",
            "0.3",
            "--refinements",
            "2",
            "--checks",
            "concavity,gradient,comparison,semiconcavity",
            "--svg",
        ])
        .arg("--domain")
        .arg(&dom)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("check: concavity (level 0)"));
    assert!(report.contains("check: gradient"));
    assert!(std::fs::read_to_string(dir.path().join("defects.svg"))
        .unwrap()
        .starts_with("<svg"));

    let out = bin()
        .args(["envelope", "--eps", "0.25"])
        .arg("--domain")
        .arg(&dom)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    for artifact in ["w.field", "w_envelope.field", "witnesses.txt"] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }
    // sidecar lines: ix iy k then k triplets
    let sidecar = std::fs::read_to_string(dir.path().join("witnesses.txt")).unwrap();
    let first = sidecar.lines().next().unwrap();
    let toks: Vec<&str> = first.split_whitespace().collect();
    let k: usize = toks[2].parse().unwrap();
    assert_eq!(toks.len(), 3 + 3 * k);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "interval.dom",
        "shape = interval\nendpoints = -1 1\n",
    );
    let cfg = write(
        dir.path(),
        "run.cfg",
        "domain = interval.dom\neps = 0.25\nf = 1\nseed = 9\ntrials = 1000\n",
    );
    // flag overrides the config eps
    let out = bin()
        .args(["solve", "--eps", "0.125"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("solution.field")).unwrap();
    let field = inflap::ScalarField::from_field_file(&text).unwrap();
    assert!(
        (field.grid.h - 0.0625).abs() < 1e-12,
        "eps flag should win (h = eps/2)"
    );
}
