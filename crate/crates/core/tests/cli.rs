use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lattice-walk");

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/seed1")
}

fn lattice_walk(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("LATTICE_WALK_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn events(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("events_"))
        .map(|p| (p.file_name().unwrap().to_str().unwrap().to_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let config = fixture().join("config.toml");
    let mut args = vec!["simulate", "--config", path(&config), "--out", path(out)];
    args.extend_from_slice(extra);
    lattice_walk(&args)
}

#[test]
fn seeded_runs_reproduce_the_fixture_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&simulate(&a, &["--workers", "1"])), 0);
    assert_eq!(code(&simulate(&b, &["--workers", "3"])), 0);
    let golden = events(&fixture().join("events"));
    assert_eq!(golden.len(), 4);
    assert!(events(&a) == golden, "serial run differs from the fixture");
    assert!(events(&b) == golden, "parallel run differs from the fixture");
}

#[test]
fn analyze_reproduces_golden_flights() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lattice_walk(&["analyze", path(&fixture().join("events")), "--out", path(tmp.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let got = fs::read_to_string(tmp.path().join("flights.csv")).unwrap();
    let want = fs::read_to_string(fixture().join("flights.csv")).unwrap();
    assert_eq!(got, want);
    assert!(want.lines().count() > 50);

    // The density integrates to one over the bins.
    let mut reader = csv::Reader::from_path(tmp.path().join("pdf.csv")).unwrap();
    let mut integral = 0.0;
    for row in reader.records() {
        let row = row.unwrap();
        let density: f64 = row[1].parse().unwrap();
        let (lo, hi): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        integral += density * (hi - lo);
    }
    assert!((integral - 1.0).abs() < 1e-12, "integral {integral}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("analysis.json")).unwrap()).unwrap();
    assert_eq!(report["n_flights"].as_u64().unwrap() as usize, want.lines().count() - 1);
}

#[test]
fn no_decay_means_no_emissions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(
        tmp.path(),
        &["--set", "params.gamma=0", "--set", "ensemble.tau_end=2000", "--set", "ensemble.dtau=0.01"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.split_whitespace().eq(["se_events", "0"])), "{stdout}");
    for (_, bytes) in events(tmp.path()) {
        assert!(!String::from_utf8_lossy(&bytes).lines().any(|l| l.starts_with("se,")));
    }
    let echo = fs::read_to_string(tmp.path().join("run.toml")).unwrap();
    assert!(echo.contains("gamma = 0.0"), "{echo}");
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.toml");
    let out = lattice_walk(&["simulate", "--config", path(&missing)]);
    assert_eq!(code(&out), 2);

    let out = simulate(tmp.path(), &["--set", "params.gama=0.1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("params.gama"), "{}", stderr(&out));

    let out = simulate(tmp.path(), &["--set", "ensemble.dtau=0.5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("ensemble.dtau"));

    let out = lattice_walk(&["sweep", "--deltas=-0.1", "--out", path(tmp.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("≥2 points required"));

    assert_eq!(code(&lattice_walk(&["frobnicate"])), 2);
}

#[test]
fn runtime_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lattice_walk(&["analyze", path(&tmp.path().join("nothing-here"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("manifest.json"), "{}", stderr(&out));
}

#[test]
fn fpe_gaussian_check_passes_and_fpt_writes_density() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lattice_walk(&["fpe", "--mode", "gaussian-check", "--out", path(tmp.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("relative L2 error"));

    let out = lattice_walk(&[
        "fpe",
        "--fpt",
        "--c",
        "0",
        "--D",
        "1e-3",
        "--h0",
        "0.1",
        "--set",
        "fpe.grid.h_max=20",
        "--set",
        "fpe.grid.n_cells=2000",
        "--set",
        "fpe.grid.dtau=1",
        "--set",
        "fpe.tau_max=1e4",
        "--set",
        "fpe.dtau_out=10",
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("fpt.csv")).unwrap();
    assert!(text.starts_with("T,density\n"));
    assert!(text.lines().count() > 100);
}

#[test]
fn coarse_fpe_grid_suggests_refinement() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lattice_walk(&[
        "fpe",
        "--c",
        "-1",
        "--D",
        "1e-3",
        "--h0",
        "5",
        "--set",
        "fpe.grid.n_cells=16",
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("refine to at least"), "{}", stderr(&out));
}
