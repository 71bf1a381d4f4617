use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn psl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psl"))
        .args(args)
        .output()
        .expect("spawn psl")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn shipped_fixtures_validate() {
    let mut args = vec!["validate".to_string()];
    for dir in ["maps", "experiments"] {
        for p in files_under(&fixtures().join(dir)) {
            args.push(p.to_string_lossy().into_owned());
        }
    }
    for p in files_under(&fixtures().join("safeguards")) {
        if !p.ends_with("nondeterministic.sg") {
            args.push(p.to_string_lossy().into_owned());
        }
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = psl(&args);
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
}

#[test]
fn nondeterministic_safeguard_fails_validation() {
    let o = psl(&["validate", &fixture("safeguards/nondeterministic.sg")]);
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("FAIL"), "{out}");
    assert!(out.contains("guards overlap"), "{out}");
}

#[test]
fn missing_file_exits_one_with_path() {
    let o = psl(&["validate", "/definitely/not/here.sg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("/definitely/not/here.sg"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = psl(&["run", "--config", "/no/such.cfg", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such.cfg"), "{}", stderr(&o));
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "map = x.map\nseeds = 0-2\nbogus = 1\n").unwrap();
    let o = psl(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn runs_are_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("experiments/smoke.cfg");
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    for (out, jobs) in [(&one, "1"), (&four, "4")] {
        let o = psl(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = files_under(&one);
    let b = files_under(&four);
    let rel = |root: &Path, v: &[PathBuf]| -> Vec<PathBuf> {
        v.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect()
    };
    assert_eq!(rel(&one, &a), rel(&four, &b));
    let mut compared = 0;
    for (pa, pb) in a.iter().zip(&b) {
        if pa.ends_with("timing.csv") {
            continue;
        }
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap(), "{}", pa.display());
        compared += 1;
    }
    // 4 methods x 3 seeds run files, 4 aggregates, the summary.
    assert_eq!(compared, 12 + 4 + 1);
}

#[test]
fn method_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = psl(&[
        "run",
        "--config",
        &fixture("experiments/smoke.cfg"),
        "--out",
        out.to_str().unwrap(),
        "--method",
        "vanilla",
        "--seeds",
        "7",
        "--jobs",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let runs: Vec<PathBuf> = files_under(&out.join("runs"));
    assert_eq!(runs, vec![out.join("runs/vanilla-seed7.csv")]);
}

#[test]
fn sweep_rejects_penalty_above_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let o = psl(&[
        "sweep",
        "--config",
        &fixture("experiments/smoke.cfg"),
        "--values",
        "-10,0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("0.5"), "{}", stderr(&o));
    assert!(!out.join("sweep.csv").exists());
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let o = psl(&[
        "sweep",
        "--config",
        &fixture("experiments/smoke.cfg"),
        "--values",
        "-1,-100",
        "--method",
        "psl",
        "--seeds",
        "0-1",
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2);
    let summary = fs::read_to_string(out.join("sweep-summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2);
}

#[test]
fn oracle_passes_on_graded_hazards() {
    let o = psl(&[
        "oracle",
        "--map",
        &fixture("maps/graded-hazards.map"),
        "--safeguard",
        &fixture("safeguards/safeguard-1.sg"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().skip(1).all(|l| l.ends_with(",true")), "{out}");
}

#[test]
fn oracle_rejects_penalty_above_rewards() {
    let o = psl(&[
        "oracle",
        "--map",
        &fixture("maps/graded-hazards.map"),
        "--safeguard",
        &fixture("safeguards/safeguard-1.sg"),
        "--r-n",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plot_rejects_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = psl(&["plot", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn plot_draws_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = psl(&[
        "run",
        "--config",
        &fixture("experiments/smoke.cfg"),
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "0",
        "--jobs",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = psl(&["plot", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["return.svg", "violations.svg"] {
        let svg = fs::read_to_string(out.join(name)).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
        for m in ["psl", "vanilla", "fear", "zero_shot"] {
            assert!(svg.contains(m), "{name} lacks {m}");
        }
    }
}
