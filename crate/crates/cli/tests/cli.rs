use std::path::Path;
use std::process::{Command, Output};

use sheetlab::ConvergenceReport;
use sheetlab_cli::commands::Manifest;
use sheetlab_cli::config::RunConfig;

fn sheetlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sheetlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&read(dir, "manifest.json")).expect("manifest matches its schema")
}

fn report(dir: &Path) -> ConvergenceReport {
    ConvergenceReport::from_json(&read(dir, "report.json")).expect("report matches its schema")
}

const FDD: &[&str] = &[
    "convergence-report",
    "--family",
    "donsker",
    "--d",
    "2",
    "--n",
    "4,16",
    "--M",
    "1000",
    "--seed",
    "7",
];

#[test]
fn convergence_report_writes_valid_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sheetlab(FDD, tmp.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = manifest(tmp.path());
    assert_eq!(m.subcommand, "convergence-report");
    assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(m.config.seed, 7);
    assert_eq!(m.config.diag.n_list, vec![4, 16]);
    for a in &m.artifacts {
        assert!(tmp.path().join(a).exists(), "{a}");
    }
    let r = report(tmp.path());
    assert_eq!(r.experiment, "fdd");
    assert_eq!(r.values(Some(16), "p_value").len(), 10);
    assert_eq!(m.verdicts_passed, r.all_passed());
    let csv = read(tmp.path(), "report.csv");
    assert!(csv.starts_with("n,label,key,value\n"));
    assert_eq!(csv.lines().count(), r.rows.len() + 1);
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(sheetlab(FDD, a.path()).status.success());
    assert!(sheetlab(&[FDD, &["--workers", "1"]].concat(), b.path())
        .status
        .success());
    assert_eq!(read(a.path(), "report.json"), read(b.path(), "report.json"));
    assert_eq!(read(a.path(), "report.csv"), read(b.path(), "report.csv"));
    let (ma, mut mb) = (manifest(a.path()), manifest(b.path()));
    mb.created = ma.created.clone();
    mb.config.output = ma.config.output.clone();
    mb.config.workers = ma.config.workers;
    assert_eq!(ma, mb);
}

#[test]
fn manifest_config_reproduces_the_run() {
    let first = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--family",
        "kac-stroock",
        "--n",
        "12",
        "--seed",
        "3",
        "--cells",
        "4",
    ];
    assert!(sheetlab(&args, first.path()).status.success());
    let m = manifest(first.path());
    let again = tempfile::tempdir().unwrap();
    let cfg_path = again.path().join("config.toml");
    let mut cfg = m.config.clone();
    cfg.output = again.path().join("out");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    assert_eq!(RunConfig::load(&cfg_path).unwrap(), cfg);
    let out = Command::new(env!("CARGO_BIN_EXE_sheetlab"))
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["field.csv", "driver.json", "report.json"] {
        assert_eq!(read(first.path(), name), read(&cfg.output, name), "{name}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("run.toml");
    std::fs::write(&cfg_path, "seed = 11\n[noise]\nfamily = \"sheet\"\nn = 4\n").unwrap();
    let out = sheetlab(
        &[
            "simulate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--n",
            "8",
        ],
        &tmp.path().join("o"),
    );
    assert!(out.status.success());
    let m = manifest(&tmp.path().join("o"));
    assert_eq!(
        (
            m.config.seed,
            m.config.noise.n,
            m.config.noise.family.as_str()
        ),
        (11, 8, "sheet")
    );
}

#[test]
fn gate_failure_exits_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sheetlab(&["poisson-solve", "--F", "linear:20"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("contraction gate failed"), "{err}");
}

#[test]
fn poisson_solve_writes_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sheetlab(
        &[
            "poisson-solve",
            "--F",
            "tanh:2",
            "--cells",
            "16",
            "--strict",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(tmp.path());
    assert!(r.value(None, "solve", "residual").unwrap() < 1e-7);
    assert_eq!(
        read(tmp.path(), "solution.csv").lines().count(),
        17 * 17 + 1
    );
}

#[test]
fn strict_turns_failed_verdicts_into_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "convergence-report",
        "--d",
        "1",
        "--cells",
        "1",
        "--n",
        "1",
        "--M",
        "1000",
    ];
    let lax = sheetlab(&args, tmp.path());
    assert_eq!(lax.status.code(), Some(0));
    assert!(!manifest(tmp.path()).verdicts_passed);
    let strict = sheetlab(&[&args[..], &["--strict"]].concat(), tmp.path());
    assert_eq!(strict.status.code(), Some(3));
}

#[test]
fn config_errors_exit_2_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("bad.toml");
    std::fs::write(&cfg_path, "seed = 1\n[diag]\nreplicate = 5\n").unwrap();
    let out = sheetlab(
        &["convergence-report", "--config", cfg_path.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("replicate"), "{err}");

    let out = sheetlab(&["convergence-report", "--M", "10"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = sheetlab(&["simulate", "--family", "levy"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_drivers_are_refused_with_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sheetlab(
        &["simulate", "--family", "donsker", "--n", "100000"],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn green_table_compares_with_walks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sheetlab(&["green-table", "--d", "2", "--walks", "4000"], tmp.path());
    assert!(out.status.success());
    let table = read(tmp.path(), "green_table.csv");
    assert!(table.starts_with("x1,x2,y1,y2,series,tail,mc,mc_std_error\n"));
    assert_eq!(table.lines().count(), 6);
    assert_eq!(report(tmp.path()).verdicts.len(), 5);
}
