mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use neurofuse::app::{self, AppError, Runner, StageOutcome};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neurofuse"));
    c.env_remove("NEUROFUSE_WORKDIR");
    c
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.cfg");
    fs::write(&p, common::small_config(&dir.join("unused")).render()).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path, wd: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--workdir")
        .arg(wd)
        .output()
        .unwrap()
}

fn csv_rows(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count() - 1
}

#[test]
fn run_all_writes_every_output_with_expected_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let wd = tmp.path().join("nested/run");
    let mut r = Runner::new(common::small_config(&wd), false).unwrap();
    let out = r.run_all().unwrap();
    assert!(out.iter().all(|(_, o)| *o == StageOutcome::Ran));

    // 6 participants × 2 conditions × 3 phases × 5 bounds
    assert_eq!(csv_rows(&wd.join(app::ORACLE_FILE)), 6 * 2 * 15);
    let trials = csv_rows(&wd.join("dataset").join(app::TRIALS_FILE));
    assert_eq!(trials, 6 * 2 * 80);
    assert_eq!(csv_rows(&wd.join(app::PREDICTIONS_FILE)), trials);
    assert_eq!(csv_rows(&wd.join(app::RESULTS_FILE)), 10 * 2 * 2 * 3);
    assert_eq!(csv_rows(&wd.join(app::STATS_FILE)), 3 * 2 * 2 * 3);
    assert!(wd.join(app::SUMMARY_FILE).exists());
    assert!(!wd.join("accuracy_FLA.svg").exists());
    for c in ["FLA", "SA"] {
        for p in 1..=6 {
            assert!(wd.join(format!("dataset/epochs/p{p:02}_{c}.nfep")).exists());
        }
    }
}

#[test]
fn rerun_skips_until_forced_or_changed() {
    let tmp = tempfile::tempdir().unwrap();
    let wd = tmp.path().join("w");
    Runner::new(common::small_config(&wd), false).unwrap().run_all().unwrap();
    let before = fs::read(wd.join(app::RESULTS_FILE)).unwrap();

    let again = Runner::new(common::small_config(&wd), false).unwrap().run_all().unwrap();
    assert!(again.iter().all(|(_, o)| *o == StageOutcome::Skipped));

    let forced = Runner::new(common::small_config(&wd), true).unwrap().run_all().unwrap();
    assert!(forced.iter().all(|(_, o)| *o == StageOutcome::Ran));
    assert_eq!(before, fs::read(wd.join(app::RESULTS_FILE)).unwrap());

    // Changing a simulation key leaves synth and pipeline alone.
    let mut cfg = common::small_config(&wd);
    cfg.set("simulate.sizes", "2").unwrap();
    let partial = Runner::new(cfg, false).unwrap().run_all().unwrap();
    let ran: Vec<&str> = partial.iter().filter(|(_, o)| *o == StageOutcome::Ran).map(|(n, _)| *n).collect();
    assert_eq!(ran, ["simulate", "stats", "report"]);

    // A tampered output invalidates its stage.
    fs::write(wd.join(app::RESULTS_FILE), "junk").unwrap();
    let mut cfg = common::small_config(&wd);
    cfg.set("simulate.sizes", "2").unwrap();
    let fixed = Runner::new(cfg, false).unwrap().run_all().unwrap();
    assert_eq!(fixed[2], ("simulate", StageOutcome::Ran));
}

#[test]
fn cli_subcommands_and_svg_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let wd = tmp.path().join("cli");
    for stage in ["synth", "pipeline", "simulate", "stats"] {
        let o = run(&[stage, "--threads", "2"], &cfg, &wd);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["report", "--svg"], &cfg, &wd);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("FLA"));
    assert!(wd.join("accuracy_FLA.svg").exists() && wd.join("accuracy_SA.svg").exists());
    let svg = fs::read_to_string(wd.join("accuracy_SA.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));

    let o = run(&["run-all"], &cfg, &wd);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("synth: up to date"));
}

#[test]
fn env_workdir_and_dotted_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .env("NEUROFUSE_WORKDIR", tmp.path().join("from-env"))
        .args(["show-config", "--cohort.master_seed", "99", "--pipeline.cv_folds=7"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("cohort.master_seed = 99"), "{text}");
    assert!(text.contains("pipeline.cv_folds = 7"));
    assert!(text.contains("from-env"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let wd = tmp.path().join("x");
    let o = bin().args(["synth", "--no.such.key", "1"]).arg("--workdir").arg(&wd).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["synth", "--pipeline.cv_folds", "zero"]).arg("--workdir").arg(&wd).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "this line has no equals sign\n").unwrap();
    let o = run(&["synth"], &bad, &wd);
    assert_eq!(o.status.code(), Some(2));
    assert!(!wd.join("manifest.txt").exists());
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let wd = tmp.path().join("d");

    let o = run(&["pipeline"], &cfg, &wd);
    assert_eq!(o.status.code(), Some(3), "pipeline without synth");

    assert!(run(&["synth"], &cfg, &wd).status.success());
    fs::write(wd.join("dataset/epochs/p01_FLA.nfep"), b"NOTANEPOCHSTORE").unwrap();
    let o = run(&["pipeline"], &cfg, &wd);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn empty_results_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let wd = tmp.path().join("e");
    let mut r = Runner::new(common::small_config(&wd), false).unwrap();
    r.run_all().unwrap();
    fs::write(wd.join(app::RESULTS_FILE), format!("{}\n", neurofuse::team::RESULTS_HEADER)).unwrap();
    let err = r.report().unwrap_err();
    assert!(matches!(err, AppError::EmptyInput(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}
