use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pointbudget"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

const TOY: &str = r#"
name = "toy"
[metric]
index = "APE"
confidence = 0.95
requirement = ["1 mrad"]
[plant]
kind = "external"
a = [[-2.0]]
b = [[1.0]]
c = [[1.0]]
inputs = ["u"]
outputs = ["y"]
[combination]
samples = 20000
[output]
formats = ["json", "txt"]
[[sources]]
name = "noise"
kind = "random_process"
units = "rad"
x = { channel = "u", level = "1e-9 rad^2/Hz" }
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn case_study_run_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ape");
    let o = run_in(
        tmp.path(),
        &["run", shipped("case_study_ape.scn").to_str().unwrap(), "--out", out.to_str().unwrap(), "--samples", "20000", "--dump-model"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("x-axis total"), "{stdout}");
    for f in ["report.json", "budget.txt", "model.json", "cdf_total_x.dat"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn output_dir_defaults_to_scenario_setting() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "toy.scn", TOY);
    let o = run_in(tmp.path(), &["run", &scn]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("out/report.json").exists());
    assert!(!tmp.path().join("out/cdf_total_x.dat").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "toy.scn", TOY);
    for d in ["a", "b"] {
        let o = run_in(tmp.path(), &["run", &scn, "--out", d, "--seed", "9", "--method", "advanced"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["report.json", "budget.txt"] {
        assert_eq!(std::fs::read(tmp.path().join("a").join(f)).unwrap(), std::fs::read(tmp.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn worker_count_is_honoured_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "toy.scn", TOY);
    let o = bin().current_dir(tmp.path()).env("POINTBUDGET_WORKERS", "2").args(["run", &scn]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = bin().current_dir(tmp.path()).env("POINTBUDGET_WORKERS", "zero").args(["run", &scn]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn schema_errors_exit_2_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "bad.scn", &TOY.replace("requirement = [\"1 mrad\"]\n", ""));
    let o = run_in(tmp.path(), &["run", &scn]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("metric.requirement"));

    let scn = write(tmp.path(), "toy.scn", TOY);
    let o = run_in(tmp.path(), &["run", &scn, "--wc"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn instability_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "unstable.scn", &TOY.replace("a = [[-2.0]]", "a = [[0.5]]"));
    let o = run_in(tmp.path(), &["run", &scn]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn numerical_failure_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "proper.scn", &TOY.replace("outputs = [\"y\"]", "outputs = [\"y\"]\nd = [[1.0]]"));
    let o = run_in(tmp.path(), &["run", &scn]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_file_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["run", "does_not_exist.scn"]);
    assert_eq!(o.status.code(), Some(5));
}
