use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ebsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebsim")).args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_experiment(dir: &Path, trace_path: &str) -> String {
    let file = dir.join("exp.toml");
    fs::write(
        &file,
        format!(
            "name = \"cli\"\noutput_dir = \"results\"\nhorizon_s = 3600\n\n[[traces]]\nlabel = \"X\"\npath = \"{trace_path}\"\n\n[[policies]]\nkind = \"fixed\"\n\n[[policies]]\nkind = \"greedy_budget\"\n"
        ),
    )
    .unwrap();
    file.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_the_bundled_experiment_and_preset() {
    let file = concat!(env!("CARGO_MANIFEST_DIR"), "/experiments/evaluation_grid.toml");
    let out = ebsim(&["validate", file]);
    assert!(out.status.success(), "{}", text(&out.stdout));
    assert_eq!(text(&out.stdout).trim(), "ok: 18 scenarios");

    let out = ebsim(&["validate", "--preset", "evaluation"]);
    assert!(out.status.success());
}

#[test]
fn missing_trace_fails_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_experiment(dir.path(), "nope/missing.csv");
    let out = ebsim(&["validate", &file]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("traces[0].path"), "{stdout}");
    assert!(stdout.contains("missing.csv"), "{stdout}");

    let out = ebsim(&["run", &file]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("missing.csv"));
    assert!(!dir.path().join("results").exists());
}

#[test]
fn run_writes_reports_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    let trace = ebsim::samples::EVALUATION_WINDOWS[4].csv();
    fs::write(dir.path().join("pl.csv"), trace).unwrap();
    let file = write_experiment(dir.path(), "pl.csv");

    let out = ebsim(&["run", &file, "--dry-run"]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout).lines().take(2).collect::<Vec<_>>(), ["fixed-X", "greedy_budget-X"]);
    assert!(!dir.path().join("results").exists());

    let alt = dir.path().join("alt");
    let out = ebsim(&["run", &file, "--out", alt.to_str().unwrap(), "--scenario", "greedy_budget-X", "--seed", "5"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(alt.join("steps_greedy_budget-X.csv").exists());
    assert!(alt.join("buckets_greedy_budget-X.csv").exists());
    assert!(!alt.join("steps_fixed-X.csv").exists());
    let summary = fs::read_to_string(alt.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert_eq!(text(&out.stdout), summary);
    let manifest = fs::read_to_string(alt.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 5"));
    assert!(manifest.contains("status = \"complete\""));

    let steps = fs::read_to_string(alt.join("steps_greedy_budget-X.csv")).unwrap();
    assert_eq!(steps.lines().next().unwrap(), "t,action,node,power_w,emission_g,allowance_g,completions,drops,utilization");
    assert_eq!(steps.lines().count(), 3601);

    let out = ebsim(&["run", &file, "--scenario", "bogus"]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("greedy_budget-X"));
}
