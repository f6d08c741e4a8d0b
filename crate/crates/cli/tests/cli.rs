use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mars(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mars"))
        .args(args)
        .current_dir(dir)
        .env_remove("MARS_CONFIG")
        .output()
        .expect("spawn mars")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mars(dir, args);
    assert!(
        out.status.success(),
        "mars {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const ONE_JOB: &str = "; MaxProcs: 8\n1 0 -1 100 4 -1 -1 4 200 -1 1 -1 -1 -1 -1 -1 -1 -1\n";

#[test]
fn unknown_policy_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = mars(dir.path(), &["simulate", "--synthetic", "10", "--policy", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fcfs"), "{err}");
    assert!(err.contains("Usage: mars simulate"), "{err}");
}

#[test]
fn missing_trace_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = mars(dir.path(), &["simulate", "--trace", "absent.swf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = mars(dir.path(), &["simulate", "--synthetic", "10", "--out", "blocker/sub"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rl_without_a_model_is_refused() {
    let dir = TempDir::new().unwrap();
    let out = mars(dir.path(), &["compare", "--synthetic", "10", "fcfs", "rl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generated_trace_reads_back() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen", "--count", "40", "--seed", "5", "--out", "g"]);
    let swf = fs::read_to_string(dir.path().join("g/synthetic.swf")).unwrap();
    let jobs = swf.lines().filter(|l| !l.starts_with(';') && !l.trim().is_empty()).count();
    assert_eq!(jobs, 40);
    let stdout = ok(dir.path(), &["inspect", "g/synthetic.swf"]);
    assert!(stdout.contains("40"), "{stdout}");
}

#[test]
fn single_job_has_unit_slowdown_everywhere() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("one.swf"), ONE_JOB).unwrap();
    ok(dir.path(), &["compare", "--trace", "one.swf", "--out", "c", "fcfs", "sjf"]);
    let csv = fs::read_to_string(dir.path().join("c/compare.csv")).unwrap();
    assert!(csv.starts_with("#schema=mars-compare/1"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row[1], "1");
        assert_eq!(row[2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(row[5].parse::<f64>().unwrap(), 100.0);
    }
}

#[test]
fn backfill_flag_changes_the_schedule() {
    // A wide job blocks the head; the short narrow job can only jump ahead by backfilling.
    let trace = "; MaxProcs: 4\n\
        1 0 -1 100 3 -1 -1 3 100 -1 1 -1 -1 -1 -1 -1 -1 -1\n\
        2 1 -1 100 4 -1 -1 4 100 -1 1 -1 -1 -1 -1 -1 -1 -1\n\
        3 2 -1 10 1 -1 -1 1 10 -1 1 -1 -1 -1 -1 -1 -1 -1\n";
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("t.swf"), trace).unwrap();
    ok(dir.path(), &["simulate", "--trace", "t.swf", "--out", "on"]);
    ok(dir.path(), &["simulate", "--trace", "t.swf", "--out", "off", "--backfill", "off"]);
    let mean = |d: &str| {
        let rows = data_rows(&fs::read_to_string(dir.path().join(d).join("report.csv")).unwrap());
        rows[0][7].parse::<f64>().unwrap()
    };
    assert!(mean("on") < mean("off"), "on {} off {}", mean("on"), mean("off"));
}

#[test]
fn config_file_from_env_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("cfg.toml"),
        "[run]\npolicy = \"sjf\"\nseed = 11\nout = \"from-config\"\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mars"))
        .args(["inspect", "--seed", "12"])
        .current_dir(dir.path())
        .env("MARS_CONFIG", "cfg.toml")
        .output()
        .unwrap();
    assert!(out.status.success());
    let resolved: toml::Table = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let run = resolved["run"].as_table().unwrap();
    assert_eq!(run["policy"].as_str(), Some("sjf"));
    assert_eq!(run["seed"].as_integer(), Some(12));
    assert_eq!(run["out"].as_str(), Some("from-config"));
}

#[test]
fn resume_continues_the_epoch_count_and_keeps_old_models() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["train", "--synthetic", "30", "--epochs", "3", "--out", "t"]);
    ok(
        dir.path(),
        &["train", "--synthetic", "30", "--epochs", "2", "--out", "t", "--resume", "t/model.json"],
    );
    let curve = fs::read_to_string(dir.path().join("t/curve.csv")).unwrap();
    let epochs: Vec<u64> = data_rows(&curve).iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(epochs, [4, 5]);
    assert!(dir.path().join("t/model.prev.json").exists());
    let summary = ok(dir.path(), &["inspect", "t/model.json"]);
    assert!(summary.contains('5'), "{summary}");
}

#[test]
fn explain_prints_and_saves_the_plan() {
    let dir = TempDir::new().unwrap();
    let stdout = ok(
        dir.path(),
        &["compare", "--synthetic", "100", "--out", "p", "--explain", "fcfs", "mars"],
    );
    let saved = fs::read_to_string(dir.path().join("p/plan.json")).unwrap();
    assert!(stdout.contains(saved.trim()));
    let plan: serde_json::Value = serde_json::from_str(&saved).unwrap();
    assert!(plan.to_string().contains("sjf"), "{plan}");
}
