use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_review-alpha"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SPEC: &str = r#"
seed = 3
n_firms = 6
n_sectors = 2
weeks = 120
[signal]
effect = 0.8
"#;

const CONFIG: &str = r#"
seed = 5
[split]
train = { start = "2014-01-06", end = "2015-06-30" }
test = { start = "2015-09-01", end = "2016-04-15" }
[features]
lengths = [1, 4]
history = [8]
bases = ["Score", "Star1", "Star5", "Review", "Useful"]
[selection]
borderlines = [0.0, 0.3]
[tournament]
roster = ["gbm", "logistic"]
[window_sweep]
years = [0.5]
[tau_sweep]
taus = [0.0, 0.05]
[learners.gbm]
n_rounds = 15
max_depth = 2
"#;

fn corpus(dir: &Path) {
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    fs::write(dir.join("config.toml"), CONFIG).unwrap();
    let spec = dir.join("spec.toml");
    let data = dir.join("data");
    let o = run(&["synth", "--spec", spec.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn experiment<'a>(dir: &'a Path, out: &'a str) -> Vec<String> {
    let p = |s: &str| dir.join(s).to_str().unwrap().to_string();
    vec![
        "--config".into(),
        p("config.toml"),
        "--reviews".into(),
        p("data/reviews.jsonl"),
        "--prices".into(),
        p("data/prices.csv"),
        "--sectors".into(),
        p("data/sectors.csv"),
        "--out".into(),
        p(out),
    ]
}

#[test]
fn help_exits_zero() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["ingest", "synth", "features", "targets", "correlate", "select-features", "tournament",
        "holdout", "sweep-borderline", "sweep-window", "sweep-tau", "report", "run"]
    {
        assert!(text.contains(sub), "usage lacks {sub}");
    }
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_one() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn run_without_config_names_the_flag() {
    let o = run(&["run", "--reviews", "r.jsonl", "--prices", "p.csv", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["targets", "--prices", "/nonexistent/prices.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    fs::write(dir.path().join("config.toml"), CONFIG.replace("2015-09-01", "2015-06-01")).unwrap();
    let o = bin().arg("holdout").args(experiment(dir.path(), "out")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gap"), "{}", stderr(&o));
}

#[test]
fn full_run_writes_reports_and_manifest_identically_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let one = bin().args(["--threads", "1", "run"]).args(experiment(dir.path(), "one")).output().unwrap();
    assert!(one.status.success(), "{}", stderr(&one));
    let two = bin().args(["--threads", "2", "run"]).args(experiment(dir.path(), "two")).output().unwrap();
    assert!(two.status.success(), "{}", stderr(&two));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("one/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 4);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.len() >= 10);
    for f in outputs {
        let name = f["path"].as_str().unwrap();
        let a = fs::read(dir.path().join("one").join(name)).unwrap();
        let b = fs::read(dir.path().join("two").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between thread counts");
    }
    let summary = fs::read_to_string(dir.path().join("one/summary.txt")).unwrap();
    assert!(summary.contains("config_hash: "));
    assert!(summary.contains("leakage audit: 0 violations"));
}

#[test]
fn step_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let steps = [
        ("correlate", "significance.csv"),
        ("tournament", "tournament.csv"),
        ("sweep-tau", "tau_sweep.csv"),
        ("report", "firm_accuracy.csv"),
    ];
    for (cmd, file) in steps {
        let mut args = experiment(dir.path(), cmd);
        if cmd != "correlate" {
            args.extend(["--borderline".to_string(), "0.3".to_string()]);
        }
        let o = bin().arg(cmd).args(&args).output().unwrap();
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        assert!(dir.path().join(cmd).join(file).exists(), "{cmd} wrote no {file}");
        assert!(dir.path().join(cmd).join("run_manifest.json").exists());
    }
    let o = bin()
        .args(["select-features", "--borderline", "0.3"])
        .args(experiment(dir.path(), "sel"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let list = fs::read_to_string(dir.path().join("sel/selected_features.csv")).unwrap();
    assert!(list.starts_with("feature\n"));
}

#[test]
fn data_commands_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let d = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let o = run(&["ingest", "--reviews", &d("data/reviews.jsonl"), "--prices", &d("data/prices.csv"), "--min-reviews", "10", "--out", &d("ing")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d("ing/ingest_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["eligible_firms"].as_array().unwrap().len(), 6);
    assert_eq!(summary["duplicates_removed"], 0);
    let o = run(&["features", "--reviews", &d("ing/reviews.jsonl"), "--windows", "n=1,2;m=8", "--out", &d("feat")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(Path::new(&d("feat/catalog.json")).exists());
    let o = run(&["targets", "--prices", &d("data/prices.csv"), "--out", &d("tgt")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let header = fs::read_to_string(d("tgt/indicators.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("williams_r"));
}
