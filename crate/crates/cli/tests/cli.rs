use std::path::Path;
use std::process::{Command, Output};

const STREAMS: &str = r#"
version = 1

[[stream]]
n_episodes = 150
seed = 11
policy = "goal_seeker"
env = { env_id = "grid", family = "grid_world" }
injection = [
  { category = "reward_tampering", probability = 0.1 },
  { category = "specification_gaming", probability = 0.1 },
]
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hackwatch")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fitted(dir: &Path) {
    std::fs::write(dir.join("gen.toml"), STREAMS).unwrap();
    ok(dir, &["generate", "--config", "gen.toml", "--out", "eps.jsonl"]);
    ok(dir, &["fit", "--log", "eps.jsonl", "--out", "bundle.jsonl", "--registry", "gen.toml"]);
}

#[test]
fn generate_writes_one_line_per_episode_and_repeats() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"
[[stream]]
n_episodes = 10
seed = 1
policy = "random_walk"
env = { env_id = "arm", family = "robotic_control", max_steps = 50 }
"#;
    std::fs::write(d.path().join("g.toml"), cfg).unwrap();
    ok(d.path(), &["generate", "--config", "g.toml", "--out", "a.jsonl"]);
    ok(d.path(), &["generate", "--config", "g.toml", "--out", "b.jsonl"]);
    let a = std::fs::read_to_string(d.path().join("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 10);
    assert_eq!(a.as_bytes(), std::fs::read(d.path().join("b.jsonl")).unwrap());
    assert!(d.path().join("a.jsonl.manifest.json").exists());
}

#[test]
fn invalid_enum_exits_2_and_names_the_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[[stream]]\nn_episodes = 5\nseed = 1\npolicy = \"telepathic\"\nenv = { env_id = \"g\", family = \"grid_world\" }\n";
    std::fs::write(d.path().join("g.toml"), cfg).unwrap();
    let out = run(d.path(), &["generate", "--config", "g.toml", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("policy"), "{}", stderr(&out));
    assert!(!d.path().join("x.jsonl").exists());
}

#[test]
fn unsupported_config_version_exits_2() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("e.toml"), "version = 2\n").unwrap();
    let out = run(d.path(), &["experiment", "benchmark", "--config", "e.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_few_references_exit_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[[stream]]\nn_episodes = 3\nseed = 1\npolicy = \"goal_seeker\"\nenv = { env_id = \"g\", family = \"grid_world\" }\n";
    std::fs::write(d.path().join("g.toml"), cfg).unwrap();
    ok(d.path(), &["generate", "--config", "g.toml", "--out", "eps.jsonl"]);
    let out = run(d.path(), &["fit", "--log", "eps.jsonl", "--out", "b.jsonl"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("specification_gaming"), "{}", stderr(&out));
}

#[test]
fn empty_inputs_exit_4() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("empty.jsonl"), "").unwrap();
    let out = run(d.path(), &["report", "--assessments", "empty.jsonl", "--labels", "empty.jsonl", "--out", "r"]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(d.path(), &["fit", "--log", "empty.jsonl", "--out", "b.jsonl"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn zero_jobs_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["--jobs", "0", "generate", "--config", "g.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn risk_threshold_outside_unit_interval_exits_2() {
    let d = tempfile::tempdir().unwrap();
    fitted(d.path());
    for t in ["0", "1", "1.5"] {
        let out = run(
            d.path(),
            &["detect", "--model", "bundle.jsonl", "--log", "eps.jsonl", "--out", "a.jsonl", "--risk-threshold", t],
        );
        assert_eq!(out.status.code(), Some(2), "threshold {t}");
    }
}

#[test]
fn detection_is_independent_of_worker_count() {
    let d = tempfile::tempdir().unwrap();
    fitted(d.path());
    ok(d.path(), &["--jobs", "1", "detect", "--model", "bundle.jsonl", "--log", "eps.jsonl", "--out", "a1.jsonl"]);
    ok(d.path(), &["--jobs", "4", "detect", "--model", "bundle.jsonl", "--log", "eps.jsonl", "--out", "a4.jsonl"]);
    let a1 = std::fs::read(d.path().join("a1.jsonl")).unwrap();
    assert_eq!(a1, std::fs::read(d.path().join("a4.jsonl")).unwrap());
    assert_eq!(a1.iter().filter(|&&b| b == b'\n').count(), 150);
}

#[test]
fn higher_risk_threshold_flags_a_subset() {
    let d = tempfile::tempdir().unwrap();
    fitted(d.path());
    let flagged = |t: &str| -> Vec<String> {
        let out = format!("a{t}.jsonl");
        ok(
            d.path(),
            &["detect", "--model", "bundle.jsonl", "--log", "eps.jsonl", "--out", &out, "--risk-threshold", t],
        );
        std::fs::read_to_string(d.path().join(&out))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|v| v["flagged"] == true)
            .map(|v| v["episode_id"].as_str().unwrap().to_string())
            .collect()
    };
    let low = flagged("0.5");
    let high = flagged("0.9");
    assert!(high.iter().all(|id| low.contains(id)));
    assert!(high.len() <= low.len());
}

#[test]
fn unknown_environment_still_scores() {
    let d = tempfile::tempdir().unwrap();
    fitted(d.path());
    let other = "[[stream]]\nn_episodes = 4\nseed = 2\npolicy = \"goal_seeker\"\nenv = { env_id = \"elsewhere\", family = \"grid_world\" }\n";
    std::fs::write(d.path().join("o.toml"), other).unwrap();
    ok(d.path(), &["generate", "--config", "o.toml", "--out", "other.jsonl"]);
    ok(d.path(), &["detect", "--model", "bundle.jsonl", "--log", "other.jsonl", "--out", "a.jsonl"]);
    let text = std::fs::read_to_string(d.path().join("a.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["risk"].as_f64().unwrap().is_finite());
        assert_eq!(v["signals"][5]["abstained"], true);
    }
}

#[test]
fn report_on_perfect_assessments_scores_one() {
    let d = tempfile::tempdir().unwrap();
    fitted(d.path());
    ok(d.path(), &["detect", "--model", "bundle.jsonl", "--log", "eps.jsonl", "--out", "a.jsonl"]);
    let labels: Vec<bool> = std::fs::read_to_string(d.path().join("eps.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["label"]["is_hacking"] == true)
        .collect();
    assert!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
    let perfect: String = std::fs::read_to_string(d.path().join("a.jsonl"))
        .unwrap()
        .lines()
        .zip(&labels)
        .map(|(l, &hack)| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["risk"] = serde_json::json!(if hack { 1.0 } else { 0.0 });
            v["flagged"] = serde_json::json!(hack);
            format!("{v}\n")
        })
        .collect();
    std::fs::write(d.path().join("perfect.jsonl"), perfect).unwrap();
    ok(d.path(), &["report", "--assessments", "perfect.jsonl", "--labels", "eps.jsonl", "--out", "r"]);

    let csv = std::fs::read_to_string(d.path().join("r/metrics.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("ensemble,")).unwrap();
    let f: Vec<&str> = row.split(',').collect();
    assert_eq!(&f[1..5], ["1.000000", "1.000000", "1.000000", "1.000000"], "{row}");
    assert_eq!(csv.lines().count(), 1 + 2 + 6);

    // one curve per detector, the ensemble and the chance diagonal
    let svg = std::fs::read_to_string(d.path().join("r/roc.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 6 + 1 + 1);
    assert!(svg.contains("ensemble"));
    assert!(d.path().join("r/sweep.csv").exists() && d.path().join("r/manifest.json").exists());
}

#[test]
fn report_requires_a_label_for_every_assessment() {
    let d = tempfile::tempdir().unwrap();
    fitted(d.path());
    ok(d.path(), &["detect", "--model", "bundle.jsonl", "--log", "eps.jsonl", "--out", "a.jsonl"]);
    let first = std::fs::read_to_string(d.path().join("eps.jsonl")).unwrap().lines().next().unwrap().to_string();
    std::fs::write(d.path().join("one.jsonl"), first + "\n").unwrap();
    let out = run(d.path(), &["report", "--assessments", "a.jsonl", "--labels", "one.jsonl", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3));
}
