use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cogflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogflow"))
        .args(args)
        .env_remove("COGFLOW_CACHE_PATH")
        .env_remove("COGFLOW_LLM_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{
  "space": [
    {"name": "valence", "low_pole_text": "gloomy", "high_pole_text": "joyful"},
    {"name": "arousal"}
  ],
  "semantics": {"position_bias": 0.5},
  "polarize": {"cache_path": "memory"},
  "blend": {"score": [0.3, 0.8]},
  "flow": {"samples": 64, "steps": 20, "record_trajectory": true}
}"#;

#[test]
fn orders_prints_cyclic_rotations() {
    let o = cogflow(&["orders", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "(1,2,3),(2,3,1),(3,1,2)");
    assert_eq!(cogflow(&["orders", "7"]).status.code(), Some(2));
}

#[test]
fn validate_prints_a_line_per_check() {
    let o = cogflow(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().count() >= 8);
    assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}

#[test]
fn help_lists_every_flag() {
    let out = stdout(&cogflow(&["--help"]));
    for flag in ["--config", "--out", "--set", "--threads", "--seed", "--backend", "--quiet", "--verbose"] {
        assert!(out.contains(flag), "{flag} missing from help:\n{out}");
    }
    for sub in ["polarize", "generate", "experiment", "validate", "orders"] {
        assert!(out.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cogflow(&["generate"]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(cogflow(&["--config", missing.to_str().unwrap(), "generate"]).status.code(), Some(2));
    let unknown = write_config(dir.path(), r#"{"space": [{"name": "a"}], "flow": {"stepz": 3}}"#);
    let o = cogflow(&["--config", unknown.to_str().unwrap(), "generate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepz"));
    let cfg = write_config(dir.path(), SMALL);
    let o = cogflow(&["--config", cfg.to_str().unwrap(), "--set", "blend.lambda=3", "generate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cogflow(&["--config", cfg.to_str().unwrap(), "experiment", "no_such_kind"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_writes_batch_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = cogflow(&["-q", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2", "--seed", "5", "generate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let endpoints = std::fs::read_to_string(out.join("endpoints.csv")).unwrap();
    assert!(endpoints.starts_with("x1,x2\n"));
    assert_eq!(endpoints.lines().count(), 65);
    assert!(out.join("decoded.csv").exists());
    assert!(out.join("trajectories.csv").exists());
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    // 64 samples x 20 steps x 4 stages x (2 * 4 + 1) inner evaluations
    assert_eq!(meta["eval_count"], 64 * 20 * 4 * 9);
    assert!(meta["config"]["config_digest"].is_string());
}

#[test]
fn seed_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut files = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let o = cogflow(&["-q", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed, "generate"]);
        assert_eq!(o.status.code(), Some(0));
        files.push(std::fs::read(out.join("endpoints.csv")).unwrap());
    }
    assert_ne!(files[0], files[1]);
}

#[test]
fn polarize_exports_prompt_sets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = cogflow(&["-q", "--config", cfg.to_str().unwrap(), "polarize"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["base_prompt"], "a valley");
    let sets = doc["sets"].as_array().unwrap();
    assert_eq!(sets.len(), 4);
    assert_eq!(sets[1]["anchor_bits"], serde_json::json!([1, 0]));
    assert_eq!(sets[1]["chains"][1]["order"], serde_json::json!([2, 1]));
    assert_eq!(sets[1]["chains"][1]["result"], "a valley «arousal:-»«valence:+»");

    let out = dir.path().join("export");
    let o = cogflow(&["-q", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "polarize"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("prompt_sets.json").exists());
}

#[test]
fn disk_cache_follows_environment() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace(r#""polarize": {"cache_path": "memory"},"#, "");
    let cfg = write_config(dir.path(), &body);
    let cache = dir.path().join("c").join("cache.ndjson");
    let o = Command::new(env!("CARGO_BIN_EXE_cogflow"))
        .args(["-q", "--config", cfg.to_str().unwrap(), "polarize"])
        .env("COGFLOW_CACHE_PATH", &cache)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    // two first steps shared across anchors are fetched once
    let lines = std::fs::read_to_string(&cache).unwrap().lines().count();
    assert_eq!(lines, 12);
}

#[test]
fn experiment_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("exp");
    let o = cogflow(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "experiment", "order_bias"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS worst_single_chain_asymmetry"));
    for f in ["metrics.json", "metrics.csv", "series.csv", "timing.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("# config_digest: "));
}

#[test]
fn experiment_kind_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("exp");
    let o = cogflow(&[
        "-q",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "experiment.kind=cost_accounting",
        "--out",
        out.to_str().unwrap(),
        "experiment",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["experiment"], "cost_accounting");
    let o = cogflow(&["-q", "--config", cfg.to_str().unwrap(), "experiment"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_three_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("exp");
    let o = cogflow(&["-q", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "experiment", "order_bias"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(std::fs::read_to_string(&blocker).unwrap(), "not a directory");
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries.len(), 2, "{entries:?}");
}

#[test]
fn unreachable_llm_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let cfg = write_config(dir.path(), SMALL);
    let o = cogflow(&[
        "-q",
        "--config",
        cfg.to_str().unwrap(),
        "--backend",
        "llm",
        "--set",
        &format!("polarize.llm.endpoint=http://127.0.0.1:{port}/v1/chat/completions"),
        "--set",
        "polarize.llm.retries=0",
        "polarize",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("anchor"));
}
