//! End-to-end CLI checks with tiny workloads.

use itsr_core::env::Environment;
use itsr_core::pgm;
use itsr_core::toy_env::ToyEnv;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_itsr"))
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.json");
    std::fs::write(
        &path,
        serde_json::json!({
            "env": {"kind": "toy", "variant": "constrained"},
            "mcts": {"iterations": 10},
            "training": {
                "stages": [{"epochs": 1, "max_len": 2}],
                "episodes_per_epoch": 8,
                "buffer_capacity": 500,
                "batch_size": 16,
                "batches_per_epoch": 5
            },
            "eval": {"num_pairs": 10, "ks": [10]},
            "seed": 5,
            "workers": 2
        })
        .to_string(),
    )
    .unwrap();
    path
}

#[test]
fn generate_writes_jsonl_and_renders() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let output = bin()
        .args(["generate", "--env", "toy-constrained", "--seed", "3"])
        .args(["--count", "5", "--max-len", "3", "--render"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());

    let text = std::fs::read_to_string(out.join("episodes.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 5);
    for row in &rows {
        assert_eq!(row["env"], "toy-constrained");
        assert_eq!(row["source_cells"].as_array().unwrap().len(), 9);
        let actions = row["actions"].as_array().unwrap();
        assert!(!actions.is_empty() && actions.len() <= 3);
    }
    assert!(out.join("config-resolved.json").exists());
    // One source and one target render per episode.
    let renders = std::fs::read_dir(out.join("renders")).unwrap().count();
    assert_eq!(renders, 10);
    let img = pgm::read(&out.join("renders/ep00000_source.pgm")).unwrap();
    assert_eq!(img.side(), 27);
}

#[test]
fn oracle_solve_and_count_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let env = ToyEnv::free();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ep = env.generate_pair(2, &mut rng).unwrap();
    let src = dir.path().join("src.pgm");
    let tgt = dir.path().join("tgt.pgm");
    pgm::write(&ep.source, &src).unwrap();
    pgm::write(&ep.target, &tgt).unwrap();

    let output = bin()
        .args(["oracle", "solve", "--env", "toy-free", "--max-depth", "2"])
        .arg("--source")
        .arg(&src)
        .arg("--target")
        .arg(&tgt)
        .output()
        .unwrap();
    assert!(output.status.success());
    let solved: serde_json::Value = serde_json::from_slice(&output.stdout).expect("JSON on stdout");
    assert_eq!(solved["found"], true);
    let actions: Vec<String> = solved["actions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_str().unwrap().to_string())
        .collect();
    // Replay the reported solution through the environment.
    let ids: Vec<usize> = actions
        .iter()
        .map(|name| env.action_id(name).unwrap())
        .collect();
    let replay = env
        .apply_sequence(&itsr_core::env::Trajectory::new(ids), &ep.source)
        .unwrap();
    assert_eq!(replay, ep.target);

    let length = solved["length"].as_u64().unwrap();
    let output = bin()
        .args(["oracle", "count-solutions", "--env", "toy-free"])
        .arg("--source")
        .arg(&src)
        .arg("--target")
        .arg(&tgt)
        .args(["--length", &length.to_string()])
        .output()
        .unwrap();
    assert!(output.status.success());
    let counted: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!(counted["count"].as_u64().unwrap() >= 1);
}

#[test]
fn train_describe_trace_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("run");
    let output = bin()
        .args(["train-mcts", "--trace-search", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(out.join("metrics.csv").exists());
    assert!(out.join("timings.csv").exists());
    let ckpt = out.join("latest.itsr");

    // Search traces: one JSON line per epoch.
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = trace
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0]["moves"].as_array().is_some());

    let output = bin()
        .arg("describe-checkpoint")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(output.status.success());
    let desc: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(desc["kind"], "mcts");
    assert_eq!(desc["action_count"], 4);
    let tensors = desc["tensors"].as_array().unwrap();
    assert!(tensors.iter().any(|t| t["name"] == "actor.weight"));
    assert!(tensors.iter().any(|t| t["name"] == "actor.weight.vel"));

    // Resuming from the final checkpoint skips every epoch and succeeds.
    let out2 = dir.path().join("resumed");
    let output = bin()
        .args(["train-mcts", "--config"])
        .arg(&config)
        .arg("--resume")
        .arg(&ckpt)
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    // Loading an incompatible checkpoint fails with a shape complaint.
    let output = bin()
        .args(["eval", "--env", "toy-free", "--checkpoint"])
        .arg(&ckpt)
        .arg("--out")
        .arg(dir.path().join("bad-eval"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("CheckpointError"), "stderr: {err}");
}

#[test]
fn emit_fixtures_writes_reproducible_pool() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = bin()
            .args([
                "emit-fixtures",
                "--seed",
                "5",
                "--count",
                "3",
                "--side",
                "16",
            ])
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(output.status.success());
    }
    for i in 0..3 {
        let name = format!("fixture_{i:04}.pgm");
        let a = std::fs::read(out_a.join(&name)).unwrap();
        let b = std::fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b);
        assert_eq!(pgm::decode(&a).unwrap().side(), 16);
    }
}

#[test]
fn image_env_ingests_a_pgm_pool_directory() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool");
    let output = bin()
        .args(["emit-fixtures", "--seed", "9", "--count", "6", "--side", "32"])
        .arg("--out")
        .arg(&pool)
        .output()
        .unwrap();
    assert!(output.status.success());

    let config = dir.path().join("image.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "env": {
                "kind": "image",
                "pool": {"source": "directory", "dir": pool}
            },
            "seed": 4
        })
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("gen");
    let output = bin()
        .args(["generate", "--count", "4", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(out.join("episodes.jsonl")).unwrap();
    for line in text.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(row["env"], "image");
        assert!(row["pool_index"].as_u64().unwrap() < 6);
    }
}

#[test]
fn itsr_out_env_var_sets_the_run_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("custom-root");
    let output = bin()
        .args([
            "generate", "--env", "toy-free", "--seed", "1", "--count", "2",
        ])
        .env("ITSR_OUT", &root)
        .output()
        .unwrap();
    assert!(output.status.success());
    let subdirs: Vec<_> = std::fs::read_dir(&root).unwrap().collect();
    assert_eq!(subdirs.len(), 1);
}
