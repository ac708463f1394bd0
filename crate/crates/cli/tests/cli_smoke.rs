//! End-to-end CLI exercises through the built binary: data generation,
//! pretraining, tuning, evaluation, resolution, linting, gradient check,
//! checkpoint round-trips and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_canform"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn canform");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A miniature world so CLI runs stay fast: 2 domains, 4 intents.
fn tiny_world_json() -> &'static str {
    r#"{
  "domains": [
    {
      "name": "banking",
      "intents": [
        {
          "label": "transfer_money",
          "canonical": "transfer money to account",
          "templates": ["transfer money to my {kind} account", "i want to transfer money"]
        },
        {
          "label": "check_balance",
          "canonical": "check balance in account",
          "templates": ["check the balance in my {kind} account", "i want to check my balance"]
        }
      ],
      "slots": { "kind": ["savings", "checking"] }
    },
    {
      "name": "media",
      "intents": [
        {
          "label": "play_music",
          "canonical": "play music now",
          "templates": ["play some {genre} music", "play {genre} music now"]
        },
        {
          "label": "pause_playback",
          "canonical": "pause the playback",
          "templates": ["pause the {thing}", "pause playback please"]
        }
      ],
      "slots": { "genre": ["jazz", "rock"], "thing": ["music", "movie"] }
    }
  ],
  "mode": "clean",
  "utterances_per_intent": 12
}"#
}

struct Env {
    #[allow(dead_code)]
    tmp: tempfile::TempDir,
    dir: PathBuf,
}

fn setup_data() -> Env {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    fs::write(dir.join("tiny_world.json"), tiny_world_json()).unwrap();
    run_ok(bin()
        .arg("gen-data")
        .arg("--out")
        .arg(dir.join("data"))
        .arg("--seed")
        .arg("7")
        .arg("--config")
        .arg(dir.join("tiny_world.json")));
    Env { tmp, dir }
}

fn pretrain(env: &Env) -> PathBuf {
    let cfg = format!(
        r#"{{"corpus": "{}", "epochs": 6, "batch_size": 8, "learning_rate": 0.003, "holdout_ratio": 0.1}}"#,
        env.dir.join("data/corpus.txt").display()
    );
    fs::write(env.dir.join("pretrain.json"), cfg).unwrap();
    run_ok(bin()
        .arg("pretrain")
        .arg("--config")
        .arg(env.dir.join("pretrain.json"))
        .arg("--out")
        .arg(env.dir.join("pre"))
        .arg("--seed")
        .arg("7"));
    env.dir.join("pre/lm.ckpt")
}

fn ptune(env: &Env, lm: &Path) -> PathBuf {
    let cfg = format!(
        r#"{{"dataset": "{}", "schema": "{}", "train_ratio": 0.8, "epochs": 2, "batch_size": 8, "learning_rate": 0.008, "n_virtual_tokens": 4}}"#,
        env.dir.join("data/dataset.jsonl").display(),
        env.dir.join("data/schema.json").display()
    );
    fs::write(env.dir.join("ptune.json"), cfg).unwrap();
    run_ok(bin()
        .arg("ptune")
        .arg("--config")
        .arg(env.dir.join("ptune.json"))
        .arg("--checkpoint")
        .arg(lm)
        .arg("--out")
        .arg(env.dir.join("tuned"))
        .arg("--seed")
        .arg("7"));
    env.dir.join("tuned/tuned.ckpt")
}

#[test]
fn full_cli_pipeline_runs_and_round_trips() {
    let env = setup_data();
    for f in ["world.json", "schema.json", "dataset.jsonl", "corpus.txt"] {
        assert!(env.dir.join("data").join(f).exists(), "{f} missing");
    }

    let lm = pretrain(&env);
    assert!(env.dir.join("pre/pretrain_log.csv").exists());

    // checkpoint save -> load -> save is byte-identical
    let bytes1 = fs::read(&lm).unwrap();
    let loaded = canform_cli::checkpoint::load(&lm).unwrap();
    canform_cli::checkpoint::save(&env.dir.join("pre/lm2.ckpt"), &loaded).unwrap();
    let bytes2 = fs::read(env.dir.join("pre/lm2.ckpt")).unwrap();
    assert_eq!(bytes1, bytes2, "checkpoint round-trip must be bitwise stable");

    let tuned = ptune(&env, &lm);
    assert!(env.dir.join("tuned/tune_log.csv").exists());

    // evaluation runs and reports exact accuracy arithmetic
    let cfg = format!(
        r#"{{"dataset": "{}"}}"#,
        env.dir.join("data/dataset.jsonl").display()
    );
    fs::write(env.dir.join("eval.json"), cfg).unwrap();
    run_ok(bin()
        .arg("eval")
        .arg("--config")
        .arg(env.dir.join("eval.json"))
        .arg("--checkpoint")
        .arg(&tuned)
        .arg("--out")
        .arg(env.dir.join("eval_out")));
    let report =
        canform_cli::report::load_report(&env.dir.join("eval_out/report.json")).unwrap();
    assert!(report.consistent(), "report accuracy must match its records");

    // resolver utility prints a prediction
    let out = run_ok(bin()
        .arg("resolve")
        .arg("--checkpoint")
        .arg(&tuned)
        .arg("transfer money to account"));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("transfer_money"), "got: {text}");

    // few-shot stage from the tuned checkpoint
    let cfg = format!(
        r#"{{"dataset": "{}", "domains": ["media"], "k": 4, "epochs": 1, "batch_size": 2, "learning_rate": 0.004}}"#,
        env.dir.join("data/dataset.jsonl").display()
    );
    fs::write(env.dir.join("fewshot.json"), cfg).unwrap();
    run_ok(bin()
        .arg("fewshot")
        .arg("--config")
        .arg(env.dir.join("fewshot.json"))
        .arg("--checkpoint")
        .arg(&tuned)
        .arg("--out")
        .arg(env.dir.join("fs"))
        .arg("--seed")
        .arg("7"));
    assert!(env.dir.join("fs/adapted.ckpt").exists());
    assert!(env.dir.join("fs/report.json").exists());
}

#[test]
fn digest_mismatch_between_checkpoints_exits_with_code_two() {
    let env = setup_data();
    let lm = pretrain(&env);
    let tuned = ptune(&env, &lm);

    // a different pretraining seed gives a different frozen LM
    run_ok(bin()
        .arg("pretrain")
        .arg("--config")
        .arg(env.dir.join("pretrain.json"))
        .arg("--out")
        .arg(env.dir.join("pre_other"))
        .arg("--seed")
        .arg("8"));

    let cfg = format!(
        r#"{{"dataset": "{}"}}"#,
        env.dir.join("data/dataset.jsonl").display()
    );
    fs::write(env.dir.join("eval.json"), cfg).unwrap();
    let out = bin()
        .arg("eval")
        .arg("--config")
        .arg(env.dir.join("eval.json"))
        .arg("--checkpoint")
        .arg(&tuned)
        .arg("--lm-checkpoint")
        .arg(env.dir.join("pre_other/lm.ckpt"))
        .arg("--out")
        .arg(env.dir.join("eval_bad"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "digest lineage breach must exit 2; stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let env = setup_data();
    let lm = pretrain(&env);
    let mut bytes = fs::read(&lm).unwrap();
    bytes.truncate(bytes.len() - 257);
    fs::write(env.dir.join("pre/truncated.ckpt"), &bytes).unwrap();
    let err = match canform_cli::checkpoint::load(&env.dir.join("pre/truncated.ckpt")) {
        Err(e) => e,
        Ok(_) => panic!("truncated checkpoint loaded successfully"),
    };
    assert!(err.to_string().contains("corrupt"), "got: {err}");
}

#[test]
fn lint_schema_flags_the_spurious_token_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let schema = r#"[
      {"intent": "search_flight", "canonical": "search tickets for flight one way", "domain": "flight"},
      {"intent": "buy_flight", "canonical": "buy tickets for flight", "domain": "flight"},
      {"intent": "search_bus", "canonical": "search for bus one way", "domain": "bus"},
      {"intent": "buy_bus", "canonical": "buy bus roundtrip", "domain": "bus"}
    ]"#;
    let p = tmp.path().join("schema.json");
    fs::write(&p, schema).unwrap();
    let out = run_ok(bin().arg("lint-schema").arg("--config").arg(&p));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("tickets"), "lint output: {text}");
}

#[test]
fn grad_check_subcommand_passes_the_tolerance() {
    let out = run_ok(bin().arg("grad-check").arg("--seed").arg("7"));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("max relative error"),
        "grad-check output: {text}"
    );
}

#[test]
fn k_zero_fewshot_config_is_rejected_with_code_one() {
    let env = setup_data();
    let cfg = format!(
        r#"{{"dataset": "{}", "domains": ["media"], "k": 0}}"#,
        env.dir.join("data/dataset.jsonl").display()
    );
    fs::write(env.dir.join("fs0.json"), cfg).unwrap();
    let out = bin()
        .arg("fewshot")
        .arg("--config")
        .arg(env.dir.join("fs0.json"))
        .arg("--checkpoint")
        .arg(env.dir.join("nonexistent.ckpt"))
        .arg("--out")
        .arg(env.dir.join("fs0"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_sgd_writes_dataset_and_skeleton() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(bin()
        .arg("ingest-sgd")
        .arg("--dir")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/sgd"))
        .arg("--out")
        .arg(tmp.path()));
    let dataset = canform_cli::formats::load_dataset(&tmp.path().join("dataset.jsonl")).unwrap();
    assert_eq!(dataset.len(), 7);
    let skeleton = fs::read_to_string(tmp.path().join("schema_skeleton.json")).unwrap();
    assert!(skeleton.contains("FindBus"));
}
