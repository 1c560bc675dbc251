use std::fs;
use std::path::Path;
use std::process::Command;

use brainformer::checkpoint;
use brainformer::cli::{
    COUNT_REPORT_FILE, LEDGER_FILE, LINEAGE_FILE, REPORT_FILE, REWARD_FILE, SUMMARY_FILE,
    TOPK_FILE, TRAIN_SUMMARY_FILE, TRAJECTORY_FILE, VIOLATIONS_FILE,
};
use brainformer_core::layers::Gating;
use brainformer_core::model::{BlockSpec, LanguageModel, LayerKind, ModelSpec};
use brainformer_core::search::{
    Candidate, Field, StopReason, TrialOutcome, TrialRecord, STOPPED_REWARD,
};
use brainformer_core::tensor::Activation;
use brainformer_core::training::VOCAB_SIZE;
use serde_json::{json, Value};
use tempfile::TempDir;

fn brainformer(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_brainformer"))
        .args(args)
        .env("BRAINFORMER_LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn tiny_block() -> BlockSpec {
    BlockSpec {
        layers: vec![LayerKind::Attn, LayerKind::Moe],
        model_dim: 8,
        moe_hidden_dim: 8,
        ffn_hidden_dim: 8,
        n_heads: 2,
        head_dim: 4,
        gating: Gating::Top2,
        capacity_factor: 2,
        activation: Activation::Relu,
        n_experts: 2,
    }
}

/// A directory holding `genome.json`, `corpus.txt` and `train.json`.
fn train_fixture(max_steps: u64) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("genome.json"),
        serde_json::to_string(&tiny_block()).unwrap(),
    )
    .unwrap();
    fs::write(
        dir.path().join("corpus.txt"),
        b"a small corpus that repeats. a small corpus that repeats.",
    )
    .unwrap();
    let cfg = json!({
        "genome": "genome.json",
        "corpus": "corpus.txt",
        "n_blocks": 1,
        "train": {"max_steps": max_steps, "batch_size": 2, "seq_len": 8, "seed": 4, "warmup_constant_steps": 2}
    });
    fs::write(dir.path().join("train.json"), cfg.to_string()).unwrap();
    dir
}

fn param_values(model: &LanguageModel) -> Vec<(String, Vec<f64>)> {
    model
        .params
        .iter()
        .map(|(n, t)| (n.to_string(), t.data().to_vec()))
        .collect()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(brainformer(&[]), 2);
    assert_eq!(brainformer(&["--help"]), 0);
    assert_eq!(brainformer(&["search", "--out", p(&out)]), 2);
    assert_eq!(brainformer(&["count-params", "--out", p(&out)]), 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"evolution": {"population_size": 1}}"#).unwrap();
    assert_eq!(
        brainformer(&["search", "--config", p(&bad), "--out", p(&out)]),
        2
    );
    fs::write(&bad, r#"{"evolution": {"popsize": 4}}"#).unwrap();
    assert_eq!(
        brainformer(&["search", "--config", p(&bad), "--out", p(&out)]),
        2
    );
    fs::write(&bad, r#"{"trial": {"budget": {"max_seconds": 5}}}"#).unwrap();
    assert_eq!(
        brainformer(&["search", "--config", p(&bad), "--out", p(&out)]),
        2
    );

    let missing = dir.path().join("missing.jsonl");
    assert_eq!(
        brainformer(&["report", "--ledger", p(&missing), "--out", p(&out)]),
        1
    );
}

#[test]
fn empty_ledger_gives_header_only_tables() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join(LEDGER_FILE);
    fs::write(&ledger, "").unwrap();
    let out = dir.path().join("report");
    assert_eq!(
        brainformer(&["report", "--ledger", p(&ledger), "--out", p(&out)]),
        0
    );
    assert_eq!(
        fs::read_to_string(out.join(REWARD_FILE)).unwrap(),
        "trial_id,round,reward,best_reward\n"
    );
    assert_eq!(
        fs::read_to_string(out.join(VIOLATIONS_FILE)).unwrap(),
        "stop_reason,count\n"
    );
    assert_eq!(
        fs::read_to_string(out.join(SUMMARY_FILE))
            .unwrap()
            .lines()
            .count(),
        1
    );
    let report = read_json(&out.join(REPORT_FILE));
    assert_eq!(report["n_records"], 0);
    assert_eq!(report["best_trial"], Value::Null);
}

fn record(id: u64, parent: Option<u64>, round: usize, stop: StopReason, loss: f64) -> TrialRecord {
    let completed = stop == StopReason::Completed;
    TrialRecord::new(
        Candidate {
            trial_id: id,
            parent_id: parent,
            round,
            mutated_field: parent.map(|_| Field::Gating),
            genome: tiny_block(),
        },
        TrialOutcome {
            step_time: 1.0,
            cost_per_step: 1.0,
            steps_completed: 10,
            cost_consumed: 10.0,
            loss_trajectory: vec![(10, loss)],
            checkpoint_perplexity: Some(5.0),
            final_valid_loss: completed.then_some(loss),
            reward: if completed { -loss } else { STOPPED_REWARD },
            stop_reason: stop,
            detail: None,
        },
    )
}

#[test]
fn report_matches_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = dir.path().join(LEDGER_FILE);
    let records = [
        record(0, None, 0, StopReason::Completed, 3.0),
        record(1, None, 0, StopReason::StepTimeViolation, 0.5),
        record(2, Some(0), 1, StopReason::Completed, 2.5),
    ];
    let mut text: String = records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    text.push_str("{\"torn\": \n");
    fs::write(&ledger, text).unwrap();
    let out = dir.path().join("report");
    assert_eq!(
        brainformer(&["report", "--ledger", p(&ledger), "--out", p(&out)]),
        0
    );

    assert_eq!(
        fs::read_to_string(out.join(REWARD_FILE)).unwrap(),
        "trial_id,round,reward,best_reward\n0,0,-3.0,-3.0\n1,0,-1.0,-3.0\n2,1,-2.5,-2.5\n"
    );
    assert_eq!(
        fs::read_to_string(out.join(VIOLATIONS_FILE)).unwrap(),
        "stop_reason,count\ncompleted,2\nstep_time_violation,1\n"
    );
    assert_eq!(
        fs::read_to_string(out.join(LINEAGE_FILE)).unwrap(),
        "depth,trial_id,parent_id,round,mutated_field,reward\n0,0,,0,,-3.0\n1,2,0,1,gating,-2.5\n"
    );
    let report = read_json(&out.join(REPORT_FILE));
    assert_eq!(report["n_records"], 3);
    assert_eq!(report["skipped_lines"], 1);
    assert_eq!(report["best_trial"], 2);
    assert_eq!(report["lineage"], json!([0, 2]));
}

#[test]
fn single_expert_count_has_equal_totals() {
    let dir = tempfile::tempdir().unwrap();
    let mut block = tiny_block();
    block.n_experts = 1;
    let genome = dir.path().join("dense.json");
    fs::write(&genome, serde_json::to_string(&block).unwrap()).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        brainformer(&["count-params", "--genome", p(&genome), "--out", p(&out)]),
        0
    );
    let report = read_json(&out.join(COUNT_REPORT_FILE));
    assert_eq!(
        report["counts"]["n_params"],
        report["counts"]["n_act_params"]
    );
    assert_eq!(report["spec"]["n_blocks"], 3);
    assert!(report.get("comparison").is_none_or(Value::is_null));

    assert_eq!(
        brainformer(&[
            "count-params",
            "--reference",
            "glam-0.1b-32e",
            "--scale",
            "2",
            "--out",
            p(&out)
        ]),
        0
    );
    let scaled = read_json(&out.join(COUNT_REPORT_FILE));
    assert_eq!(scaled["spec"]["block"]["model_dim"], 1536);
    assert!(scaled.get("comparison").is_none_or(Value::is_null));
}

#[test]
fn zero_step_training_saves_the_initial_model() {
    let dir = train_fixture(0);
    let out = dir.path().join("run");
    assert_eq!(
        brainformer(&[
            "train",
            "--config",
            p(&dir.path().join("train.json")),
            "--out",
            p(&out)
        ]),
        0
    );
    let trainer = checkpoint::load(&out, None).unwrap();
    assert_eq!(trainer.step, 0);
    let init = LanguageModel::new(ModelSpec::new(tiny_block(), 1, VOCAB_SIZE, 8), 4).unwrap();
    assert_eq!(param_values(&trainer.model), param_values(&init));
    assert_eq!(fs::read_to_string(out.join(TRAJECTORY_FILE)).unwrap(), "");
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = train_fixture(3);
    let cfg = dir.path().join("train.json");
    let (split, whole) = (dir.path().join("split"), dir.path().join("whole"));
    assert_eq!(
        brainformer(&["train", "--config", p(&cfg), "--out", p(&split)]),
        0
    );

    let mut longer = read_json(&cfg);
    longer["train"]["max_steps"] = json!(6);
    fs::write(&cfg, longer.to_string()).unwrap();
    assert_eq!(
        brainformer(&["train", "--config", p(&cfg), "--out", p(&split), "--resume"]),
        0
    );
    assert_eq!(
        brainformer(&["train", "--config", p(&cfg), "--out", p(&whole)]),
        0
    );

    let steps: Vec<u64> = fs::read_to_string(split.join(TRAJECTORY_FILE))
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["step"]
                .as_u64()
                .unwrap()
        })
        .collect();
    assert_eq!(steps, vec![1, 2, 3, 4, 5, 6]);
    assert_eq!(read_json(&split.join(TRAIN_SUMMARY_FILE))["start_step"], 3);

    let a = checkpoint::load(&split, None).unwrap();
    let b = checkpoint::load(&whole, None).unwrap();
    assert_eq!(a.step, 6);
    assert_eq!(param_values(&a.model), param_values(&b.model));
}

#[test]
fn resume_rejects_a_different_genome() {
    let dir = train_fixture(1);
    let cfg = dir.path().join("train.json");
    let out = dir.path().join("run");
    assert_eq!(
        brainformer(&["train", "--config", p(&cfg), "--out", p(&out)]),
        0
    );
    let mut other = tiny_block();
    other.model_dim = 12;
    other.n_heads = 3;
    fs::write(
        dir.path().join("genome.json"),
        serde_json::to_string(&other).unwrap(),
    )
    .unwrap();
    assert_eq!(
        brainformer(&["train", "--config", p(&cfg), "--out", p(&out), "--resume"]),
        2
    );
}

#[test]
fn singleton_space_search_evaluates_one_genome() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = tiny_block();
    g.layers = vec![LayerKind::Attn, LayerKind::Attn];
    let cfg = json!({
        "space": {
            "block_len": [2], "layer_kinds": ["attn"], "model_dim": [8], "moe_hidden_dim": [8],
            "ffn_hidden_dim": [8], "n_heads": [2], "gating": ["top2"], "capacity_factor": [2],
            "activation": ["relu"], "head_dim": 4, "n_experts": 2
        },
        "evolution": {"population_size": 3, "rounds": 2, "seed": 9},
        "trial": {"budget": {"max_steps": 20}},
        "proxy": {"n_blocks": 1, "seq_len": 16, "batch_size": 2},
        "baseline": {"genome": g}
    });
    let path = dir.path().join("search.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        brainformer(&[
            "search",
            "--config",
            p(&path),
            "--out",
            p(&out),
            "--workers",
            "2"
        ]),
        0
    );

    let lines: Vec<Value> = fs::read_to_string(out.join(LEDGER_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 9);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["trial_id"], i as u64);
        assert_eq!(l["stop_reason"], "completed");
        assert_eq!(l["steps_completed"], 20);
        assert_eq!(l["reward"], lines[0]["reward"]);
    }
    let topk = read_json(&out.join(TOPK_FILE));
    assert_eq!(topk["candidates"].as_array().unwrap().len(), 3);
    assert_eq!(topk["candidates"][0]["trial_id"], 0);
}

#[test]
fn search_with_real_proxy_training() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.txt"), b"proxy training reads bytes from this file. ".repeat(8)).unwrap();
    let cfg = json!({
        "space": {
            "block_len": [2, 3], "layer_kinds": ["attn", "ffn", "moe"], "model_dim": [8], "moe_hidden_dim": [8],
            "ffn_hidden_dim": [8, 16], "n_heads": [2], "gating": ["top2", "expert_choice"], "capacity_factor": [1, 2],
            "activation": ["relu", "gated_gelu"], "head_dim": 4, "n_experts": 2
        },
        "evolution": {"population_size": 3, "rounds": 1, "seed": 1},
        "trial": {"budget": {"max_steps": 4}},
        "proxy": {"n_blocks": 1, "seq_len": 16, "batch_size": 2},
        "trainer": {"kind": "training", "corpus": "corpus.txt", "valid_fraction": 0.2, "train": {"seq_len": 16, "batch_size": 2}}
    });
    let path = dir.path().join("search.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    assert_eq!(brainformer(&["search", "--config", p(&path), "--out", p(&out)]), 0);
    let text = fs::read_to_string(out.join(LEDGER_FILE)).unwrap();
    assert_eq!(text.lines().count(), 6);
    let baseline = read_json(&out.join("baseline.json"));
    assert_eq!(baseline["outcome"]["steps_completed"], 4);
    assert!(baseline["outcome"]["final_valid_loss"].as_f64().unwrap().is_finite());
}
