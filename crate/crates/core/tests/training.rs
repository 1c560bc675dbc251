use brainformer_core::layers::Gating;
use brainformer_core::model::{BlockSpec, LanguageModel, LayerKind, ModelSpec};
use brainformer_core::tensor::Activation;
use brainformer_core::training::{
    evaluate_perplexity, lr_at, Budget, BudgetMeter, Corpus, Split, TrainConfig, Trainer, BOS, EOS,
    VOCAB_SIZE,
};
use brainformer_core::Clock;

struct Frozen;

impl Clock for Frozen {
    fn now_secs(&self) -> f64 {
        0.0
    }
}

const TEXT: &[u8] = b"the quick brown fox jumps over the lazy dog. the quick brown fox jumps over the lazy dog again.";

fn small_trainer(seed: u64) -> Trainer {
    let block = BlockSpec {
        layers: vec![LayerKind::Attn, LayerKind::Moe, LayerKind::Ffn],
        model_dim: 8,
        moe_hidden_dim: 8,
        ffn_hidden_dim: 8,
        n_heads: 2,
        head_dim: 4,
        gating: Gating::Top2,
        capacity_factor: 2,
        activation: Activation::GatedRelu,
        n_experts: 2,
    };
    let model = LanguageModel::new(ModelSpec::new(block, 1, VOCAB_SIZE, 16), seed).unwrap();
    let cfg = TrainConfig {
        base_lr: 0.01,
        warmup_constant_steps: 2,
        max_steps: 100,
        batch_size: 2,
        seq_len: 16,
        seed: 7,
        ..TrainConfig::default()
    };
    Trainer::new(model, cfg).unwrap()
}

fn values(t: &Trainer) -> Vec<(String, Vec<f64>)> {
    t.model
        .params
        .iter()
        .map(|(n, v)| (n.to_string(), v.data().to_vec()))
        .collect()
}

#[test]
fn corpus_is_bracketed_and_split_at_the_tail() {
    let c = Corpus::from_bytes(b"abcdefghij", 0.25).unwrap();
    let all: Vec<usize> = [c.tokens(Split::Train), c.tokens(Split::Valid)].concat();
    assert_eq!(all.len(), 12);
    assert_eq!(all[0], BOS);
    assert_eq!(all[11], EOS);
    assert_eq!(c.tokens(Split::Valid).len(), 3);
    assert_eq!(&all[1..11], b"abcdefghij".map(usize::from).as_slice());
}

#[test]
fn schedule_is_constant_then_inverse_square_root() {
    for step in 1..=50u64 {
        let expected = if step <= 10 {
            0.02
        } else {
            0.02 * (10.0 / step as f64).sqrt()
        };
        assert!((lr_at(step, 0.02, 10) - expected).abs() < 1e-15);
    }
    assert!((lr_at(40, 0.02, 10) - 0.01).abs() < 1e-15);
}

#[test]
fn training_is_deterministic_and_resumable_in_segments() {
    let corpus = Corpus::from_bytes(TEXT, 0.2).unwrap();
    let mut a = small_trainer(3);
    let out = a.train(&corpus, Budget::MaxSteps(4), &Frozen);
    assert_eq!(out.steps, 4);
    assert!(out.diverged.is_none());

    let mut b = small_trainer(3);
    let mut meter = BudgetMeter::new(Budget::MaxSteps(4));
    b.advance(&corpus, &mut meter, 0.5, &Frozen, &mut |_| {});
    assert_eq!(meter.steps, 2);
    b.advance(&corpus, &mut meter, 1.0, &Frozen, &mut |_| {});
    assert_eq!(meter.steps, 4);
    assert_eq!(values(&a), values(&b));

    let mut c = small_trainer(3);
    c.train(&corpus, Budget::MaxSteps(4), &Frozen);
    assert_eq!(values(&a), values(&c));
}

#[test]
fn cost_budget_charges_the_analytic_step_cost() {
    let corpus = Corpus::from_bytes(TEXT, 0.2).unwrap();
    let mut t = small_trainer(1);
    let per = t.cost_per_step();
    let out = t.train(&corpus, Budget::MaxCostUnits(per * 3.5), &Frozen);
    assert_eq!(out.steps, 4);
    assert!((out.cost_consumed - 4.0 * per).abs() <= 1e-9 * per);
}

#[test]
fn training_lowers_the_loss() {
    let corpus = Corpus::from_bytes(TEXT, 0.0).unwrap();
    let mut t = small_trainer(2);
    let before = evaluate_perplexity(&t.model, corpus.tokens(Split::Train), 16).unwrap();
    assert!(
        before > 100.0,
        "an untrained byte model sits near uniform: {before}"
    );
    t.cfg.base_lr = 0.03;
    let out = t.train(&corpus, Budget::MaxSteps(60), &Frozen);
    assert!(out.diverged.is_none());
    let after = evaluate_perplexity(&t.model, corpus.tokens(Split::Train), 16).unwrap();
    assert!(after < before / 4.0, "{before} -> {after}");
}
