mod common;

use brainformer_core::layers::{
    Attention, AttentionConfig, Ffn, FfnConfig, Gating, Moe, MoeConfig, ParamStore,
};
use brainformer_core::model::{compose_block, BlockSpec, LanguageModel, LayerKind, ModelSpec};
use brainformer_core::tensor::{Activation, Tensor};
use common::{check_gradients, project, random_tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn tape_ops_match_finite_differences() {
    let mut r = rng(1);
    let mut store = ParamStore::new();
    let w = store.add("w", random_tensor(&mut r, &[4, 3], 1.0));
    let g = store.add("g", random_tensor(&mut r, &[3], 1.0));
    let b = store.add("b", random_tensor(&mut r, &[3], 1.0));
    let x = random_tensor(&mut r, &[5, 4], 1.0);
    let proj = random_tensor(&mut r, &[5, 3], 1.0);
    let idx = [4usize, 0, 0, 2];

    let report = check_gradients(&mut store, &x, |t, s, x| {
        let wv = s.bind(t, w);
        let h = t.matmul(x, wv)?;
        let gv = s.bind(t, g);
        let bv = s.bind(t, b);
        let h = t.layer_norm(h, gv, bv, 1e-6)?;
        let h = t.gelu(h);
        let sm = t.softmax(h, 1)?;
        let both = t.add(h, sm)?;
        let picked = t.gather_rows(both, &idx)?;
        let back = t.scatter_add_rows(picked, &idx, 5)?;
        let mixed = t.add(back, both)?;
        project(t, mixed, &proj)
    });
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn cross_entropy_and_leading_axis_softmax() {
    let mut r = rng(2);
    let mut store = ParamStore::new();
    let w = store.add("w", random_tensor(&mut r, &[3, 6], 1.0));
    let x = random_tensor(&mut r, &[4, 3], 1.0);
    let targets = [5usize, 0, 2, 2];
    let report = check_gradients(&mut store, &x, |t, s, x| {
        let wv = s.bind(t, w);
        let logits = t.matmul(x, wv)?;
        let col = t.softmax(logits, 0)?;
        let mixed = t.add(logits, col)?;
        t.cross_entropy(mixed, &targets)
    });
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn attention_layer() {
    let mut r = rng(3);
    let mut store = ParamStore::new();
    let cfg = AttentionConfig {
        model_dim: 6,
        n_heads: 2,
        head_dim: 3,
    };
    let attn = Attention::init(cfg, &mut store, "attn", &mut r).unwrap();
    let x = random_tensor(&mut r, &[5, 6], 1.0);
    let proj = random_tensor(&mut r, &[5, 6], 1.0);
    let report = check_gradients(&mut store, &x, |t, s, x| {
        let y = attn.forward(t, s, x)?;
        project(t, y, &proj)
    });
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn ffn_layer_each_activation() {
    for (i, act) in Activation::ALL.into_iter().enumerate() {
        let mut r = rng(10 + i as u64);
        let mut store = ParamStore::new();
        let cfg = FfnConfig {
            model_dim: 5,
            hidden_dim: 7,
            activation: act,
        };
        let ffn = Ffn::init(cfg, &mut store, "ffn", &mut r).unwrap();
        let x = random_tensor(&mut r, &[4, 5], 1.0);
        let proj = random_tensor(&mut r, &[4, 5], 1.0);
        let report = check_gradients(&mut store, &x, |t, s, x| {
            let y = ffn.forward(t, s, x)?;
            project(t, y, &proj)
        });
        assert!(report.max_rel_err < TOL, "{act:?}: {report:?}");
    }
}

#[test]
fn moe_layer_output_and_aux_loss() {
    for gating in Gating::ALL {
        for (i, act) in Activation::ALL.into_iter().enumerate() {
            let mut r = rng(20 + i as u64);
            let mut store = ParamStore::new();
            let cfg = MoeConfig {
                model_dim: 5,
                expert_hidden_dim: 6,
                n_experts: 3,
                gating,
                capacity_factor: 1,
                activation: act,
            };
            let moe = Moe::init(cfg, &mut store, "moe", &mut r).unwrap();
            let x = random_tensor(&mut r, &[6, 5], 1.0);
            let proj = random_tensor(&mut r, &[6, 5], 1.0);
            let report = check_gradients(&mut store, &x, |t, s, x| {
                let out = moe.forward(t, s, x)?;
                let y = project(t, out.output, &proj)?;
                let aux = t.scale(out.aux_loss, 0.5);
                t.add(y, aux)
            });
            assert!(report.checked > 0);
            assert!(report.max_rel_err < TOL, "{gating:?} {act:?}: {report:?}");
        }
    }
}

#[test]
fn composed_block() {
    let spec = BlockSpec {
        layers: vec![
            LayerKind::Moe,
            LayerKind::Attn,
            LayerKind::Ffn,
            LayerKind::Attn,
        ],
        model_dim: 6,
        moe_hidden_dim: 5,
        ffn_hidden_dim: 4,
        n_heads: 2,
        head_dim: 3,
        gating: Gating::Top2,
        capacity_factor: 2,
        activation: Activation::GatedGelu,
        n_experts: 2,
    };
    let mut r = rng(30);
    let mut store = ParamStore::new();
    let block = compose_block(&spec, &mut store, "b", &mut r).unwrap();
    let x = random_tensor(&mut r, &[5, 6], 1.0);
    let proj = random_tensor(&mut r, &[5, 6], 1.0);
    let report = check_gradients(&mut store, &x, |t, s, x| {
        let (y, aux) = block.forward(t, s, x)?;
        let y = project(t, y, &proj)?;
        t.add(y, aux)
    });
    assert!(report.max_rel_err < TOL, "{report:?}");
}

#[test]
fn full_language_model_loss() {
    let block = BlockSpec {
        layers: vec![LayerKind::Attn, LayerKind::Moe],
        model_dim: 4,
        moe_hidden_dim: 4,
        ffn_hidden_dim: 4,
        n_heads: 1,
        head_dim: 4,
        gating: Gating::ExpertChoice,
        capacity_factor: 1,
        activation: Activation::GatedRelu,
        n_experts: 2,
    };
    let mut model = LanguageModel::new(ModelSpec::new(block, 2, 7, 6), 4).unwrap();
    let tokens = [1usize, 4, 6, 0, 3];
    let targets = [4usize, 6, 0, 3, 2];
    let model_ref = model.clone();
    let dummy = Tensor::zeros([1]).unwrap();
    let report = check_gradients(&mut model.params, &dummy, |t, s, _| {
        let m = LanguageModel {
            params: s.clone(),
            ..model_ref.clone()
        };
        let l = m.loss(t, &tokens, &targets, 0.1)?;
        Ok(l.total)
    });
    assert!(report.max_rel_err < TOL, "{report:?}");
}
