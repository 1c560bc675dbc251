mod common;

use brainformer_core::layers::{
    capacity, route_expert_choice, route_top2, Ffn, FfnConfig, Gating, Moe, MoeConfig, ParamStore,
};
use brainformer_core::tensor::{Activation, Tape};
use common::{expert_choice_oracle, random_scores, random_tensor, scores_tensor, top2_oracle};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn triples(d: &brainformer_core::layers::RoutingDecision) -> Vec<(usize, usize, f64)> {
    d.assignments
        .iter()
        .map(|a| (a.token, a.expert, a.weight))
        .collect()
}

proptest! {
    #[test]
    fn expert_choice_loads_are_exact(seed in any::<u64>(), n in 8usize..=64, e_pow in 1u32..=3, c in 1u32..=4) {
        let e = 1usize << e_pow;
        let k = capacity(c, n, e);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = random_scores(&mut rng, n, e);
        let decision = route_expert_choice(&scores_tensor(&scores), k);
        if k > n {
            prop_assert!(decision.is_err());
        } else {
            let decision = decision.unwrap();
            prop_assert!(decision.expert_loads().iter().all(|&l| l == k));
            prop_assert_eq!(triples(&decision), expert_choice_oracle(&scores, k));
        }
    }

    #[test]
    fn top2_matches_greedy_simulation(seed in any::<u64>(), n in 1usize..=64, e in 1usize..=8, c in 1u32..=4) {
        let k = capacity(c, n, e);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = random_scores(&mut rng, n, e);
        let decision = route_top2(&scores_tensor(&scores), k).unwrap();
        prop_assert!(decision.expert_loads().iter().all(|&l| l <= k));
        for (t, &f) in decision.token_fanout().iter().enumerate() {
            prop_assert!(f <= 2);
            prop_assert_eq!(f == 0, decision.dropped_tokens.contains(&t));
        }
        prop_assert_eq!(triples(&decision), top2_oracle(&scores, k));
    }

    #[test]
    fn combine_weights_are_raw_scores(seed in any::<u64>(), n in 2usize..=16, e in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = random_scores(&mut rng, n, e);
        let k = capacity(2, n, e).max(1);
        for d in [route_top2(&scores_tensor(&scores), k).unwrap(), route_expert_choice(&scores_tensor(&scores), k.min(n)).unwrap()] {
            for a in &d.assignments {
                prop_assert_eq!(a.weight, scores[a.token][a.expert]);
            }
        }
    }
}

#[test]
fn single_expert_moe_equals_dense_ffn() {
    for gating in Gating::ALL {
        for act in Activation::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let cfg = MoeConfig {
                model_dim: 6,
                expert_hidden_dim: 10,
                n_experts: 1,
                gating,
                capacity_factor: 1,
                activation: act,
            };
            let mut store = ParamStore::new();
            let moe = Moe::init(cfg, &mut store, "moe", &mut rng).unwrap();
            let mut dense_store = ParamStore::new();
            let dense = Ffn::init(
                FfnConfig {
                    model_dim: 6,
                    hidden_dim: 10,
                    activation: act,
                },
                &mut dense_store,
                "ffn",
                &mut rng,
            )
            .unwrap();
            let expert = &moe.experts[0];
            dense_store
                .set_values(dense.w_in, store.get(expert.w_in).data())
                .unwrap();
            dense_store
                .set_values(dense.w_out, store.get(expert.w_out).data())
                .unwrap();
            if let (Some(a), Some(b)) = (dense.w_gate, expert.w_gate) {
                dense_store.set_values(a, store.get(b).data()).unwrap();
            }
            let x = random_tensor(&mut rng, &[7, 6], 2.0);
            let (mut t1, mut t2) = (Tape::new(), Tape::new());
            let x1 = t1.constant(x.clone());
            let x2 = t2.constant(x);
            let y_moe = moe.forward(&mut t1, &store, x1).unwrap().output;
            let y_dense = dense.forward(&mut t2, &dense_store, x2).unwrap();
            for (a, b) in t1.value(y_moe).data().iter().zip(t2.value(y_dense).data()) {
                assert!((a - b).abs() < 1e-10, "{gating:?} {act:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn dropped_tokens_get_zero_moe_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = MoeConfig {
        model_dim: 4,
        expert_hidden_dim: 4,
        n_experts: 4,
        gating: Gating::ExpertChoice,
        capacity_factor: 1,
        activation: Activation::Relu,
    };
    let mut store = ParamStore::new();
    let moe = Moe::init(cfg, &mut store, "moe", &mut rng).unwrap();
    let x = random_tensor(&mut rng, &[16, 4], 1.0);
    let mut t = Tape::new();
    let xv = t.constant(x);
    let out = moe.forward(&mut t, &store, xv).unwrap();
    assert!(!out.decision.dropped_tokens.is_empty());
    for &tok in &out.decision.dropped_tokens {
        assert!(t.value(out.output).row(tok).iter().all(|&v| v == 0.0));
    }
}
