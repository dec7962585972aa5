use graphshield_core::adversarial::{attack, attack_loss, craft, input_gradient, robustness_eval, AttackConfig};
use graphshield_core::classifier::{verdict_for, Class, Mlp, NetworkMode};
use graphshield_core::ensemble::{
    combine_logic, train_weights, verdicts_from_jsonl, verdicts_to_jsonl, EnsembleMode, Fuser,
};
use graphshield_core::Error;
use graphshield_testkit::{central_gradient, max_relative_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use Class::{Benign as B, Malware as M};

#[test]
fn logic_gate_truth_table() {
    let cases: [(Class, &[Class], Class); 6] =
        [(B, &[], B), (M, &[], M), (B, &[B], B), (B, &[M], M), (M, &[B], M), (B, &[B, M], M)];
    for (bytecode, native, want) in cases {
        assert_eq!(combine_logic(bytecode, native), want, "{bytecode} {native:?}");
    }
}

fn all_vectors(len: usize) -> Vec<Vec<Class>> {
    (0..1u32 << len).map(|bits| (0..len).map(|i| if bits >> i & 1 == 1 { M } else { B }).collect()).collect()
}

#[test]
fn flipping_any_input_to_malware_never_clears_an_app() {
    for k in 0..=3 {
        for bytecode in [B, M] {
            for native in all_vectors(k) {
                let before = combine_logic(bytecode, &native);
                if bytecode == B {
                    assert!(combine_logic(M, &native) >= before);
                }
                for i in 0..k {
                    let mut flipped = native.clone();
                    flipped[i] = M;
                    assert!(combine_logic(bytecode, &flipped) >= before);
                }
            }
        }
    }
}

fn score_pairs(n: usize, seed: u64, label: impl Fn(f64, f64, &mut ChaCha8Rng) -> Class) -> Vec<(f64, f64, Class)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (sb, sn) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            (sb, sn, label(sb, sn, &mut rng))
        })
        .collect()
}

fn weighted_accuracy(train: &[(f64, f64, Class)], test: &[(f64, f64, Class)]) -> f64 {
    let fuser = Fuser::weighted(Some(train_weights(train, 7).unwrap()));
    let hits = test.iter().filter(|(sb, sn, y)| fuser.fuse("app", *sb, &[*sn]).unwrap().final_verdict == *y).count();
    hits as f64 / test.len() as f64
}

#[test]
fn weighted_fusion_learns_a_linear_rule() {
    let rule = |sb: f64, sn: f64, _: &mut ChaCha8Rng| verdict_for(sb + 2.0 * sn);
    let acc = weighted_accuracy(&score_pairs(1000, 1, rule), &score_pairs(1000, 2, rule));
    assert!(acc >= 0.98, "accuracy {acc}");
}

#[test]
fn weighted_fusion_cannot_learn_noise() {
    let coin = |_: f64, _: f64, rng: &mut ChaCha8Rng| if rng.gen() { M } else { B };
    let acc = weighted_accuracy(&score_pairs(1000, 3, coin), &score_pairs(1000, 4, coin));
    assert!((acc - 0.5).abs() <= 0.1, "accuracy {acc}");
}

#[test]
fn verdict_lines_round_trip() {
    let fuser = Fuser::logic_gate();
    let verdicts = vec![fuser.fuse("a", -1.0, &[]).unwrap(), fuser.fuse("b", -0.5, &[0.25, -2.0]).unwrap()];
    assert_eq!(verdicts[1].final_verdict, M);
    assert_eq!(verdicts[1].mode, EnsembleMode::LogicGate);
    let bytes = verdicts_to_jsonl(&verdicts);
    assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 2);
    assert_eq!(verdicts_from_jsonl(&bytes).unwrap(), verdicts);
}

fn network(seed: u64) -> Mlp {
    Mlp::random(&[16, 8, 4, 2], NetworkMode::Default, seed).unwrap()
}

fn point(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..20u64 {
        let net = network(case);
        let x = point(&mut rng);
        let y = if case % 2 == 0 { M } else { B };
        let numeric = central_gradient(|v| attack_loss(&net, v, y).unwrap(), &x, 1e-5);
        let err = max_relative_error(&input_gradient(&net, &x, y).unwrap(), &numeric);
        assert!(err <= 1e-4, "case {case}: {err}");
    }
}

#[test]
fn zero_epsilon_leaves_inputs_untouched() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = network(1);
    let cfg = AttackConfig { epsilon: 0.0 };
    for _ in 0..50 {
        let x = point(&mut rng);
        let out = attack(&net, &x, M, &cfg).unwrap();
        assert_eq!(out.sample.crafted, x);
        assert_eq!(out.adv_verdict, out.clean_verdict);
    }
}

#[test]
fn negative_epsilon_is_rejected() {
    assert!(matches!(attack(&network(0), &[0.0; 16], B, &AttackConfig { epsilon: -0.1 }), Err(Error::Config(_))));
}

#[test]
fn one_step_raises_the_attack_loss_for_small_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = network(2);
    let cfg = AttackConfig { epsilon: 1e-4 };
    for _ in 0..50 {
        let x = point(&mut rng);
        let out = attack(&net, &x, B, &cfg).unwrap();
        assert!(attack_loss(&net, &out.sample.crafted, B).unwrap() >= attack_loss(&net, &x, B).unwrap());
    }
}

#[test]
fn robustness_curve_covers_available_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = network(4);
    let testset: Vec<(Vec<f64>, Class)> = (0..600).map(|i| (point(&mut rng), if i % 2 == 0 { M } else { B })).collect();
    let r = robustness_eval(&net, &testset, &AttackConfig::default(), &[100, 500, 1000]).unwrap();
    assert_eq!(r.curve.iter().map(|p| p.n).collect::<Vec<_>>(), vec![100, 500]);
    let clean = robustness_eval(&net, &testset, &AttackConfig { epsilon: 0.0 }, &[]).unwrap();
    assert_eq!(clean.adversarial, clean.clean);
    assert_eq!(clean.clean, r.clean);
}

proptest! {
    #[test]
    fn perturbation_is_bounded_by_epsilon(
        eps in 0.0f64..1.0,
        x in prop::collection::vec(-5.0f64..5.0, 16),
        g in prop::collection::vec(prop_oneof![Just(0.0), -1.0f64..1.0], 16),
    ) {
        let s = craft(&x, &g, &AttackConfig { epsilon: eps });
        for k in 0..16 {
            prop_assert!(s.perturbation[k].abs() <= eps);
            prop_assert_eq!(s.crafted[k], x[k] + s.perturbation[k]);
            if g[k] == 0.0 {
                prop_assert_eq!(s.perturbation[k], 0.0);
            }
        }
    }
}
