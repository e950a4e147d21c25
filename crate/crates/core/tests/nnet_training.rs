mod common;

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stockout::nnet::{train, Activation, Architecture, LossKind, LossSpec, Model, TrainConfig};

const KINDS: [LossKind; 3] = [LossKind::Softmax, LossKind::Hinge, LossKind::Euclidean];

#[test]
fn analytic_gradients_match_finite_differences() {
    for kind in KINDS {
        for seed in 0..20 {
            let check = common::gradient_check(kind, seed);
            assert!(
                check.max_rel_error < 1e-4,
                "{kind:?} seed {seed}: relative error {}",
                check.max_rel_error
            );
        }
    }
}

#[test]
fn gradients_hold_for_other_activations() {
    let x = Array2::from_shape_fn((3, 4), |(r, c)| (r as f64 - 1.0) * 0.7 + c as f64 * 0.3);
    let y = Array2::from_shape_fn((3, 2), |(r, g)| ((r + g) % 2) as u8);
    for activation in [Activation::Tanh, Activation::InnerProduct] {
        let mut arch = Architecture::new(4, &[5, 3], 2);
        arch.activation = activation;
        let model = Model::init(&arch, 5).unwrap();
        let spec = LossSpec {
            kind: LossKind::Softmax,
            c_p: 3.0,
            c_n: 0.5,
        };
        let (_, grads) = model.backward(x.view(), y.view(), &spec).unwrap();
        for li in 0..model.layers.len() {
            for ((i, j), &g) in grads.layers[li].w.indexed_iter() {
                let at = |d: f64| {
                    let mut m = model.clone();
                    m.layers[li].w[[i, j]] += d;
                    m.loss(x.view(), y.view(), &spec).unwrap()
                };
                let n = (at(1e-5) - at(-1e-5)) / 2e-5;
                assert!(
                    (g - n).abs() <= 1e-4 * g.abs().max(n.abs()).max(1e-6),
                    "{activation:?}"
                );
            }
        }
    }
}

fn separable(seed: u64, rows: usize) -> (Array2<f64>, Array2<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((rows, 2));
    let mut y = Array2::zeros((rows, 1));
    for r in 0..rows {
        let label = rng.random_range(0..2u8);
        let side = if label == 1 { 1.0 } else { -1.0 };
        x[[r, 0]] = side * rng.random_range(0.5..2.0);
        x[[r, 1]] = rng.random_range(-2.0..2.0);
        y[[r, 0]] = label;
    }
    (x, y)
}

#[test]
fn separable_toy_set_is_learned_within_three_epochs() {
    let (x, y) = separable(3, 200);
    let mut model = Model::init(&Architecture::new(2, &[], 1), 1).unwrap();
    let spec = LossSpec::unweighted(LossKind::Softmax);
    let cfg = TrainConfig {
        learning_rate: 0.5,
        momentum: 0.5,
        weight_decay: 0.0,
        batch_size: 10,
        max_epochs: 3,
        tol: 1e-6,
        seed: 2,
    };
    let out = train(&mut model, x.view(), y.view(), &spec, &cfg).unwrap();
    assert!(out.history.len() <= 3);
    let pred = model.predict(x.view(), &spec).unwrap();
    assert_eq!(pred, y);
}

#[test]
fn training_is_bit_reproducible() {
    let (x, y) = separable(8, 120);
    let arch = Architecture::new(2, &[6, 4], 1);
    let spec = LossSpec {
        kind: LossKind::Hinge,
        c_p: 2.0,
        c_n: 1.0,
    };
    let cfg = TrainConfig {
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = Model::init(&arch, 4).unwrap();
        let h = train(&mut m, x.view(), y.view(), &spec, &cfg).unwrap();
        (m, h)
    };
    assert_eq!(run(), run());
}

#[test]
fn divergence_is_reported() {
    let (x, y) = separable(1, 50);
    let x = x.mapv(|v| v * 1e6);
    let mut m = Model::init(&Architecture::new(2, &[], 1), 1).unwrap();
    let spec = LossSpec::unweighted(LossKind::Euclidean);
    let cfg = TrainConfig {
        learning_rate: 10.0,
        weight_decay: 0.0,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let err = train(&mut m, x.view(), y.view(), &spec, &cfg).unwrap_err();
    assert!(
        matches!(err, stockout::nnet::NnetError::Diverged { .. }),
        "{err}"
    );
}

#[test]
fn equal_weights_match_unweighted_loss() {
    let (x, y) = separable(5, 30);
    let m = Model::init(&Architecture::new(2, &[3], 1), 7).unwrap();
    for kind in KINDS {
        let a = m
            .loss(x.view(), y.view(), &LossSpec::unweighted(kind))
            .unwrap();
        let b = m
            .loss(
                x.view(),
                y.view(),
                &LossSpec {
                    kind,
                    c_p: 1.0,
                    c_n: 1.0,
                },
            )
            .unwrap();
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Scaling both class weights by a power of two and the learning rate
    /// by its inverse leaves every step bit-identical.
    #[test]
    fn weight_scale_and_learning_rate_cancel(
        exp in -3i32..4,
        kind_idx in 0usize..3,
        seed in 0u64..1000,
        c_p in 0.3f64..15.0,
        c_n in 0.3f64..15.0,
    ) {
        let beta = 2f64.powi(exp);
        let kind = KINDS[kind_idx];
        let (x, y) = separable(seed, 40);
        let arch = Architecture::new(2, &[4], 1);
        let base = LossSpec { kind, c_p, c_n };
        let scaled = LossSpec { kind, c_p: beta * c_p, c_n: beta * c_n };
        let l0 = Model::init(&arch, seed).unwrap().loss(x.view(), y.view(), &base).unwrap();
        let l1 = Model::init(&arch, seed).unwrap().loss(x.view(), y.view(), &scaled).unwrap();
        prop_assert_eq!(l1, beta * l0);

        let cfg = TrainConfig { learning_rate: 0.01, weight_decay: 0.0, momentum: 0.3, max_epochs: 2, seed, ..TrainConfig::default() };
        let mut a = Model::init(&arch, seed).unwrap();
        let mut b = a.clone();
        train(&mut a, x.view(), y.view(), &base, &cfg).unwrap();
        let cfg_b = TrainConfig { learning_rate: cfg.learning_rate / beta, ..cfg.clone() };
        train(&mut b, x.view(), y.view(), &scaled, &cfg_b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn group_probabilities_sum_to_one(seed in 0u64..500, scale in 0.1f64..50.0) {
        let m = Model::init(&Architecture::new(3, &[5], 4), seed).unwrap();
        let x = ndarray::arr1(&[scale, -scale, 0.5 * scale]);
        let (_, p) = m.forward(x.view()).unwrap();
        for g in p {
            prop_assert!((g[0] + g[1] - 1.0).abs() < 1e-12);
            prop_assert!(g[0] > 0.0 && g[0] < 1.0);
        }
    }

    #[test]
    fn predict_is_pure(seed in 0u64..500) {
        let (x, _) = separable(seed, 10);
        let m = Model::init(&Architecture::new(2, &[3], 2), seed).unwrap();
        let spec = LossSpec::unweighted(LossKind::Softmax);
        let first = m.predict(x.view(), &spec).unwrap();
        let rows: Vec<_> = x.axis_iter(Axis(0)).map(|r| m.predict(r.insert_axis(Axis(0)), &spec).unwrap()).collect();
        for (i, r) in rows.iter().enumerate() {
            prop_assert_eq!(r.row(0), first.row(i));
        }
        prop_assert_eq!(m.predict(x.view(), &spec).unwrap(), first);
    }
}
