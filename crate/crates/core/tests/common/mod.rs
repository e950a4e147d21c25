#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stockout::nnet::{Architecture, LossKind, LossSpec, Model};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Entries smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

pub struct GradCheck {
    pub max_rel_error: f64,
    pub parameters: usize,
}

/// Random network with hidden sizes up to [8, 6] and input width up to 20,
/// compared against central finite differences on a four-sample batch.
pub fn gradient_check(kind: LossKind, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(0..=2usize);
    let hidden: Vec<usize> = [8, 6][..depth]
        .iter()
        .map(|&m| rng.random_range(1..=m))
        .collect();
    let d = rng.random_range(1..=20);
    let groups = rng.random_range(1..=3);
    let arch = Architecture::new(d, &hidden, groups);
    let mut model = Model::init(&arch, seed).unwrap();
    for layer in &mut model.layers {
        layer.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let spec = LossSpec {
        kind,
        c_p: rng.random_range(0.3..15.0),
        c_n: rng.random_range(0.3..15.0),
    };
    let rows = 4;
    // Resample inputs until no hinge margin sits on its kink.
    let (x, y) = loop {
        let x = Array2::from_shape_simple_fn((rows, d), || rng.random_range(-2.0..2.0));
        let y = Array2::from_shape_simple_fn((rows, groups), || rng.random_range(0..2u8));
        let z = model.logits(x.view()).unwrap();
        let clear = (0..rows).all(|r| {
            (0..groups).all(|g| {
                let s = z[[r, 2 * g + 1]] - z[[r, 2 * g]];
                let sign = 2.0 * f64::from(y[[r, g]]) - 1.0;
                (1.0 - sign * s).abs() > 1e-3
            })
        });
        if kind != LossKind::Hinge || clear {
            break (x, y);
        }
    };
    let (_, grads) = model.backward(x.view(), y.view(), &spec).unwrap();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for li in 0..model.layers.len() {
        let (rows_w, cols_w) = model.layers[li].w.dim();
        let mut coords: Vec<(bool, usize, usize)> = Vec::new();
        for i in 0..rows_w {
            for j in 0..cols_w {
                coords.push((true, i, j));
            }
        }
        for j in 0..cols_w {
            coords.push((false, 0, j));
        }
        for (is_w, i, j) in coords {
            let analytic = if is_w {
                grads.layers[li].w[[i, j]]
            } else {
                grads.layers[li].b[j]
            };
            let probe = |delta: f64| {
                let mut m = model.clone();
                if is_w {
                    m.layers[li].w[[i, j]] += delta;
                } else {
                    m.layers[li].b[j] += delta;
                }
                m.loss(x.view(), y.view(), &spec).unwrap()
            };
            let numeric = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
            let scale = analytic.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max((analytic - numeric).abs() / scale);
            count += 1;
        }
    }
    GradCheck {
        max_rel_error: worst,
        parameters: count,
    }
}
