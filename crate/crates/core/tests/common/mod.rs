//! Shared test helpers: the central-finite-difference gradient oracle.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relage_core::numerics::{Graph, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// How inputs are drawn, so piecewise-linear ops are probed away from kinks.
#[derive(Clone, Copy)]
pub enum Draw {
    /// Standard normal.
    Normal,
    /// Magnitude in [0.1, 1.1] with random sign; keeps ReLU/abs off zero.
    AwayFromZero,
    /// Distinct values per tensor (well-separated); keeps max-pool argmax
    /// stable under the finite-difference step.
    Distinct,
}

pub fn draw_values(rng: &mut ChaCha8Rng, n: usize, how: Draw) -> Vec<f64> {
    match how {
        Draw::Normal => (0..n).map(|_| rng.gen_range(-1.0..1.0) * 1.5).collect(),
        Draw::AwayFromZero => (0..n)
            .map(|_| {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.gen_range(0.1..1.1)
            })
            .collect(),
        Draw::Distinct => {
            let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                v.swap(i, j);
            }
            for x in &mut v {
                *x += rng.gen_range(-0.01..0.01);
            }
            v
        }
    }
}

/// Maximum relative error between analytic gradients and central finite
/// differences, over every coordinate of every differentiable input.
///
/// `build` must deterministically construct a scalar loss from leaves created
/// with the provided values.
pub fn finite_diff_max_rel_err(
    shapes: &[(&[usize], Draw)],
    seed: u64,
    build: impl Fn(&mut Graph<f64>, &[Tensor]) -> Tensor,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<Vec<f64>> = shapes
        .iter()
        .map(|(s, how)| draw_values(&mut rng, s.iter().product(), *how))
        .collect();

    let eval = |values: &[Vec<f64>]| -> (f64, Vec<Option<Vec<f64>>>) {
        let mut g: Graph<f64> = Graph::new();
        let leaves: Vec<Tensor> = shapes
            .iter()
            .zip(values)
            .map(|((s, _), v)| g.leaf(s, v.clone(), true).unwrap())
            .collect();
        let loss = build(&mut g, &leaves);
        g.backward(loss).unwrap();
        let grads = leaves
            .iter()
            .map(|&l| g.grad(l).map(|x| x.to_vec()))
            .collect();
        (g.scalar(loss), grads)
    };

    let (_, analytic) = eval(&values);
    let mut max_rel = 0.0f64;
    for (i, grad) in analytic.iter().enumerate() {
        let Some(grad) = grad else { continue };
        for j in 0..values[i].len() {
            let mut plus = values.clone();
            plus[i][j] += FD_STEP;
            let mut minus = values.clone();
            minus[i][j] -= FD_STEP;
            let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * FD_STEP);
            let a = grad[j];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    max_rel
}
