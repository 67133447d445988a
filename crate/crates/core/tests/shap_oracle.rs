//! Kernel SHAP against exact Shapley values computed by subset enumeration.

use lrpae_core::baselines::{kernel_shap_explain, ShapConfig};
use lrpae_core::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Exact Shapley values of the game `v(S) = E_b f(x_S, b_rest)`.
fn exact_shapley(f: &dyn Fn(&[f64]) -> f64, x: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let m = x.len();
    let value = |set: usize| -> f64 {
        background
            .iter()
            .map(|b| {
                let z: Vec<f64> = (0..m).map(|i| if set >> i & 1 == 1 { x[i] } else { b[i] }).collect();
                f(&z)
            })
            .sum::<f64>()
            / background.len() as f64
    };
    let values: Vec<f64> = (0..1usize << m).map(value).collect();
    (0..m)
        .map(|i| {
            (0..1usize << m)
                .filter(|s| s >> i & 1 == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    let w = factorial(k) * factorial(m - k - 1) / factorial(m);
                    w * (values[s | 1 << i] - values[s])
                })
                .sum()
        })
        .collect()
}

fn setup(m: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let bg = (0..5).map(|_| (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    (x, bg)
}

fn run(f: &dyn Fn(&[f64]) -> f64, x: &[f64], bg: &[Vec<f64>]) -> (Vec<f64>, f64, f64) {
    let cfg = ShapConfig::new(bg.iter().map(|b| Tensor::from_vec(b.clone())).collect(), 1000, 0);
    let score = |t: &Tensor| -> Result<f64> { Ok(f(t.data())) };
    let e = kernel_shap_explain(score, &Tensor::from_vec(x.to_vec()), &cfg).unwrap();
    (e.values.into_data(), e.base_value, e.full_value)
}

#[test]
fn additive_scores_match_exact_shapley() {
    for m in [2usize, 3, 5, 8, 10] {
        let (x, bg) = setup(m, m as u64);
        let coef: Vec<f64> = (0..m).map(|i| 0.3 + 0.2 * i as f64).collect();
        let f = |z: &[f64]| z.iter().zip(&coef).map(|(v, c)| c * (3.0 * v).sin() + v * v).sum::<f64>();
        let (phi, base, full) = run(&f, &x, &bg);
        let exact = exact_shapley(&f, &x, &bg);
        for i in 0..m {
            // closed form for separable games: g_i(x_i) − E_b g_i(b_i)
            let g = |v: f64| coef[i] * (3.0 * v).sin() + v * v;
            let closed = g(x[i]) - bg.iter().map(|b| g(b[i])).sum::<f64>() / bg.len() as f64;
            assert!((phi[i] - exact[i]).abs() <= 1e-6, "m={m} i={i}");
            assert!((phi[i] - closed).abs() <= 1e-6, "m={m} i={i}");
        }
        assert!((base + phi.iter().sum::<f64>() - full).abs() <= 1e-6);
    }
}

#[test]
fn interacting_scores_match_exact_shapley() {
    let (x, bg) = setup(6, 42);
    let f = |z: &[f64]| z[0] * z[1] + (z[2] - z[3]).powi(2) + z[4] * z[5] * z[0];
    let (phi, base, full) = run(&f, &x, &bg);
    let exact = exact_shapley(&f, &x, &bg);
    for (p, e) in phi.iter().zip(&exact) {
        assert!((p - e).abs() <= 1e-6);
    }
    assert!((base + phi.iter().sum::<f64>() - full).abs() <= 1e-6);
}
