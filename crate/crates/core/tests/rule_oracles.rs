//! Relevance rules checked against explicit dense-matrix oracles and
//! conservation laws.

use lrpae_core::autonet::{mlp_autoencoder, Conv2d, Dense, Layer, LossKind, Model};
use lrpae_core::lrp::{explain, propagate_conv, propagate_dense, RuleConfig, RuleKind};
use lrpae_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unrolls a convolution into its `out × in` matrix.
fn toeplitz(k: &Tensor, in_shape: [usize; 3], stride: usize, padding: usize) -> (Vec<f64>, [usize; 3]) {
    let [co, ci, kh, kw] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
    let [_, h, w] = in_shape;
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let n_in = ci * h * w;
    let n_out = co * oh * ow;
    let mut m = vec![0.0; n_out * n_in];
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (o * oh + oy) * ow + ox;
                for c in 0..ci {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let col = (c * h + iy as usize) * w + ix as usize;
                            m[row * n_in + col] += k.data()[((o * ci + c) * kh + ky) * kw + kx];
                        }
                    }
                }
            }
        }
    }
    (m, [co, oh, ow])
}

/// zplus rule evaluated edge by edge on an explicit matrix, with an optional
/// per-row bias treated as an input of activation 1.
fn zplus_oracle(m: &[f64], n_out: usize, a: &[f64], bias: &[f64], r_out: &[f64]) -> Vec<f64> {
    let n_in = a.len();
    let mut r = vec![0.0; n_in];
    for k in 0..n_out {
        let z: Vec<f64> = (0..n_in).map(|i| a[i] * m[k * n_in + i].max(0.0)).collect();
        let den: f64 = z.iter().sum::<f64>() + bias[k].max(0.0);
        if r_out[k] == 0.0 {
            continue;
        }
        let den = if den.abs() < 1e-9 { 1e-9 } else { den };
        for i in 0..n_in {
            r[i] += r_out[k] * z[i] / den;
        }
    }
    r
}

#[test]
fn conv_zplus_matches_unrolled_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let geometries = [(1, 5, 3, 1, 0), (2, 6, 3, 2, 1), (3, 7, 2, 1, 0), (1, 8, 5, 2, 2)];
    for instance in 0..20 {
        let (ci, size, k, stride, padding) = geometries[instance % geometries.len()];
        let co = 1 + instance % 3;
        let kernels = Tensor::new(
            &[co, ci, k, k],
            (0..co * ci * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let with_bias = instance % 2 == 1;
        let bias: Vec<f64> = (0..co).map(|_| if with_bias { rng.gen_range(-0.5..0.5) } else { 0.0 }).collect();
        let layer = Conv2d::new(
            kernels.clone(),
            with_bias.then(|| Tensor::from_vec(bias.clone())),
            stride,
            padding,
        )
        .unwrap();
        let a = Tensor::new(&[ci, size, size], (0..ci * size * size).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let (m, out_shape) = toeplitz(&kernels, [ci, size, size], stride, padding);
        let plane = out_shape[1] * out_shape[2];
        let n_out = out_shape.iter().product::<usize>();
        let r_out: Vec<f64> = (0..n_out).map(|_| rng.gen_range(0.0..1.0)).collect();
        let row_bias: Vec<f64> = (0..n_out).map(|row| bias[row / plane]).collect();

        let want = zplus_oracle(&m, n_out, a.data(), &row_bias, &r_out);
        let got = propagate_conv(
            &Tensor::new(&out_shape, r_out).unwrap(),
            &a,
            &layer,
            RuleKind::ZPlus,
            &RuleConfig::default(),
        )
        .unwrap();
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9, "instance {instance}: {g} vs {w}");
        }
    }
}

#[test]
fn conv_rules_agree_with_dense_rules_on_unrolled_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kernels = Tensor::new(&[2, 1, 3, 3], (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let conv = Conv2d::new(kernels.clone(), None, 1, 0).unwrap();
    let (m, out_shape) = toeplitz(&kernels, [1, 5, 5], 1, 0);
    let n_out: usize = out_shape.iter().product();
    let dense = Dense::new(Tensor::new(&[n_out, 25], m).unwrap(), None).unwrap();
    let a = Tensor::new(&[1, 5, 5], (0..25).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let r = Tensor::new(&out_shape, (0..n_out).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let cfg = RuleConfig::default().with_bounds(0.0, 1.0);
    for rule in [RuleKind::Basic, RuleKind::Epsilon, RuleKind::Gamma, RuleKind::ZPlus, RuleKind::WSquare, RuleKind::ZBox] {
        let c = propagate_conv(&r, &a, &conv, rule, &cfg).unwrap();
        let d = propagate_dense(&r.flatten(), &a.flatten(), &dense, rule, &cfg).unwrap();
        assert!(c.flatten().max_abs_diff(&d) <= 1e-9, "{rule}");
    }
}

fn random_mlp(seed: u64, widths: &[usize]) -> Model {
    mlp_autoencoder(widths, false, false, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bias_free_chains_conserve(seed in 0u64..10_000, rule_idx in 0usize..5) {
        let rules = [RuleKind::Basic, RuleKind::Gamma, RuleKind::ZPlus, RuleKind::WSquare, RuleKind::ZBox];
        let model = random_mlp(seed, &[6, 5, 3, 5, 6]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x = Tensor::from_vec((0..6).map(|_| rng.gen_range(0.05..1.0)).collect());
        let cfg = RuleConfig::uniform(&model, rules[rule_idx], RuleKind::ZPlus).with_bounds(0.0, 1.0);
        let map = explain(&model, &x, LossKind::L2, &cfg).unwrap();
        let e = map.loss_relevance;
        prop_assume!(e > 1e-12);
        let sums = map.layer_sums();
        // Units without any positive contribution drop their relevance under
        // zplus, so below the output only an upper bound holds in general.
        let top = sums.last().copied().unwrap();
        prop_assert!(((top - e) / e).abs() <= 1e-12);
        let input = sums[0];
        prop_assert!(input <= e * (1.0 + 1e-9));
        if rules[rule_idx] == RuleKind::WSquare || rules[rule_idx] == RuleKind::ZBox {
            prop_assert!(input >= 0.0);
        }
    }

    #[test]
    fn zplus_is_non_negative_and_scale_equivariant(seed in 0u64..10_000, lambda in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Tensor::new(&[4, 6], (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let layer = Dense::new(w, None).unwrap();
        let a = Tensor::from_vec((0..6).map(|_| rng.gen_range(0.0..1.0)).collect());
        let r = Tensor::from_vec((0..4).map(|_| rng.gen_range(0.0..1.0)).collect());
        let cfg = RuleConfig::default();
        let base = propagate_dense(&r, &a, &layer, RuleKind::ZPlus, &cfg).unwrap();
        prop_assert!(base.data().iter().all(|&v| v >= 0.0));
        let scaled = propagate_dense(&r.scale(lambda), &a, &layer, RuleKind::ZPlus, &cfg).unwrap();
        for (s, b) in scaled.data().iter().zip(base.data()) {
            prop_assert!((s - lambda * b).abs() <= 1e-9 * (1.0 + (lambda * b).abs()));
        }
    }

    #[test]
    fn bias_relevance_is_absorbed(seed in 0u64..10_000) {
        let model = mlp_autoencoder(&[5, 4, 5], true, false, seed).unwrap();
        let mut layers = model.layers().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut layers {
            if let Layer::Dense(d) = l {
                let n = d.bias.as_ref().unwrap().len();
                d.bias = Some(Tensor::from_vec((0..n).map(|_| rng.gen_range(-0.3..0.3)).collect()));
            }
        }
        let model = Model::new(layers, vec![5]).unwrap();
        let x = Tensor::from_vec((0..5).map(|_| rng.gen_range(0.0..1.0)).collect());
        let cfg = RuleConfig::uniform(&model, RuleKind::ZPlus, RuleKind::ZPlus);
        let map = explain(&model, &x, LossKind::L1, &cfg).unwrap();
        prop_assert!(map.input().sum() <= map.loss_relevance * (1.0 + 1e-12));
    }
}

#[test]
fn bias_free_conservation_is_tight_on_active_networks() {
    // Positive weights keep every unit active, so nothing can be dropped.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut layers = Vec::new();
    for (i, (inp, out)) in [(6, 4), (4, 6)].into_iter().enumerate() {
        let w = Tensor::new(&[out, inp], (0..out * inp).map(|_| rng.gen_range(0.05..0.6)).collect()).unwrap();
        layers.push(Layer::Dense(Dense::new(w, None).unwrap()));
        if i == 0 {
            layers.push(Layer::Relu);
        }
    }
    let model = Model::new(layers, vec![6]).unwrap();
    for rule in [RuleKind::Basic, RuleKind::Gamma, RuleKind::ZPlus, RuleKind::WSquare, RuleKind::ZBox] {
        let cfg = RuleConfig::uniform(&model, rule, RuleKind::ZPlus).with_bounds(0.0, 1.0);
        let x = Tensor::from_vec((0..6).map(|_| rng.gen_range(0.1..1.0)).collect());
        let map = explain(&model, &x, LossKind::L2, &cfg).unwrap();
        let e = map.loss_relevance;
        for s in map.layer_sums() {
            assert!(((s - e) / e).abs() <= 1e-9, "{rule}: {s} vs {e}");
        }
    }
}
