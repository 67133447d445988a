use super::{Layer, LayerTrace, Model, ScalarObjective};
use crate::error::{dim_err, Result};
use crate::tensor::{
    conv2d_kernel_grad_raw, conv2d_scatter_raw, matvec_t, upsample_nearest_adjoint, Tensor,
};

/// Parameter gradient of one layer; empty for parameter-free layers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Backpropagates `grad_out` (gradient with respect to the model output)
/// through a recorded forward pass. Returns the input gradient and, when
/// `with_params` is set, one [`LayerGrad`] per layer.
pub fn backward(
    model: &Model,
    trace: &LayerTrace,
    grad_out: &Tensor,
    with_params: bool,
) -> Result<(Tensor, Vec<LayerGrad>)> {
    let layers = model.layers();
    if trace.boundaries.len() != layers.len() + 1 {
        return dim_err("trace does not belong to this model");
    }
    if grad_out.len() != trace.output().len() {
        return dim_err(format!(
            "output gradient has {} entries, model output has {}",
            grad_out.len(),
            trace.output().len()
        ));
    }
    let mut grads = vec![LayerGrad::default(); if with_params { layers.len() } else { 0 }];
    let mut g = grad_out.data().to_vec();
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = trace.input_of(l);
        g = match layer {
            Layer::Dense(d) => {
                let (out, inp) = d.units();
                if with_params {
                    let mut gw = vec![0.0; out * inp];
                    for (r, &gv) in g.iter().enumerate() {
                        for (w, &a) in gw[r * inp..(r + 1) * inp].iter_mut().zip(input.data()) {
                            *w = gv * a;
                        }
                    }
                    grads[l].weights = gw;
                    if d.bias.is_some() {
                        grads[l].bias = g.clone();
                    }
                }
                matvec_t(d.weights.data(), out, inp, &g)
            }
            Layer::Conv2d(c) => {
                let geo = c.geometry(input.shape())?;
                if with_params {
                    grads[l].weights = conv2d_kernel_grad_raw(&geo, input.data(), &g);
                    if c.bias.is_some() {
                        let plane = geo.out_h * geo.out_w;
                        grads[l].bias = g.chunks(plane).map(|p| p.iter().sum()).collect();
                    }
                }
                conv2d_scatter_raw(&geo, &g, c.kernels.data()).into_data()
            }
            Layer::Relu => g
                .iter()
                .zip(input.data())
                .map(|(&gv, &a)| if a > 0.0 { gv } else { 0.0 })
                .collect(),
            Layer::Upsample { factor } => {
                let out_shape = trace.output_of(l).shape();
                let gt = Tensor::new(out_shape, g)?;
                upsample_nearest_adjoint(&gt, *factor)?.into_data()
            }
        };
    }
    Ok((Tensor::new(model.input_shape(), g)?, grads))
}

/// Gradient of `objective(x, model(x))` with respect to `x`, counting both the
/// direct dependence on `x` and the path through the reconstruction.
pub fn grad_wrt_input(model: &Model, x: &Tensor, objective: &dyn ScalarObjective) -> Result<Tensor> {
    let (xhat, trace) = model.forward_with_trace(x)?;
    let (dx, dxhat) = objective.partials(x, &xhat)?;
    let (through, _) = backward(model, &trace, &dxhat, false)?;
    dx.add(&through)
}

#[cfg(test)]
mod tests {
    use super::super::{conv_autoencoder, mlp_autoencoder, Conv2d, Dense, LossKind};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn finite_difference(model: &Model, x: &Tensor, obj: &dyn ScalarObjective, h: f64) -> Tensor {
        let mut out = x.clone();
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fp = obj.value(&xp, &model.forward(&xp).unwrap()).unwrap();
            let fm = obj.value(&xm, &model.forward(&xm).unwrap()).unwrap();
            out.data_mut()[i] = (fp - fm) / (2.0 * h);
        }
        out
    }

    fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
        let num = a.sub(b).unwrap().data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let den = a.data().iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        num / den
    }

    #[test]
    fn identity_model_has_zero_gradient() {
        let id = Model::new(vec![Layer::Dense(Dense::new(Tensor::identity(3), None).unwrap())], vec![3]).unwrap();
        let g = grad_wrt_input(&id, &Tensor::from_vec(vec![0.2, -0.5, 0.9]), &LossKind::L2).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_model_analytic_gradient() {
        let m = 4.0;
        let model = Model::new(
            vec![Layer::Dense(Dense::new(Tensor::identity(4).scale(0.5), None).unwrap())],
            vec![4],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.2, -0.5, 0.9, 1.5]);
        let g = grad_wrt_input(&model, &x, &LossKind::L2).unwrap();
        for (gi, xi) in g.data().iter().zip(x.data()) {
            let want = (1.0 / m) * 2.0 * (0.5 * xi) * 0.5;
            assert!((gi - want).abs() < 1e-15);
        }
    }

    #[test]
    fn mlp_matches_finite_differences() {
        let model = mlp_autoencoder(&[5, 4, 5], true, false, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for loss in [LossKind::L2, LossKind::L1] {
            let x = Tensor::from_vec((0..5).map(|_| rng.gen_range(0.0..1.0)).collect());
            let fd = finite_difference(&model, &x, &loss, 1e-5);
            let g = grad_wrt_input(&model, &x, &loss).unwrap();
            assert!(rel_err(&g, &fd) <= 1e-4, "{loss}: {g:?} vs {fd:?}");
        }
    }

    #[test]
    fn conv_model_matches_finite_differences() {
        let model = conv_autoencoder(true, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::new(&[1, 6, 6], (0..36).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let fd = finite_difference(&model, &x, &LossKind::L2, 1e-5);
        let g = grad_wrt_input(&model, &x, &LossKind::L2).unwrap();
        assert!(rel_err(&g, &fd) <= 1e-4);
    }

    #[test]
    fn param_gradients_match_finite_differences() {
        let model = conv_autoencoder(true, 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::new(&[1, 6, 6], (0..36).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let (xhat, trace) = model.forward_with_trace(&x).unwrap();
        let (_, dxhat) = LossKind::L2.partials(&x, &xhat).unwrap();
        let (_, grads) = backward(&model, &trace, &dxhat, true).unwrap();
        let loss_of = |m: &Model| {
            let xh = m.forward(&x).unwrap();
            // target held fixed: only the reconstruction path matters here
            crate::autonet::reconstruction_error(&x, &xh, LossKind::L2).unwrap()
        };
        let h = 1e-6;
        for (l, layer) in model.layers().iter().enumerate() {
            let Layer::Conv2d(Conv2d { kernels, .. }) = layer else { continue };
            for idx in [0, kernels.len() / 2, kernels.len() - 1] {
                let mut mp = model.clone();
                let mut mm = model.clone();
                if let Layer::Conv2d(c) = &mut mp.layers_mut()[l] {
                    c.kernels.data_mut()[idx] += h;
                }
                if let Layer::Conv2d(c) = &mut mm.layers_mut()[l] {
                    c.kernels.data_mut()[idx] -= h;
                }
                let fd = (loss_of(&mp) - loss_of(&mm)) / (2.0 * h);
                let an = grads[l].weights[idx];
                assert!((fd - an).abs() <= 1e-6 + 1e-4 * an.abs(), "layer {l} idx {idx}: {fd} vs {an}");
            }
        }
    }
}
