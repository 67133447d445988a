use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grad::backward;
use super::{reconstruction_error, Layer, LossKind, Model, ScalarObjective};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            loss: LossKind::L2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Mean validation L2 error before training, then after each epoch.
    pub val_error: Vec<f64>,
    /// Epoch whose weights were kept (0 = the initial weights).
    pub best_epoch: usize,
}

pub(crate) fn mean_error(model: &Model, data: &[Tensor], loss: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for x in data {
        total += reconstruction_error(x, &model.forward(x)?, loss)?;
    }
    Ok(total / data.len() as f64)
}

/// Minibatch SGD with momentum on the reconstruction loss. The returned model
/// is the one with the lowest validation L2 error seen, so it is never worse
/// than the starting point.
pub fn train(
    model: &Model,
    train_data: &[Tensor],
    val_data: &[Tensor],
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    if train_data.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let val = if val_data.is_empty() { train_data } else { val_data };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = model.clone();
    let mut velocity: Vec<(Vec<f64>, Vec<f64>)> = current
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => (
                vec![0.0; d.weights.len()],
                vec![0.0; d.bias.as_ref().map_or(0, Tensor::len)],
            ),
            Layer::Conv2d(c) => (
                vec![0.0; c.kernels.len()],
                vec![0.0; c.bias.as_ref().map_or(0, Tensor::len)],
            ),
            _ => (Vec::new(), Vec::new()),
        })
        .collect();

    let mut report = TrainReport::default();
    let initial = mean_error(&current, val, LossKind::L2)?;
    report.val_error.push(initial);
    let mut best = (initial, 0usize, current.clone());

    let mut order: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<(Vec<f64>, Vec<f64>)> = velocity
                .iter()
                .map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()]))
                .collect();
            for &i in batch {
                let x = &train_data[i];
                let (xhat, trace) = current.forward_with_trace(x)?;
                epoch_loss += cfg.loss.value(x, &xhat)?;
                let (_, dxhat) = cfg.loss.partials(x, &xhat)?;
                let (_, grads) = backward(&current, &trace, &dxhat, true)?;
                for ((aw, ab), g) in acc.iter_mut().zip(&grads) {
                    aw.iter_mut().zip(&g.weights).for_each(|(a, v)| *a += v);
                    ab.iter_mut().zip(&g.bias).for_each(|(a, v)| *a += v);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for ((layer, (vw, vb)), (gw, gb)) in current
                .layers_mut()
                .iter_mut()
                .zip(velocity.iter_mut())
                .zip(&acc)
            {
                let (w, b) = match layer {
                    Layer::Dense(d) => (d.weights.data_mut(), d.bias.as_mut().map(Tensor::data_mut)),
                    Layer::Conv2d(c) => (c.kernels.data_mut(), c.bias.as_mut().map(Tensor::data_mut)),
                    _ => continue,
                };
                sgd_step(w, vw, gw, scale, cfg);
                if let Some(b) = b {
                    sgd_step(b, vb, gb, scale, cfg);
                }
            }
        }
        let mean_loss = epoch_loss / train_data.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: mean_loss,
            });
        }
        report.train_loss.push(mean_loss);
        let v = mean_error(&current, val, LossKind::L2)?;
        if !v.is_finite() {
            return Err(Error::Divergence { epoch, loss: v });
        }
        report.val_error.push(v);
        if v < best.0 {
            best = (v, epoch, current.clone());
        }
    }
    report.best_epoch = best.1;
    Ok((best.2, report))
}

fn sgd_step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], scale: f64, cfg: &TrainConfig) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = cfg.momentum * *v + g * scale;
        *p -= cfg.learning_rate * *v;
    }
}
