use super::rules::{RuleConfig, RuleKind};
use crate::autonet::Dense;
use crate::error::{dim_err, Error, Result};
use crate::tensor::{sign, stabilize, Tensor};

/// Weight transform of the activation-based rules.
pub(crate) fn transform_weight(rule: RuleKind, w: f64, gamma: f64) -> f64 {
    match rule {
        RuleKind::Gamma => w + gamma * w.max(0.0),
        RuleKind::ZPlus => w.max(0.0),
        _ => w,
    }
}

/// Stabilized denominator of every rule; the epsilon rule adds `ε·sign(z)`
/// on top.
pub(crate) fn denominator(rule: RuleKind, z: f64, epsilon: f64) -> f64 {
    match rule {
        RuleKind::Epsilon => stabilize(z + epsilon * sign(z)),
        _ => stabilize(z),
    }
}

/// Contributions `z_ik` (row-major `out × in`) and the per-output bias term.
fn contributions(
    a: &[f64],
    layer: &Dense,
    rule: RuleKind,
    cfg: &RuleConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (out, inp) = layer.units();
    let w = layer.weights.data();
    let mut z = vec![0.0; out * inp];
    let mut bias = vec![0.0; out];
    match rule {
        RuleKind::Basic | RuleKind::Epsilon | RuleKind::Gamma | RuleKind::ZPlus => {
            for k in 0..out {
                for i in 0..inp {
                    z[k * inp + i] = a[i] * transform_weight(rule, w[k * inp + i], cfg.gamma);
                }
            }
            if let Some(b) = &layer.bias {
                for (bk, &bv) in bias.iter_mut().zip(b.data()) {
                    *bk = transform_weight(rule, bv, cfg.gamma);
                }
            }
        }
        RuleKind::WSquare => {
            for (zv, &wv) in z.iter_mut().zip(w) {
                *zv = wv * wv;
            }
        }
        RuleKind::ZBox => {
            let bounds = cfg
                .input_bounds
                .as_ref()
                .ok_or_else(|| Error::Config("z-box rule needs input bounds".into()))?;
            let (low, high) = bounds.resolve(inp)?;
            for k in 0..out {
                for i in 0..inp {
                    let wv = w[k * inp + i];
                    z[k * inp + i] = a[i] * wv - low[i] * wv.max(0.0) - high[i] * wv.min(0.0);
                }
            }
        }
        RuleKind::Passthrough => {
            return Err(Error::Config("passthrough is not a dense-layer rule".into()))
        }
    }
    Ok((z, bias))
}

/// Relevance messages `𝓡_{i←k}` from every output unit `k` to every input
/// unit `i`, as a row-major `out × in` tensor. Summing a row gives back
/// `R_k` on bias-free layers; summing a column gives `R_i`.
pub fn dense_messages(
    relevance_out: &Tensor,
    activation: &Tensor,
    layer: &Dense,
    rule: RuleKind,
    cfg: &RuleConfig,
) -> Result<Tensor> {
    let (out, inp) = layer.units();
    if relevance_out.len() != out {
        return dim_err(format!(
            "dense relevance: layer has {out} outputs, relevance has {}",
            relevance_out.len()
        ));
    }
    if activation.len() != inp {
        return dim_err(format!(
            "dense relevance: layer has {inp} inputs, activation has {}",
            activation.len()
        ));
    }
    let (z, bias) = contributions(activation.data(), layer, rule, cfg)?;
    let mut msg = vec![0.0; out * inp];
    for k in 0..out {
        let row = &z[k * inp..(k + 1) * inp];
        let rk = relevance_out.data()[k];
        if rk == 0.0 {
            continue;
        }
        let total: f64 = row.iter().sum::<f64>() + bias[k];
        let dst = &mut msg[k * inp..(k + 1) * inp];
        if cfg.strict_eq5_denominator {
            for (m, &zik) in dst.iter_mut().zip(row) {
                *m = rk * zik / denominator(rule, total - zik, cfg.epsilon);
            }
        } else {
            let c = rk / denominator(rule, total, cfg.epsilon);
            for (m, &zik) in dst.iter_mut().zip(row) {
                *m = zik * c;
            }
        }
    }
    Tensor::new(&[out, inp], msg)
}

/// Input relevance of a dense layer, shaped like `activation`.
pub fn propagate_dense(
    relevance_out: &Tensor,
    activation: &Tensor,
    layer: &Dense,
    rule: RuleKind,
    cfg: &RuleConfig,
) -> Result<Tensor> {
    let msg = dense_messages(relevance_out, activation, layer, rule, cfg)?;
    let (out, inp) = layer.units();
    let mut r = vec![0.0; inp];
    for k in 0..out {
        for (ri, m) in r.iter_mut().zip(&msg.data()[k * inp..(k + 1) * inp]) {
            *ri += m;
        }
    }
    Tensor::new(activation.shape(), r)
}
