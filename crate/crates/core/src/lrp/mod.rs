//! Relevance propagation from an autoencoder's reconstruction error back to
//! its input features.
//!
//! The reconstruction error `e(x, x̂)` is first split over the output neurons
//! with the loss rules in [`relevance_from_loss`], using the input itself as
//! root point. Each layer then redistributes the relevance it received onto
//! its inputs according to the rule configured for it in [`RuleConfig`].

mod conv;
mod dense;
mod rules;

pub use conv::propagate_conv;
pub use dense::{dense_messages, propagate_dense};
pub use rules::{InputBounds, RuleConfig, RuleKind};

use crate::autonet::{reconstruction_error, Layer, LayerTrace, LossKind, Model};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{upsample_nearest_adjoint, Tensor};

/// Input, reconstruction and root point of one explanation.
#[derive(Debug, Clone)]
pub struct ExplanationContext {
    pub x: Tensor,
    pub xhat: Tensor,
    /// Root point of the loss decomposition; always equal to `x`.
    pub root: Tensor,
    pub loss: LossKind,
    pub error: f64,
    pub m: usize,
}

impl ExplanationContext {
    pub fn new(x: Tensor, xhat: Tensor, loss: LossKind) -> Result<Self> {
        let xhat = xhat.reshape(x.shape())?;
        let error = reconstruction_error(&x, &xhat, loss)?;
        Ok(Self {
            m: x.len(),
            root: x.clone(),
            x,
            xhat,
            loss,
            error,
        })
    }
}

/// Relevance each output neuron receives from the reconstruction error:
/// `(x̃_i − x̂_i)² / m` for L2 and `|x̃_i − x̂_i| / m` for L1. The entries sum to
/// the error itself.
pub fn relevance_from_loss(ctx: &ExplanationContext) -> Result<Tensor> {
    let m = ctx.m as f64;
    let loss = ctx.loss;
    ctx.root.zip_map(&ctx.xhat, |r, xh| loss.term(r, xh) / m)
}

/// ReLU layers pass relevance through unchanged.
pub fn propagate_relu(relevance_out: &Tensor) -> Tensor {
    relevance_out.clone()
}

/// Each source cell of a nearest-neighbour upsampling collects the relevance
/// of every output cell copied from it.
pub fn propagate_upsample(relevance_out: &Tensor, factor: f64) -> Result<Tensor> {
    upsample_nearest_adjoint(relevance_out, factor)
}

/// Relevance at every layer boundary of one explanation.
#[derive(Debug, Clone)]
pub struct RelevanceMap {
    /// `layers[0]` is the input relevance, `layers[L]` the output-layer
    /// relevance received from the loss.
    pub layers: Vec<Tensor>,
    /// Relevance at the loss layer, i.e. the reconstruction error.
    pub loss_relevance: f64,
}

impl RelevanceMap {
    pub fn input(&self) -> &Tensor {
        &self.layers[0]
    }

    pub fn output(&self) -> &Tensor {
        self.layers.last().expect("relevance map is never empty")
    }

    /// Total relevance at each boundary, input first.
    pub fn layer_sums(&self) -> Vec<f64> {
        self.layers.iter().map(Tensor::sum).collect()
    }
}

/// Propagates `relevance` (at the output of layer `index`) to its input.
pub fn propagate_layer(
    index: usize,
    layer: &Layer,
    relevance: &Tensor,
    trace: &LayerTrace,
    cfg: &RuleConfig,
) -> Result<Tensor> {
    let a = trace.input_of(index);
    let rule = cfg.rule_for(index, layer)?;
    let r = match layer {
        Layer::Dense(d) => propagate_dense(relevance, &a.flatten(), d, rule, cfg)?.reshape(a.shape())?,
        Layer::Conv2d(c) => propagate_conv(relevance, a, c, rule, cfg)?,
        Layer::Relu => propagate_relu(relevance),
        Layer::Upsample { factor } => propagate_upsample(relevance, *factor)?,
    };
    if !r.is_finite() {
        return Err(Error::Degenerate(format!(
            "non-finite relevance produced at layer {index} ({})",
            layer.name()
        )));
    }
    Ok(r)
}

/// Explains `e(x, model(x))` by propagating it back to the input.
pub fn explain(model: &Model, x: &Tensor, loss: LossKind, cfg: &RuleConfig) -> Result<RelevanceMap> {
    cfg.validate()?;
    let (xhat, trace) = model.forward_with_trace(x)?;
    explain_traced(model, &trace, ExplanationContext::new(x.clone(), xhat, loss)?, cfg)
}

/// [`explain`] on an existing forward pass.
pub fn explain_traced(
    model: &Model,
    trace: &LayerTrace,
    ctx: ExplanationContext,
    cfg: &RuleConfig,
) -> Result<RelevanceMap> {
    let layers = model.layers();
    if trace.boundaries.len() != layers.len() + 1 {
        return dim_err("trace does not belong to this model");
    }
    let top = relevance_from_loss(&ctx)?.reshape(trace.output().shape())?;
    let mut out = vec![top];
    for (l, layer) in layers.iter().enumerate().rev() {
        let next = propagate_layer(l, layer, out.last().unwrap(), trace, cfg)?;
        out.push(next);
    }
    out.reverse();
    Ok(RelevanceMap {
        layers: out,
        loss_relevance: ctx.error,
    })
}
