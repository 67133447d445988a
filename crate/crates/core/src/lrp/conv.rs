use super::dense::{denominator, transform_weight};
use super::rules::{RuleConfig, RuleKind};
use crate::autonet::Conv2d;
use crate::error::{dim_err, Error, Result};
use crate::tensor::{conv2d_raw, conv2d_scatter_raw, Tensor};

/// Input relevance of a convolutional layer.
///
/// Each rule is the dense rule applied to the convolution's implicit linear
/// map: `s = conv(a, K')`, `c = R ⊘ s`, `R_in = a ⊙ conv_scatter(c, K')`, with
/// the z-box rule adding the bound terms and the squared-weight rule dropping
/// the activations.
pub fn propagate_conv(
    relevance_out: &Tensor,
    activation: &Tensor,
    layer: &Conv2d,
    rule: RuleKind,
    cfg: &RuleConfig,
) -> Result<Tensor> {
    let g = layer.geometry(activation.shape())?;
    if relevance_out.shape() != g.out_shape() {
        return dim_err(format!(
            "conv relevance: expected {:?}, got {:?}",
            g.out_shape(),
            relevance_out.shape()
        ));
    }
    if cfg.strict_eq5_denominator {
        return Err(Error::Config(
            "strict_eq5_denominator is only supported on dense layers".into(),
        ));
    }
    let a = activation.data();
    let k = layer.kernels.data();
    let plane = g.out_h * g.out_w;

    let divide = |s: &Tensor| -> Vec<f64> {
        relevance_out
            .data()
            .iter()
            .zip(s.data())
            .map(|(&r, &z)| if r == 0.0 { 0.0 } else { r / denominator(rule, z, cfg.epsilon) })
            .collect()
    };

    let r_in = match rule {
        RuleKind::Basic | RuleKind::Epsilon | RuleKind::Gamma | RuleKind::ZPlus => {
            let kr: Vec<f64> = k.iter().map(|&w| transform_weight(rule, w, cfg.gamma)).collect();
            let mut s = conv2d_raw(&g, a, &kr);
            if let Some(b) = &layer.bias {
                for (ch, &bv) in b.data().iter().enumerate() {
                    let bt = transform_weight(rule, bv, cfg.gamma);
                    s.data_mut()[ch * plane..(ch + 1) * plane]
                        .iter_mut()
                        .for_each(|v| *v += bt);
                }
            }
            let c = divide(&s);
            let back = conv2d_scatter_raw(&g, &c, &kr);
            back.data().iter().zip(a).map(|(b, a)| a * b).collect()
        }
        RuleKind::WSquare => {
            let ksq: Vec<f64> = k.iter().map(|w| w * w).collect();
            let ones = vec![1.0; a.len()];
            let s = conv2d_raw(&g, &ones, &ksq);
            let c = divide(&s);
            conv2d_scatter_raw(&g, &c, &ksq).into_data()
        }
        RuleKind::ZBox => {
            let bounds = cfg
                .input_bounds
                .as_ref()
                .ok_or_else(|| Error::Config("z-box rule needs input bounds".into()))?;
            let (low, high) = bounds.resolve(a.len())?;
            let kp: Vec<f64> = k.iter().map(|w| w.max(0.0)).collect();
            let kn: Vec<f64> = k.iter().map(|w| w.min(0.0)).collect();
            let s = conv2d_raw(&g, a, k)
                .sub(&conv2d_raw(&g, &low, &kp))?
                .sub(&conv2d_raw(&g, &high, &kn))?;
            let c = divide(&s);
            let ba = conv2d_scatter_raw(&g, &c, k);
            let bp = conv2d_scatter_raw(&g, &c, &kp);
            let bn = conv2d_scatter_raw(&g, &c, &kn);
            (0..a.len())
                .map(|i| a[i] * ba.data()[i] - low[i] * bp.data()[i] - high[i] * bn.data()[i])
                .collect()
        }
        RuleKind::Passthrough => {
            return Err(Error::Config("passthrough is not a convolution rule".into()))
        }
    };
    Tensor::new(activation.shape(), r_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let layer = Conv2d::new(Tensor::ones(&[1, 1, 1, 1]), None, 1, 0).unwrap();
        let a = Tensor::new(&[1, 2, 2], vec![0.5, 1.0, 2.0, 0.1]).unwrap();
        let r = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let got = propagate_conv(&r, &a, &layer, RuleKind::ZPlus, &RuleConfig::default()).unwrap();
        assert!(got.max_abs_diff(&r) < 1e-7);
    }

    #[test]
    fn symmetric_window_split() {
        let layer = Conv2d::new(Tensor::ones(&[1, 1, 2, 2]), None, 1, 0).unwrap();
        let a = Tensor::full(&[1, 2, 2], 0.5);
        let r = Tensor::full(&[1, 1, 1], 4.0);
        let got = propagate_conv(&r, &a, &layer, RuleKind::ZPlus, &RuleConfig::default()).unwrap();
        assert!(got.max_abs_diff(&Tensor::ones(&[1, 2, 2])) < 1e-8);
    }

    #[test]
    fn strict_flag_is_rejected() {
        let layer = Conv2d::new(Tensor::ones(&[1, 1, 1, 1]), None, 1, 0).unwrap();
        let cfg = RuleConfig {
            strict_eq5_denominator: true,
            ..Default::default()
        };
        let t = Tensor::ones(&[1, 2, 2]);
        assert!(matches!(
            propagate_conv(&t, &t, &layer, RuleKind::ZPlus, &cfg),
            Err(Error::Config(_))
        ));
    }
}
