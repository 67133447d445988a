use std::fmt;
use std::str::FromStr;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{sign, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    L1,
    L2,
}

impl LossKind {
    /// Per-feature error term before the `1/m` normalisation.
    pub fn term(self, x: f64, xhat: f64) -> f64 {
        match self {
            LossKind::L1 => (x - xhat).abs(),
            LossKind::L2 => (x - xhat) * (x - xhat),
        }
    }

    /// Derivative of [`term`](Self::term) with respect to `xhat`. The L1
    /// singularity at `x == xhat` gets derivative 0.
    pub fn term_grad_xhat(self, x: f64, xhat: f64) -> f64 {
        match self {
            LossKind::L1 => -sign(x - xhat),
            LossKind::L2 => -2.0 * (x - xhat),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::Config(format!("unknown loss `{other}` (expected l1 or l2)"))),
        }
    }
}

/// Mean L1 or L2 distance between an input and its reconstruction.
pub fn reconstruction_error(x: &Tensor, xhat: &Tensor, loss: LossKind) -> Result<f64> {
    if x.len() != xhat.len() {
        return dim_err(format!(
            "reconstruction error: {} inputs vs {} reconstructed",
            x.len(),
            xhat.len()
        ));
    }
    let m = x.len() as f64;
    Ok(x.data()
        .iter()
        .zip(xhat.data())
        .map(|(&a, &b)| loss.term(a, b))
        .sum::<f64>()
        / m)
}

/// A scalar function of an input and its reconstruction, differentiable
/// almost everywhere in both arguments.
pub trait ScalarObjective {
    fn value(&self, x: &Tensor, xhat: &Tensor) -> Result<f64>;

    /// Partial derivatives with respect to `x` (holding `xhat` fixed) and to
    /// `xhat` (holding `x` fixed).
    fn partials(&self, x: &Tensor, xhat: &Tensor) -> Result<(Tensor, Tensor)>;
}

/// The reconstruction error itself, with the input acting both as network
/// input and as reconstruction target.
impl ScalarObjective for LossKind {
    fn value(&self, x: &Tensor, xhat: &Tensor) -> Result<f64> {
        reconstruction_error(x, xhat, *self)
    }

    fn partials(&self, x: &Tensor, xhat: &Tensor) -> Result<(Tensor, Tensor)> {
        let m = x.len() as f64;
        let loss = *self;
        let dxhat = x.zip_map(&xhat.reshape(x.shape())?, |a, b| loss.term_grad_xhat(a, b) / m)?;
        Ok((dxhat.scale(-1.0), dxhat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_evaluation() {
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        assert_eq!(reconstruction_error(&x, &x, LossKind::L2).unwrap(), 0.0);
        assert_eq!(reconstruction_error(&x, &x, LossKind::L1).unwrap(), 0.0);
        assert_eq!(
            reconstruction_error(&x, &Tensor::zeros(&[2]), LossKind::L2).unwrap(),
            0.5
        );
        let x = Tensor::from_vec(vec![1.0, 0.0, 0.0, -1.0]);
        assert_eq!(
            reconstruction_error(&x, &Tensor::zeros(&[4]), LossKind::L1).unwrap(),
            0.5
        );
        assert!(reconstruction_error(&x, &Tensor::zeros(&[3]), LossKind::L1).is_err());
    }

    #[test]
    fn l1_singularity_has_zero_gradient() {
        assert_eq!(LossKind::L1.term_grad_xhat(0.4, 0.4), 0.0);
        assert_eq!(LossKind::L1.term_grad_xhat(0.4, 0.1), -1.0);
    }

    #[test]
    fn parses_names() {
        assert_eq!("L2".parse::<LossKind>().unwrap(), LossKind::L2);
        assert!("huber".parse::<LossKind>().is_err());
    }
}
