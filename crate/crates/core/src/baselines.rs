//! Comparison explainers: plain residuals and model-agnostic kernel SHAP.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autonet::LossKind;
use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// Coalition counts up to this size are enumerated exhaustively.
pub const FULL_ENUMERATION_LIMIT: usize = 4096;

/// Per-feature reconstruction error, `(x_i − x̂_i)²` or `|x_i − x̂_i|`.
pub fn residual_explain(x: &Tensor, xhat: &Tensor, loss: LossKind) -> Result<Tensor> {
    if x.len() != xhat.len() {
        return dim_err(format!(
            "residual: {} inputs vs {} reconstructed",
            x.len(),
            xhat.len()
        ));
    }
    Tensor::new(
        x.shape(),
        x.data().iter().zip(xhat.data()).map(|(&a, &b)| loss.term(a, b)).collect(),
    )
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight `(M−1) / (C(M,s)·s·(M−s))` of a coalition of size
/// `s` out of `M` features. The empty and full coalitions have infinite
/// weight and are enforced as constraints instead.
pub fn shapley_kernel_weight(m: usize, s: usize) -> Result<f64> {
    if s == 0 || s >= m {
        return Err(Error::Config(format!(
            "kernel weight is infinite for coalition size {s} of {m}"
        )));
    }
    Ok((m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64))
}

#[derive(Debug, Clone)]
pub struct ShapConfig {
    /// Coalitions evaluated per explanation when sampling.
    pub nsamples: usize,
    pub background: Vec<Tensor>,
    pub seed: u64,
}

impl ShapConfig {
    pub fn new(background: Vec<Tensor>, nsamples: usize, seed: u64) -> Self {
        Self {
            nsamples,
            background,
            seed,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.background.is_empty() {
            return Err(Error::Config("kernel SHAP needs a background set".into()));
        }
        if let Some(b) = self.background.iter().find(|b| b.len() != m) {
            return dim_err(format!("background sample has {} features, expected {m}", b.len()));
        }
        if 1usize.checked_shl(m as u32).map_or(true, |n| n > FULL_ENUMERATION_LIMIT)
            && self.nsamples < m + 2
        {
            return Err(Error::Config(format!(
                "kernel SHAP needs at least {} samples for {m} features, got {}",
                m + 2,
                self.nsamples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapExplanation {
    pub values: Tensor,
    /// Mean score over the background.
    pub base_value: f64,
    /// Score of the explained sample.
    pub full_value: f64,
    /// Number of `score_fn` calls.
    pub evaluations: usize,
}

/// Coalition masks with their regression weights.
fn coalitions(m: usize, cfg: &ShapConfig) -> Vec<(Vec<bool>, f64)> {
    let full = 1usize.checked_shl(m as u32).filter(|&n| n <= FULL_ENUMERATION_LIMIT);
    if let Some(n) = full {
        return (1..n - 1)
            .map(|bits| {
                let mask: Vec<bool> = (0..m).map(|i| bits >> i & 1 == 1).collect();
                let s = mask.iter().filter(|&&b| b).count();
                (mask, shapley_kernel_weight(m, s).unwrap())
            })
            .collect();
    }
    // Sizes drawn with probability proportional to the summed kernel weight of
    // that size, then a uniform subset; each draw is paired with its
    // complement.
    let size_weights: Vec<f64> = (1..m).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
    let total: f64 = size_weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.nsamples);
    while out.len() < cfg.nsamples {
        let mut u = rng.gen_range(0.0..total);
        let mut s = m - 1;
        for (i, w) in size_weights.iter().enumerate() {
            if u < *w {
                s = i + 1;
                break;
            }
            u -= w;
        }
        let chosen = rand::seq::index::sample(&mut rng, m, s);
        let mut mask = vec![false; m];
        for i in chosen.iter() {
            mask[i] = true;
        }
        let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
        out.push((mask, 1.0));
        if out.len() < cfg.nsamples {
            out.push((complement, 1.0));
        }
    }
    out
}

/// Kernel SHAP attributions of `score_fn` at `x`.
///
/// Features outside a coalition take background values and the score is
/// averaged over the background set. The attributions solve the
/// kernel-weighted least-squares problem under the efficiency constraint
/// `base_value + Σφ = score_fn(x)`.
pub fn kernel_shap_explain<F>(mut score_fn: F, x: &Tensor, cfg: &ShapConfig) -> Result<ShapExplanation>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let m = x.len();
    if m == 0 {
        return Err(Error::Empty("sample to explain".into()));
    }
    cfg.validate(m)?;
    let mut evaluations = 0;
    let mut eval = |t: &Tensor, evaluations: &mut usize| -> Result<f64> {
        *evaluations += 1;
        let v = score_fn(t)?;
        if !v.is_finite() {
            return Err(Error::Degenerate(format!("score function returned {v}")));
        }
        Ok(v)
    };
    let full_value = eval(x, &mut evaluations)?;
    let mut base_value = 0.0;
    for b in &cfg.background {
        base_value += eval(&b.reshape(x.shape())?, &mut evaluations)?;
    }
    base_value /= cfg.background.len() as f64;
    let delta = full_value - base_value;

    if m == 1 {
        return Ok(ShapExplanation {
            values: Tensor::new(x.shape(), vec![delta])?,
            base_value,
            full_value,
            evaluations,
        });
    }

    let coalitions = coalitions(m, cfg);
    let mut ys = Vec::with_capacity(coalitions.len());
    let mut probe = x.clone();
    for (mask, _) in &coalitions {
        let mut acc = 0.0;
        for b in &cfg.background {
            for (i, p) in probe.data_mut().iter_mut().enumerate() {
                *p = if mask[i] { x.data()[i] } else { b.data()[i] };
            }
            acc += eval(&probe, &mut evaluations)?;
        }
        ys.push(acc / cfg.background.len() as f64 - base_value);
    }

    // Eliminate the last attribution through the constraint:
    // y − z_M·Δ = Σ_{j<M} φ_j (z_j − z_M).
    let n = m - 1;
    let mut ata = DMatrix::<f64>::zeros(n, n);
    let mut atb = DVector::<f64>::zeros(n);
    let mut row = vec![0.0; n];
    for ((mask, w), y) in coalitions.iter().zip(&ys) {
        let zl = if mask[n] { 1.0 } else { 0.0 };
        for (j, r) in row.iter_mut().enumerate() {
            *r = (if mask[j] { 1.0 } else { 0.0 }) - zl;
        }
        let target = y - zl * delta;
        for a in 0..n {
            if row[a] == 0.0 {
                continue;
            }
            atb[a] += w * row[a] * target;
            for b in 0..n {
                ata[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    let phi = ata
        .lu()
        .solve(&atb)
        .filter(|p| p.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Degenerate("kernel SHAP regression is singular".into()))?;
    let mut values: Vec<f64> = phi.iter().copied().collect();
    values.push(delta - values.iter().sum::<f64>());
    Ok(ShapExplanation {
        values: Tensor::new(x.shape(), values)?,
        base_value,
        full_value,
        evaluations,
    })
}
