//! Self-supervised validation data: clean samples with exactly one feature
//! corrupted, so the corrupted index is the ground-truth explanation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autonet::{grad_wrt_input, reconstruction_error, LossKind, Model, ScalarObjective};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{sign, Tensor};

/// Percentile of clean-data errors used as the score normaliser.
pub const CALIBRATION_PERCENTILE: f64 = 99.5;

/// Maps L2 reconstruction errors onto `[0, 1]` anomaly scores.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreCalibration {
    reference: Option<f64>,
}

impl ScoreCalibration {
    pub fn unfitted() -> Self {
        Self::default()
    }

    pub fn from_reference(reference: f64) -> Self {
        Self {
            reference: Some(reference),
        }
    }

    /// Fits the reference error as the 99.5th percentile (linear
    /// interpolation between order statistics) of the model's errors on
    /// `data`.
    pub fn fit(model: &Model, data: &[Tensor]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("calibration set".into()));
        }
        let mut errors = data
            .iter()
            .map(|x| reconstruction_error(x, &model.forward(x)?, LossKind::L2))
            .collect::<Result<Vec<_>>>()?;
        errors.sort_by(f64::total_cmp);
        let reference = percentile_sorted(&errors, CALIBRATION_PERCENTILE);
        if !(reference > 0.0) {
            return Err(Error::Degenerate(format!(
                "calibration reference error is {reference}"
            )));
        }
        Ok(Self::from_reference(reference))
    }

    pub fn reference(&self) -> Option<f64> {
        self.reference
    }

    pub fn score_error(&self, error: f64) -> Result<f64> {
        let r = self.reference.ok_or(Error::UnfittedCalibration)?;
        Ok((error / r).clamp(0.0, 1.0))
    }
}

pub(crate) fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `clamp(e_L2(x, x̂) / e_ref, 0, 1)`.
pub fn anomaly_score(model: &Model, x: &Tensor, calibration: &ScoreCalibration) -> Result<f64> {
    let reference = calibration.reference.ok_or(Error::UnfittedCalibration)?;
    let e = reconstruction_error(x, &model.forward(x)?, LossKind::L2)?;
    Ok((e / reference).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Null,
    Random,
    Adversarial,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Null, Strategy::Random, Strategy::Adversarial];

    /// Default acceptance threshold of each strategy.
    pub fn default_threshold(self) -> f64 {
        match self {
            Strategy::Null => 0.3,
            Strategy::Random => 0.5,
            Strategy::Adversarial => 0.3,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Null => "null",
            Strategy::Random => "random",
            Strategy::Adversarial => "adversarial",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(Strategy::Null),
            "random" => Ok(Strategy::Random),
            "adversarial" => Ok(Strategy::Adversarial),
            other => Err(Error::Config(format!(
                "unknown corruption strategy `{other}` (null|random|adversarial)"
            ))),
        }
    }
}

fn check_index(x: &Tensor, c: usize) -> Result<()> {
    if c >= x.len() {
        return dim_err(format!("feature index {c} out of range for {} features", x.len()));
    }
    Ok(())
}

/// Sets feature `c` to zero.
pub fn corrupt_null(x: &Tensor, c: usize) -> Result<Tensor> {
    check_index(x, c)?;
    let mut out = x.clone();
    out.data_mut()[c] = 0.0;
    Ok(out)
}

/// Replaces feature `c` with a draw from `U(0, 1)`.
pub fn corrupt_random<R: Rng + ?Sized>(x: &Tensor, c: usize, rng: &mut R) -> Result<Tensor> {
    check_index(x, c)?;
    let mut out = x.clone();
    out.data_mut()[c] = rng.gen_range(0.0..1.0);
    Ok(out)
}

/// `r_adv(x, c) = (1/m)[Σ_{i≠c} φ(x,i) − θ·φ(x,c)]` with
/// `φ(x,i) = (x_i − x̂_i)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversarialObjective {
    pub feature: usize,
    pub theta: f64,
}

impl AdversarialObjective {
    /// `φ(x,c)` and `Σ_{i≠c} φ(x,i)`.
    pub fn split(&self, x: &Tensor, xhat: &Tensor) -> Result<(f64, f64)> {
        check_index(x, self.feature)?;
        if x.len() != xhat.len() {
            return dim_err("adversarial loss: input and reconstruction differ in size");
        }
        let mut own = 0.0;
        let mut others = 0.0;
        for (i, (&a, &b)) in x.data().iter().zip(xhat.data()).enumerate() {
            let phi = (a - b) * (a - b);
            if i == self.feature {
                own = phi;
            } else {
                others += phi;
            }
        }
        Ok((own, others))
    }
}

impl ScalarObjective for AdversarialObjective {
    fn value(&self, x: &Tensor, xhat: &Tensor) -> Result<f64> {
        let (own, others) = self.split(x, xhat)?;
        Ok((others - self.theta * own) / x.len() as f64)
    }

    fn partials(&self, x: &Tensor, xhat: &Tensor) -> Result<(Tensor, Tensor)> {
        check_index(x, self.feature)?;
        let m = x.len() as f64;
        let mut dxhat = x.sub(&xhat.reshape(x.shape())?)?.scale(-2.0 / m);
        dxhat.data_mut()[self.feature] *= -self.theta;
        Ok((dxhat.scale(-1.0), dxhat))
    }
}

pub fn adversarial_loss(model: &Model, x: &Tensor, c: usize, theta: f64) -> Result<f64> {
    AdversarialObjective { feature: c, theta }.value(x, &model.forward(x)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialConfig {
    /// Weight on the corrupted feature's own reconstruction error.
    pub theta: f64,
    /// Initial step size.
    pub alpha: f64,
    /// Step-size updater cadence.
    pub k: usize,
    pub max_iters: usize,
    pub seed_with_random: bool,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            alpha: 0.05,
            k: 10,
            max_iters: 500,
            seed_with_random: true,
        }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) || !(self.alpha >= 0.0) || self.k == 0 || self.max_iters == 0 {
            return Err(Error::Config(format!(
                "adversarial config needs θ > 0, α ≥ 0, k ≥ 1, N ≥ 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Result of one adversarial corruption run.
#[derive(Debug, Clone)]
pub struct AdversarialRun {
    pub corrupted: Tensor,
    /// `r_adv` at the start point and after every accepted step.
    pub history: Vec<f64>,
    /// Step size in effect at each iteration.
    pub alphas: Vec<f64>,
    pub iterations: usize,
}

/// Signed-gradient ascent on `r_adv` that only ever moves feature `c`.
///
/// A step is kept only if it does not lower `r_adv`. Every `k` iterations the
/// step size is halved when, compared with `k` iterations earlier, the
/// corrupted feature's own error has not decreased and the other features'
/// summed error has not increased. No clipping is applied.
pub fn corrupt_adversarial<R: Rng + ?Sized>(
    model: &Model,
    x: &Tensor,
    c: usize,
    cfg: &AdversarialConfig,
    rng: &mut R,
) -> Result<AdversarialRun> {
    cfg.validate()?;
    check_index(x, c)?;
    let objective = AdversarialObjective {
        feature: c,
        theta: cfg.theta,
    };
    let mut current = if cfg.seed_with_random {
        corrupt_random(x, c, rng)?
    } else {
        x.clone()
    };
    let evaluate = |t: &Tensor| -> Result<(f64, f64, f64)> {
        let xhat = model.forward(t)?;
        let (own, others) = objective.split(t, &xhat)?;
        Ok(((others - cfg.theta * own) / t.len() as f64, own, others))
    };
    let (mut r, mut own, mut others) = evaluate(&current)?;
    let mut history = vec![r];
    let mut alphas = Vec::new();
    let mut alpha = cfg.alpha;
    let mut checkpoint = (own, others);
    let mut iterations = 0;

    for n in 1..=cfg.max_iters {
        if alpha == 0.0 {
            break;
        }
        iterations = n;
        alphas.push(alpha);
        let g = grad_wrt_input(model, &current, &objective)?.data()[c];
        if !g.is_finite() {
            return Err(Error::Corruption(format!(
                "gradient for feature {c} is {g} at iteration {n}"
            )));
        }
        let step = alpha * sign(g);
        if step != 0.0 {
            let mut candidate = current.clone();
            candidate.data_mut()[c] += step;
            let (rc, oc, sc) = evaluate(&candidate)?;
            if rc >= r {
                current = candidate;
                (r, own, others) = (rc, oc, sc);
                history.push(r);
            }
        }
        if n % cfg.k == 0 {
            if own >= checkpoint.0 && others <= checkpoint.1 {
                alpha /= 2.0;
            }
            checkpoint = (own, others);
        }
        if alpha < 1e-12 {
            break;
        }
    }
    Ok(AdversarialRun {
        corrupted: current,
        history,
        alphas,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionRecord {
    /// Index of the clean sample in the source set.
    pub sample: usize,
    pub original: Tensor,
    pub corrupted: Tensor,
    /// The corrupted feature.
    pub feature: usize,
    pub strategy: Strategy,
    pub anomaly_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    /// Number of records to generate.
    pub samples: usize,
    pub threshold: f64,
    pub strategy: Strategy,
    pub adversarial: AdversarialConfig,
    pub seed: u64,
    /// Attempts allowed per requested record before giving up.
    pub retry_factor: usize,
}

impl ValidationConfig {
    pub fn new(strategy: Strategy, samples: usize, seed: u64) -> Self {
        Self {
            samples,
            threshold: strategy.default_threshold(),
            strategy,
            adversarial: AdversarialConfig::default(),
            seed,
            retry_factor: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("validation needs at least one sample".into()));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "anomaly threshold must lie in [0, 1), got {}",
                self.threshold
            )));
        }
        self.adversarial.validate()
    }
}

/// Draws a clean sample and feature per attempt, corrupts it and keeps it if
/// its anomaly score exceeds the threshold, until `samples` records exist.
/// Attempt `j` uses its own RNG stream derived from the seed.
pub fn generate_validation_set(
    model: &Model,
    clean: &[Tensor],
    calibration: &ScoreCalibration,
    cfg: &ValidationConfig,
) -> Result<Vec<CorruptionRecord>> {
    cfg.validate()?;
    if clean.is_empty() {
        return Err(Error::Empty("clean data".into()));
    }
    calibration.reference.ok_or(Error::UnfittedCalibration)?;
    let budget = cfg.samples * cfg.retry_factor.max(1);
    let mut records = Vec::with_capacity(cfg.samples);
    let mut attempts = 0;
    while records.len() < cfg.samples {
        if attempts == budget {
            return Err(Error::Generation {
                accepted: records.len(),
                attempts,
                rate: records.len() as f64 / attempts as f64,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(attempts as u64);
        attempts += 1;

        let sample = rng.gen_range(0..clean.len());
        let original = &clean[sample];
        let feature = rng.gen_range(0..original.len());
        let corrupted = match cfg.strategy {
            Strategy::Null => corrupt_null(original, feature)?,
            Strategy::Random => corrupt_random(original, feature, &mut rng)?,
            Strategy::Adversarial => {
                corrupt_adversarial(model, original, feature, &cfg.adversarial, &mut rng)?.corrupted
            }
        };
        let score = anomaly_score(model, &corrupted, calibration)?;
        if score > cfg.threshold {
            records.push(CorruptionRecord {
                sample,
                original: original.clone(),
                corrupted,
                feature,
                strategy: cfg.strategy,
                anomaly_score: score,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autonet::{mlp_autoencoder, Dense, Layer};

    fn half_model(m: usize) -> Model {
        Model::new(
            vec![Layer::Dense(Dense::new(Tensor::identity(m).scale(0.5), None).unwrap())],
            vec![m],
        )
        .unwrap()
    }

    #[test]
    fn scores() {
        let id = Model::new(vec![Layer::Dense(Dense::new(Tensor::identity(2), None).unwrap())], vec![2]).unwrap();
        let cal = ScoreCalibration::from_reference(0.1);
        assert_eq!(anomaly_score(&id, &Tensor::from_vec(vec![0.3, 0.9]), &cal).unwrap(), 0.0);
        // x = (0.2, 0.6) through x/2: e = (0.01 + 0.09) / 2 = 0.05
        let half = half_model(2);
        let x = Tensor::from_vec(vec![0.2, 0.6]);
        let e = 0.05;
        let at_ref = ScoreCalibration::from_reference(e);
        assert!((anomaly_score(&half, &x, &at_ref).unwrap() - 1.0).abs() < 1e-12);
        let s = anomaly_score(&half, &x, &ScoreCalibration::from_reference(0.2)).unwrap();
        assert!((s - 0.25).abs() < 1e-12);
        assert!(matches!(
            anomaly_score(&half, &x, &ScoreCalibration::unfitted()),
            Err(Error::UnfittedCalibration)
        ));
    }

    #[test]
    fn calibration_percentile() {
        let sorted: Vec<f64> = (0..=200).map(|i| i as f64).collect();
        assert!((percentile_sorted(&sorted, 99.5) - 199.0).abs() < 1e-12);
        assert_eq!(percentile_sorted(&[3.0], 99.5), 3.0);
    }

    #[test]
    fn null_corruption() {
        let x = Tensor::from_vec(vec![0.5, 0.7]);
        assert_eq!(corrupt_null(&x, 0).unwrap().data(), &[0.0, 0.7]);
        let z = Tensor::from_vec(vec![0.0, 0.7]);
        assert_eq!(corrupt_null(&z, 0).unwrap(), z);
        assert!(corrupt_null(&x, 2).is_err());
    }

    #[test]
    fn random_corruption_is_seeded_and_uniform() {
        let x = Tensor::from_vec(vec![0.5, 0.7, 0.1]);
        let a = corrupt_random(&x, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = corrupt_random(&x, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.data()[1]));
        assert_eq!(a.data()[0], 0.5);
        assert_eq!(a.data()[2], 0.1);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| corrupt_random(&x, 0, &mut rng).unwrap().data()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() <= 0.01, "{mean}");
    }

    #[test]
    fn adversarial_loss_values() {
        let id = Model::new(vec![Layer::Dense(Dense::new(Tensor::identity(2), None).unwrap())], vec![2]).unwrap();
        assert_eq!(adversarial_loss(&id, &Tensor::from_vec(vec![0.4, 0.1]), 0, 1.0).unwrap(), 0.0);
        // φ = (0.04, 0.09) via x̂ = x/2 with x = (0.4, 0.6)
        let half = half_model(2);
        let x = Tensor::from_vec(vec![0.4, 0.6]);
        let r = adversarial_loss(&half, &x, 1, 1.0).unwrap();
        assert!((r + 0.025).abs() < 1e-15);
        let r0 = adversarial_loss(&half, &x, 1, 0.0).unwrap();
        assert!((r0 - 0.04 / 2.0).abs() < 1e-15);
        assert!(adversarial_loss(&half, &x, 2, 1.0).is_err());
    }

    #[test]
    fn adversarial_first_step_follows_analytic_gradient() {
        let m = 3;
        let model = half_model(m);
        let x = Tensor::from_vec(vec![0.4, 0.6, 0.8]);
        let obj = AdversarialObjective { feature: 1, theta: 1.0 };
        let g = grad_wrt_input(&model, &x, &obj).unwrap();
        let want = -(1.0 / m as f64) * 0.5 * 0.6;
        assert!((g.data()[1] - want).abs() < 1e-15);

        let cfg = AdversarialConfig {
            alpha: 0.05,
            max_iters: 1,
            seed_with_random: false,
            ..Default::default()
        };
        let run = corrupt_adversarial(&model, &x, 1, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((run.corrupted.data()[1] - 0.55).abs() < 1e-15);
        assert_eq!(run.corrupted.data()[0], 0.4);
        assert_eq!(run.corrupted.data()[2], 0.8);
    }

    #[test]
    fn zero_step_leaves_input_alone() {
        let model = half_model(3);
        let x = Tensor::from_vec(vec![0.4, 0.6, 0.8]);
        let cfg = AdversarialConfig {
            alpha: 0.0,
            seed_with_random: false,
            ..Default::default()
        };
        let run = corrupt_adversarial(&model, &x, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(run.corrupted, x);
    }

    #[test]
    fn adversarial_run_is_monotone_and_local() {
        let model = mlp_autoencoder(&[6, 4, 6], true, false, 12).unwrap();
        let x = Tensor::from_vec(vec![0.2, 0.4, 0.6, 0.8, 0.3, 0.5]);
        let cfg = AdversarialConfig {
            max_iters: 200,
            k: 5,
            ..Default::default()
        };
        let run = corrupt_adversarial(&model, &x, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(run.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(run.alphas.windows(2).all(|w| w[1] <= w[0]));
        for i in (0..6).filter(|&i| i != 2) {
            assert_eq!(run.corrupted.data()[i], x.data()[i]);
        }
    }

    #[test]
    fn vacuous_gate_accepts_first_attempts() {
        let model = half_model(4);
        let clean: Vec<Tensor> = (0..5)
            .map(|i| Tensor::from_vec(vec![0.1 + 0.1 * i as f64, 0.5, 0.6, 0.7]))
            .collect();
        let cal = ScoreCalibration::from_reference(10.0);
        let mut cfg = ValidationConfig::new(Strategy::Random, 7, 3);
        cfg.threshold = 0.0;
        let recs = generate_validation_set(&model, &clean, &cal, &cfg).unwrap();
        assert_eq!(recs.len(), 7);
        assert!(recs.iter().all(|r| r.anomaly_score > 0.0));
        assert_eq!(recs, generate_validation_set(&model, &clean, &cal, &cfg).unwrap());
    }

    #[test]
    fn exhausted_budget_reports_rate() {
        let model = half_model(2);
        let clean = vec![Tensor::from_vec(vec![0.0, 0.0])];
        let cal = ScoreCalibration::from_reference(1.0);
        let cfg = ValidationConfig::new(Strategy::Null, 2, 0);
        match generate_validation_set(&model, &clean, &cal, &cfg) {
            Err(Error::Generation { attempts, accepted, .. }) => {
                assert_eq!(attempts, 100);
                assert_eq!(accepted, 0);
            }
            other => panic!("expected generation error, got {other:?}"),
        }
    }
}
