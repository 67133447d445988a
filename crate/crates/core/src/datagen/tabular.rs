use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of features in a tabular sample.
pub const TABULAR_FEATURES: usize = 21;
/// Dimension of the latent factors behind each sample.
pub const LATENT_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 50_000,
            val: 5_000,
            test: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub train: Vec<Tensor>,
    pub val: Vec<Tensor>,
    pub test: Vec<Tensor>,
    pub seed: u64,
    pub latent_dim: usize,
}

/// Mixing matrix `A` (features × latent) and offset `b` fixed by the seed.
pub(crate) fn mixing(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..TABULAR_FEATURES * LATENT_DIM)
        .map(|_| rng.gen_range(-1.5..1.5))
        .collect();
    let b = (0..TABULAR_FEATURES).map(|_| rng.gen_range(-0.5..0.5)).collect();
    (a, b)
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn sample(a: &[f64], b: &[f64], rng: &mut ChaCha8Rng) -> Tensor {
    let z: Vec<f64> = (0..LATENT_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = (0..TABULAR_FEATURES)
        .map(|f| {
            let row = &a[f * LATENT_DIM..(f + 1) * LATENT_DIM];
            let v = row.iter().zip(&z).map(|(w, z)| w * z).sum::<f64>() + b[f];
            logistic(v) as f32 as f64
        })
        .collect();
    Tensor::from_vec(x)
}

/// Low-rank tabular data: `x = logistic(A·z + b)` with `z ~ U(−1, 1)^6`.
/// Every sample comes from its own RNG stream, so splits are independent of
/// each other's sizes. Values are rounded through `f32` to match storage.
pub fn gen_tabular(seed: u64, sizes: SplitSizes) -> Result<TabularDataset> {
    if sizes.train == 0 || sizes.val == 0 {
        return Err(Error::Config("tabular train and val splits must be nonempty".into()));
    }
    let (a, b) = mixing(seed);
    let split = |id: u64, n: usize| -> Vec<Tensor> {
        (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((id << 40) | (i as u64 + 1));
                sample(&a, &b, &mut rng)
            })
            .collect()
    };
    Ok(TabularDataset {
        train: split(1, sizes.train),
        val: split(2, sizes.val),
        test: split(3, sizes.test),
        seed,
        latent_dim: LATENT_DIM,
    })
}
