use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Conv2d, Dense, Layer, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Glorot-uniform values, rounded through `f32` so that a freshly built model
/// survives a save/load round trip unchanged.
fn glorot(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n)
        .map(|_| rng.gen_range(-limit..limit) as f32 as f64)
        .collect()
}

fn dense(rng: &mut ChaCha8Rng, inp: usize, out: usize, bias: bool) -> Result<Layer> {
    let w = Tensor::new(&[out, inp], glorot(rng, out * inp, inp, out))?;
    let b = bias.then(|| Tensor::zeros(&[out]));
    Ok(Layer::Dense(Dense::new(w, b)?))
}

fn conv(
    rng: &mut ChaCha8Rng,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    bias: bool,
) -> Result<Layer> {
    let n = c_out * c_in * k * k;
    let w = Tensor::new(&[c_out, c_in, k, k], glorot(rng, n, c_in * k * k, c_out * k * k))?;
    let b = bias.then(|| Tensor::zeros(&[c_out]));
    Ok(Layer::Conv2d(Conv2d::new(w, b, stride, 0)?))
}

/// Fully connected autoencoder through the given layer widths (first and last
/// must match), with ReLU between dense layers.
pub fn mlp_autoencoder(widths: &[usize], bias: bool, final_relu: bool, seed: u64) -> Result<Model> {
    if widths.len() < 2 || widths.first() != widths.last() {
        return Err(Error::Config(format!(
            "autoencoder widths {widths:?} must start and end with the same size"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        layers.push(dense(&mut rng, pair[0], pair[1], bias)?);
        if i + 2 < widths.len() || final_relu {
            layers.push(Layer::Relu);
        }
    }
    Model::new(layers, vec![widths[0]])
}

/// Default tabular autoencoder: `m → 32 → 8 → 32 → m` with a linear output.
pub fn tabular_mlp(features: usize, bias: bool, seed: u64) -> Result<Model> {
    mlp_autoencoder(&[features, 32, 8, 32, features], bias, false, seed)
}

/// Small convolutional autoencoder on `1×6×6` inputs exercising every layer
/// kind; used for gradient and relevance checks.
pub fn conv_autoencoder(bias: bool, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        conv(&mut rng, 1, 3, 3, 1, bias)?,
        Layer::Relu,
        Layer::Upsample { factor: 2.0 },
        conv(&mut rng, 3, 2, 3, 1, bias)?,
        Layer::Relu,
        conv(&mut rng, 2, 1, 1, 1, bias)?,
    ];
    Model::new(layers, vec![1, 6, 6])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table3Scale {
    /// 128×128 inputs, the full 14-convolution stack.
    Full,
    /// 64×64 inputs, 11 convolutions with halved channel counts.
    Desk,
}

impl FromStr for Table3Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "desk" => Ok(Self::Desk),
            other => Err(Error::Config(format!("unknown model scale `{other}` (full|desk)"))),
        }
    }
}

enum Stage {
    Conv { out: usize, k: usize, stride: usize },
    Up(f64),
}

use Stage::{Conv, Up};

/// Full stack. The third upsample uses factor 2: that is the factor under
/// which the listed output sizes (10×10 → 20×20) and the 128×128 output work.
const FULL: &[Stage] = &[
    Conv { out: 32, k: 5, stride: 2 },
    Conv { out: 32, k: 3, stride: 2 },
    Conv { out: 32, k: 3, stride: 1 },
    Conv { out: 64, k: 5, stride: 2 },
    Conv { out: 64, k: 3, stride: 1 },
    Conv { out: 128, k: 3, stride: 2 },
    Conv { out: 512, k: 3, stride: 1 },
    Up(3.0),
    Conv { out: 128, k: 3, stride: 1 },
    Up(3.0),
    Conv { out: 64, k: 3, stride: 1 },
    Up(2.0),
    Conv { out: 64, k: 3, stride: 1 },
    Up(2.0),
    Conv { out: 32, k: 3, stride: 1 },
    Up(2.0),
    Conv { out: 32, k: 3, stride: 1 },
    Up(2.0),
    Conv { out: 32, k: 3, stride: 1 },
    Conv { out: 1, k: 3, stride: 1 },
];

/// Desk stack for 64×64 inputs:
///
/// ```text
/// input   64×64×1
/// conv1   30×30×16   5/2
/// conv2   14×14×16   3/2
/// conv3   12×12×16   3/1
/// conv4    4×4×32    5/2
/// conv7    2×2×256   3/1
/// up ×3    6×6
/// conv8    4×4×64
/// up ×3   12×12
/// conv9   10×10×32
/// up ×2   20×20
/// conv11  18×18×16
/// up ×2   36×36
/// conv12  34×34×16
/// up ×2   68×68
/// conv13  66×66×16
/// conv14  64×64×1
/// ```
const DESK: &[Stage] = &[
    Conv { out: 16, k: 5, stride: 2 },
    Conv { out: 16, k: 3, stride: 2 },
    Conv { out: 16, k: 3, stride: 1 },
    Conv { out: 32, k: 5, stride: 2 },
    Conv { out: 256, k: 3, stride: 1 },
    Up(3.0),
    Conv { out: 64, k: 3, stride: 1 },
    Up(3.0),
    Conv { out: 32, k: 3, stride: 1 },
    Up(2.0),
    Conv { out: 16, k: 3, stride: 1 },
    Up(2.0),
    Conv { out: 16, k: 3, stride: 1 },
    Up(2.0),
    Conv { out: 16, k: 3, stride: 1 },
    Conv { out: 1, k: 3, stride: 1 },
];

/// Convolutional autoencoder with ReLU after every convolution and nearest
/// neighbour upsampling in the decoder.
pub fn build_table3_model(scale: Table3Scale, bias: bool, seed: u64) -> Result<Model> {
    let (stages, side) = match scale {
        Table3Scale::Full => (FULL, 128),
        Table3Scale::Desk => (DESK, 64),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut channels = 1;
    for stage in stages {
        match *stage {
            Conv { out, k, stride } => {
                layers.push(conv(&mut rng, channels, out, k, stride, bias)?);
                layers.push(Layer::Relu);
                channels = out;
            }
            Up(f) => layers.push(Layer::Upsample { factor: f }),
        }
    }
    Model::new(layers, vec![1, side, side])
}
