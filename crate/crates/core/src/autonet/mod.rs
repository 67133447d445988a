//! Autoencoder networks: layers, the model container, traced forward passes,
//! input gradients, SGD training and the on-disk model format.

mod arch;
mod grad;
mod io;
mod loss;
mod train;

pub use arch::{build_table3_model, conv_autoencoder, mlp_autoencoder, tabular_mlp, Table3Scale};
pub use grad::{backward, grad_wrt_input, LayerGrad};
pub use io::{decode_model, encode_model, load_model, save_model, MAGIC};
pub use loss::{reconstruction_error, LossKind, ScalarObjective};
pub use train::{train, TrainConfig, TrainReport};

use crate::error::{dim_err, Result};
use crate::tensor::{
    conv2d_raw, matvec, upsample_factor, upsample_nearest, ConvGeometry, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`, row-major.
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `C_out × C_in × kh × kw`.
    pub kernels: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    Relu,
    Upsample { factor: f64 },
}

impl Dense {
    pub fn new(weights: Tensor, bias: Option<Tensor>) -> Result<Self> {
        let &[out, _] = weights.shape() else {
            return dim_err(format!("dense weights must be out×in, got {:?}", weights.shape()));
        };
        if let Some(b) = &bias {
            if b.len() != out {
                return dim_err(format!("dense bias has {} entries for {out} units", b.len()));
            }
        }
        Ok(Self { weights, bias })
    }

    pub fn units(&self) -> (usize, usize) {
        (self.weights.shape()[0], self.weights.shape()[1])
    }
}

impl Conv2d {
    pub fn new(kernels: Tensor, bias: Option<Tensor>, stride: usize, padding: usize) -> Result<Self> {
        if kernels.shape().len() != 4 {
            return dim_err(format!("conv kernels must be rank 4, got {:?}", kernels.shape()));
        }
        if stride == 0 {
            return dim_err("conv stride must be positive");
        }
        if let Some(b) = &bias {
            if b.len() != kernels.shape()[0] {
                return dim_err(format!(
                    "conv bias has {} entries for {} channels",
                    b.len(),
                    kernels.shape()[0]
                ));
            }
        }
        Ok(Self {
            kernels,
            bias,
            stride,
            padding,
        })
    }

    pub fn geometry(&self, in_shape: &[usize]) -> Result<ConvGeometry> {
        ConvGeometry::new(in_shape, self.kernels.shape(), self.stride, self.padding)
    }
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::Upsample { .. } => "upsample",
        }
    }

    /// Dense and convolutional layers carry weights and need a relevance rule.
    pub fn is_linear(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv2d(_))
    }

    pub fn has_bias(&self) -> bool {
        match self {
            Layer::Dense(d) => d.bias.is_some(),
            Layer::Conv2d(c) => c.bias.is_some(),
            _ => false,
        }
    }

    pub fn strip_bias(&mut self) {
        match self {
            Layer::Dense(d) => d.bias = None,
            Layer::Conv2d(c) => c.bias = None,
            _ => {}
        }
    }

    pub fn output_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                let (out, inp) = d.units();
                let n: usize = in_shape.iter().product();
                if n != inp {
                    return dim_err(format!("dense layer expects {inp} inputs, got shape {in_shape:?}"));
                }
                Ok(vec![out])
            }
            Layer::Conv2d(c) => Ok(c.geometry(in_shape)?.out_shape().to_vec()),
            Layer::Relu => Ok(in_shape.to_vec()),
            Layer::Upsample { factor } => {
                let f = upsample_factor(*factor)?;
                match in_shape {
                    &[c, h, w] => Ok(vec![c, h * f, w * f]),
                    s => dim_err(format!("upsample expects C×H×W, got {s:?}")),
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(d) => {
                let (out, inp) = d.units();
                if x.len() != inp {
                    return dim_err(format!("dense layer expects {inp} inputs, got {}", x.len()));
                }
                let mut y = matvec(d.weights.data(), out, inp, x.data());
                if let Some(b) = &d.bias {
                    y.iter_mut().zip(b.data()).for_each(|(v, b)| *v += b);
                }
                Ok(Tensor::from_vec(y))
            }
            Layer::Conv2d(c) => {
                let g = c.geometry(x.shape())?;
                let mut y = conv2d_raw(&g, x.data(), c.kernels.data());
                if let Some(b) = &c.bias {
                    let plane = g.out_h * g.out_w;
                    for (ch, bv) in b.data().iter().enumerate() {
                        y.data_mut()[ch * plane..(ch + 1) * plane]
                            .iter_mut()
                            .for_each(|v| *v += bv);
                    }
                }
                Ok(y)
            }
            Layer::Relu => Ok(x.relu()),
            Layer::Upsample { factor } => upsample_nearest(x, *factor),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.len() + d.bias.as_ref().map_or(0, Tensor::len),
            Layer::Conv2d(c) => c.kernels.len() + c.bias.as_ref().map_or(0, Tensor::len),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
}

/// Activations recorded at every layer boundary of one forward pass.
///
/// `boundaries[0]` is the sample itself and `boundaries[l + 1]` is the output
/// of layer `l`, so the input activation of layer `l` is `boundaries[l]` and
/// its pre-activation (for a dense or conv layer followed by a ReLU) is
/// `boundaries[l + 1]`.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub boundaries: Vec<Tensor>,
}

impl LayerTrace {
    pub fn input_of(&self, layer: usize) -> &Tensor {
        &self.boundaries[layer]
    }

    pub fn output_of(&self, layer: usize) -> &Tensor {
        &self.boundaries[layer + 1]
    }

    pub fn output(&self) -> &Tensor {
        self.boundaries.last().expect("trace always holds the input")
    }
}

impl Model {
    /// Builds a model, checking that consecutive shapes compose and that the
    /// network reproduces its input shape.
    pub fn new(layers: Vec<Layer>, input_shape: Vec<usize>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return dim_err(format!("invalid input shape {input_shape:?}"));
        }
        let model = Self { layers, input_shape };
        let shapes = model.boundary_shapes()?;
        let out = shapes.last().unwrap();
        let n_in: usize = model.input_shape.iter().product();
        let n_out: usize = out.iter().product();
        if n_in != n_out || (out.len() > 1 && *out != model.input_shape) {
            return dim_err(format!(
                "model maps {:?} to {out:?}; an autoencoder must reproduce its input shape",
                model.input_shape
            ));
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn has_bias(&self) -> bool {
        self.layers.iter().any(Layer::has_bias)
    }

    pub fn without_bias(mut self) -> Self {
        self.layers.iter_mut().for_each(Layer::strip_bias);
        self
    }

    /// Shapes at every layer boundary, input first.
    pub fn boundary_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return dim_err(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            ));
        }
        Ok(())
    }

    /// Reconstruction of `x`, reshaped to the input shape.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            a = layer.forward(&a)?;
        }
        a.reshape(&self.input_shape)
    }

    pub fn forward_with_trace(&self, x: &Tensor) -> Result<(Tensor, LayerTrace)> {
        self.check_input(x)?;
        let mut boundaries = Vec::with_capacity(self.layers.len() + 1);
        boundaries.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(boundaries.last().unwrap())?;
            boundaries.push(next);
        }
        let xhat = boundaries.last().unwrap().reshape(&self.input_shape)?;
        Ok((xhat, LayerTrace { boundaries }))
    }
}
