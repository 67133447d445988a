//! Dense row-major `f64` tensors and the handful of primitives the rest of
//! the crate is built on: matrix products, 2-D cross-correlation and its
//! adjoint, nearest-neighbour upsampling and pointwise arithmetic.

use std::fmt;

use crate::error::{dim_err, Error, Result};

/// Smallest magnitude a relevance-rule denominator may take.
pub const STABILIZER: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return dim_err(format!("shape {shape:?} has a zero dimension"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return dim_err(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn flatten(&self) -> Self {
        Self::from_vec(self.data.clone())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same(other, "elementwise op")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    fn check_same(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return dim_err(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Elementwise `self / other` with the denominator pushed away from zero.
    pub fn div_safe(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, div_safe)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn relu(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn square(&self) -> Self {
        self.map(|v| v * v)
    }

    pub fn sign(&self) -> Self {
        self.map(sign)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Channel-height-width view of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            s => dim_err(format!("expected a C×H×W tensor, got shape {s:?}")),
        }
    }
}

/// Sign with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Denominator pushed out to at least [`STABILIZER`] in magnitude, keeping its
/// sign (zero counts as positive). Denominators already that large are left
/// untouched, so ratios between healthy neurons are exact.
pub fn stabilize(d: f64) -> f64 {
    if d.abs() >= STABILIZER {
        d
    } else if d >= 0.0 {
        STABILIZER
    } else {
        -STABILIZER
    }
}

pub fn div_safe(num: f64, den: f64) -> f64 {
    num / stabilize(den)
}

/// Standard matrix product of an `M×K` and a `K×N` tensor.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = match a.shape() {
        &[m, k] => (m, k),
        s => return dim_err(format!("matmul: left operand has shape {s:?}")),
    };
    let (k2, n) = match b.shape() {
        &[k2, n] => (k2, n),
        s => return dim_err(format!("matmul: right operand has shape {s:?}")),
    };
    if k != k2 {
        return dim_err(format!("matmul: inner dimensions {k} and {k2} disagree"));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

/// `W · x` for a row-major `out×in` matrix and a flat vector.
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// `Wᵀ · g` for a row-major `out×in` matrix.
pub(crate) fn matvec_t(w: &[f64], rows: usize, cols: usize, g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        let gv = g[r];
        if gv == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += gv * wv;
        }
    }
    out
}

/// Geometry of a 2-D convolution, validated once and shared by the forward
/// pass, its adjoint and the weight gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        in_shape: &[usize],
        kernel_shape: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (c_in, h, w) = match in_shape {
            &[c, h, w] => (c, h, w),
            s => return dim_err(format!("conv2d: input shape {s:?} is not C×H×W")),
        };
        let (c_out, kc, kh, kw) = match kernel_shape {
            &[a, b, c, d] => (a, b, c, d),
            s => return dim_err(format!("conv2d: kernel shape {s:?} is not rank 4")),
        };
        if kc != c_in {
            return dim_err(format!(
                "conv2d: kernel expects {kc} input channels, input has {c_in}"
            ));
        }
        if stride == 0 {
            return dim_err("conv2d: stride must be positive");
        }
        let out_dim = |n: usize, k: usize| -> Result<usize> {
            let padded = n + 2 * padding;
            if padded < k {
                return dim_err(format!(
                    "conv2d: kernel {k} larger than padded input {padded}"
                ));
            }
            Ok((padded - k) / stride + 1)
        };
        let out_h = out_dim(h, kh)?;
        let out_w = out_dim(w, kw)?;
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            padding,
            out_h,
            out_w,
        })
    }

    pub fn in_shape(&self) -> [usize; 3] {
        [self.c_in, self.h, self.w]
    }

    pub fn out_shape(&self) -> [usize; 3] {
        [self.c_out, self.out_h, self.out_w]
    }

    /// Input coordinate for output `o` and kernel tap `k`, or `None` when the
    /// tap falls on padding.
    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }

    /// Range of output columns whose source column for tap `kx` is in bounds.
    #[inline]
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let mut lo = 0;
        while lo < self.out_w && self.src(lo, kx, self.w).is_none() {
            lo += 1;
        }
        let mut hi = self.out_w;
        while hi > lo && self.src(hi - 1, kx, self.w).is_none() {
            hi -= 1;
        }
        (lo, hi)
    }
}

/// 2-D cross-correlation (no kernel flip).
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = ConvGeometry::new(input.shape(), kernels.shape(), stride, padding)?;
    Ok(conv2d_raw(&g, input.data(), kernels.data()))
}

pub(crate) fn conv2d_raw(g: &ConvGeometry, input: &[f64], kernels: &[f64]) -> Tensor {
    let plane_out = g.out_h * g.out_w;
    let mut out = vec![0.0; g.c_out * plane_out];
    for co in 0..g.c_out {
        let dst = &mut out[co * plane_out..(co + 1) * plane_out];
        for ci in 0..g.c_in {
            let src = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = kernels[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (lo, hi) = g.valid_cols(kx);
                    for oy in 0..g.out_h {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        let row = &src[iy * g.w..(iy + 1) * g.w];
                        let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                        for ox in lo..hi {
                            let ix = ox * g.stride + kx - g.padding;
                            drow[ox] += wv * row[ix];
                        }
                    }
                }
            }
        }
    }
    Tensor {
        shape: g.out_shape().to_vec(),
        data: out,
    }
}

/// Adjoint of [`conv2d`]: redistributes an output-shaped tensor back onto the
/// input grid through the same kernels.
pub fn conv2d_scatter(
    grad_out: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    in_shape: &[usize],
) -> Result<Tensor> {
    let g = ConvGeometry::new(in_shape, kernels.shape(), stride, padding)?;
    if grad_out.shape() != g.out_shape() {
        return dim_err(format!(
            "conv2d_scatter: got {:?}, convolution of {in_shape:?} produces {:?}",
            grad_out.shape(),
            g.out_shape()
        ));
    }
    Ok(conv2d_scatter_raw(&g, grad_out.data(), kernels.data()))
}

pub(crate) fn conv2d_scatter_raw(g: &ConvGeometry, grad_out: &[f64], kernels: &[f64]) -> Tensor {
    let plane_out = g.out_h * g.out_w;
    let mut out = vec![0.0; g.c_in * g.h * g.w];
    for co in 0..g.c_out {
        let gsrc = &grad_out[co * plane_out..(co + 1) * plane_out];
        for ci in 0..g.c_in {
            let dst = &mut out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = kernels[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (lo, hi) = g.valid_cols(kx);
                    for oy in 0..g.out_h {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        let grow = &gsrc[oy * g.out_w..(oy + 1) * g.out_w];
                        let drow = &mut dst[iy * g.w..(iy + 1) * g.w];
                        for ox in lo..hi {
                            let ix = ox * g.stride + kx - g.padding;
                            drow[ix] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
    Tensor {
        shape: g.in_shape().to_vec(),
        data: out,
    }
}

/// Gradient of `⟨conv2d(input, K), grad_out⟩` with respect to `K`.
pub(crate) fn conv2d_kernel_grad_raw(g: &ConvGeometry, input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let plane_out = g.out_h * g.out_w;
    let mut out = vec![0.0; g.c_out * g.c_in * g.kh * g.kw];
    for co in 0..g.c_out {
        let gsrc = &grad_out[co * plane_out..(co + 1) * plane_out];
        for ci in 0..g.c_in {
            let src = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let (lo, hi) = g.valid_cols(kx);
                    let mut acc = 0.0;
                    for oy in 0..g.out_h {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        let row = &src[iy * g.w..(iy + 1) * g.w];
                        let grow = &gsrc[oy * g.out_w..(oy + 1) * g.out_w];
                        for ox in lo..hi {
                            acc += grow[ox] * row[ox * g.stride + kx - g.padding];
                        }
                    }
                    out[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx] = acc;
                }
            }
        }
    }
    out
}

/// Integral upsampling factor, rejecting anything that would need
/// interpolation between source cells.
pub fn upsample_factor(factor: f64) -> Result<usize> {
    if !(factor >= 1.0) || factor.fract() != 0.0 || factor > 64.0 {
        return dim_err(format!("upsample factor {factor} is not a positive integer"));
    }
    Ok(factor as usize)
}

/// Nearest-neighbour upsampling of a `C×H×W` tensor.
pub fn upsample_nearest(input: &Tensor, factor: f64) -> Result<Tensor> {
    let f = upsample_factor(factor)?;
    let (c, h, w) = input.chw()?;
    let (oh, ow) = (h * f, w * f);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &input.data[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            let row = &plane[(oy / f) * w..(oy / f + 1) * w];
            out.extend((0..ow).map(|ox| row[ox / f]));
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

/// Adjoint of [`upsample_nearest`]: each source cell receives the sum of the
/// output cells it was copied into.
pub fn upsample_nearest_adjoint(grad_out: &Tensor, factor: f64) -> Result<Tensor> {
    let f = upsample_factor(factor)?;
    let (c, oh, ow) = grad_out.chw()?;
    if oh % f != 0 || ow % f != 0 {
        return dim_err(format!(
            "upsample adjoint: {oh}×{ow} is not a multiple of factor {f}"
        ));
    }
    let (h, w) = (oh / f, ow / f);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                out[(ch * h + oy / f) * w + ox / f] += grad_out.data[(ch * oh + oy) * ow + ox];
            }
        }
    }
    Tensor::new(&[c, h, w], out)
}

impl From<Tensor> for Vec<f64> {
    fn from(t: Tensor) -> Self {
        t.data
    }
}

impl TryFrom<(&[usize], Vec<f64>)> for Tensor {
    type Error = Error;

    fn try_from((shape, data): (&[usize], Vec<f64>)) -> Result<Self> {
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.data()[i * k + p] * b.data()[p * n + j];
                }
            }
        }
        out
    }

    fn naive_conv(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (c, h, w) = x.chw().unwrap();
        let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let at = |ch: usize, y: isize, xx: isize| -> f64 {
            if y < 0 || xx < 0 || y as usize >= h || xx as usize >= w {
                0.0
            } else {
                x.data()[(ch * h + y as usize) * w + xx as usize]
            }
        };
        let mut out = vec![0.0; co * oh * ow];
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let y = (oy * stride + ky) as isize - pad as isize;
                                let xx = (ox * stride + kx) as isize - pad as isize;
                                acc += k.data()[((o * c + ci) * kh + ky) * kw + kx] * at(ci, y, xx);
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        Tensor::new(&[co, oh, ow], out).unwrap()
    }

    #[test]
    fn matmul_identity_and_zero() {
        let v = Tensor::new(&[2, 1], vec![3.0, 4.0]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &v).unwrap(), v);
        let z = matmul(&Tensor::zeros(&[2, 3]), &random(&[3, 1], 1)).unwrap();
        assert_eq!(z, Tensor::zeros(&[2, 1]));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(&[4, 4], 7);
        let b = random(&[4, 4], 8);
        let got = matmul(&a, &b).unwrap();
        let want = naive_matmul(&a, &b);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
        assert_eq!(matmul(&a, &Tensor::identity(4)).unwrap(), a);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        assert!(matches!(
            matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn conv_window_sum() {
        let out = conv2d(&Tensor::ones(&[1, 3, 3]), &Tensor::ones(&[1, 1, 2, 2]), 1, 0).unwrap();
        assert_eq!(out, Tensor::full(&[1, 2, 2], 4.0));
        let z = conv2d(&random(&[2, 5, 5], 3), &Tensor::zeros(&[3, 2, 3, 3]), 1, 1).unwrap();
        assert_eq!(z, Tensor::zeros(&[3, 5, 5]));
    }

    #[test]
    fn conv_matches_naive_loop() {
        let x = random(&[1, 8, 8], 11);
        let k = random(&[2, 1, 3, 3], 12);
        let got = conv2d(&x, &k, 2, 0).unwrap();
        assert_eq!(got.shape(), &[2, 3, 3]);
        assert!(got.max_abs_diff(&naive_conv(&x, &k, 2, 0)) <= 1e-12);

        let x = random(&[3, 7, 6], 13);
        let k = random(&[2, 3, 3, 2], 14);
        let got = conv2d(&x, &k, 2, 1).unwrap();
        assert!(got.max_abs_diff(&naive_conv(&x, &k, 2, 1)) <= 1e-12);
    }

    #[test]
    fn conv_rejects_empty_output() {
        assert!(conv2d(&Tensor::ones(&[1, 2, 2]), &Tensor::ones(&[1, 1, 3, 3]), 1, 0).is_err());
        assert!(conv2d(&Tensor::ones(&[2, 4, 4]), &Tensor::ones(&[1, 1, 3, 3]), 1, 0).is_err());
    }

    #[test]
    fn scatter_single_window() {
        let out = conv2d_scatter(
            &Tensor::ones(&[1, 1, 1]),
            &Tensor::ones(&[1, 1, 2, 2]),
            1,
            0,
            &[1, 2, 2],
        )
        .unwrap();
        assert_eq!(out, Tensor::ones(&[1, 2, 2]));
        let z = conv2d_scatter(&Tensor::zeros(&[1, 1, 1]), &Tensor::ones(&[1, 1, 2, 2]), 1, 0, &[1, 2, 2])
            .unwrap();
        assert_eq!(z, Tensor::zeros(&[1, 2, 2]));
    }

    #[test]
    fn scatter_is_adjoint() {
        for (seed, pad) in [(21u64, 0usize), (22, 1)] {
            let x = random(&[1, 6, 6], seed);
            let k = random(&[1, 1, 3, 3], seed + 100);
            let y = conv2d(&x, &k, 2, pad).unwrap();
            let g = random(y.shape(), seed + 200);
            let lhs = y.dot(&g).unwrap();
            let rhs = x.dot(&conv2d_scatter(&g, &k, 2, pad, x.shape()).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn upsample_block_replication() {
        let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample_nearest(&x, 2.0).unwrap();
        #[rustfmt::skip]
        let want = vec![
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(y.data(), want.as_slice());
        let c = upsample_nearest(&Tensor::full(&[2, 3, 3], 0.7), 3.0).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn upsample_matches_index_map() {
        let x = random(&[1, 2, 2], 31);
        let y = upsample_nearest(&x, 3.0).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(y.data()[i * 6 + j], x.data()[(i / 3) * 2 + j / 3]);
            }
        }
        assert!((y.sum() - 9.0 * x.sum()).abs() < 1e-12);
        assert!(upsample_nearest(&x, 2.5).is_err());
    }

    #[test]
    fn pointwise_ops() {
        let t = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        assert_eq!(t.relu().data(), &[0.0, 0.0, 2.0]);
        let s = Tensor::from_vec(vec![-3.0, 0.0, 5.0]).sign();
        assert_eq!(s.data(), &[-1.0, 0.0, 1.0]);
        assert_eq!(div_safe(1.0, 0.0), 1.0 / 1e-9);
        assert_eq!(div_safe(1.0, -2.0), -0.5);
        assert_eq!(div_safe(1.0, -1e-12), -1.0 / 1e-9);
        assert!(t.add(&Tensor::zeros(&[2])).is_err());
        assert_eq!(t.clamp(-0.5, 1.0).data(), &[-0.5, 0.0, 1.0]);
    }
}
