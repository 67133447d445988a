//! Binary model files.
//!
//! ```text
//! magic        "LRPAE" 0x01                       6 bytes
//! layer_count  u32
//! input_rank   u32, then input_rank × u32 dims
//! per layer    u8 kind tag, then
//!   0 dense    u32 out, u32 in, u8 has_bias, out·in f32 weights, [out f32 bias]
//!   1 conv2d   u32 c_out, c_in, kh, kw, stride, padding, u8 has_bias,
//!              c_out·c_in·kh·kw f32 kernels, [c_out f32 bias]
//!   2 relu     (no payload)
//!   3 upsample f32 factor
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{Conv2d, Dense, Layer, Model};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"LRPAE";
const VERSION: u8 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_UPSAMPLE: u8 = 3;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(buf: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    put_u32(&mut buf, model.layers().len());
    put_u32(&mut buf, model.input_shape().len());
    for &d in model.input_shape() {
        put_u32(&mut buf, d);
    }
    for layer in model.layers() {
        match layer {
            Layer::Dense(d) => {
                buf.push(TAG_DENSE);
                let (out, inp) = d.units();
                put_u32(&mut buf, out);
                put_u32(&mut buf, inp);
                buf.push(d.bias.is_some() as u8);
                put_f32s(&mut buf, d.weights.data());
                if let Some(b) = &d.bias {
                    put_f32s(&mut buf, b.data());
                }
            }
            Layer::Conv2d(c) => {
                buf.push(TAG_CONV);
                for &d in c.kernels.shape() {
                    put_u32(&mut buf, d);
                }
                put_u32(&mut buf, c.stride);
                put_u32(&mut buf, c.padding);
                buf.push(c.bias.is_some() as u8);
                put_f32s(&mut buf, c.kernels.data());
                if let Some(b) = &c.bias {
                    put_f32s(&mut buf, b.data());
                }
            }
            Layer::Relu => buf.push(TAG_RELU),
            Layer::Upsample { factor } => {
                buf.push(TAG_UPSAMPLE);
                buf.extend_from_slice(&(*factor as f32).to_le_bytes());
            }
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &dyn Fn() -> String) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(what()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &dyn Fn() -> String) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &dyn Fn() -> String) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn f32s(&mut self, n: usize, what: &dyn Fn() -> String) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::Malformed(format!("{} is too large", what())))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let version = r.u8(&|| "version byte".into())?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let count = r.u32(&|| "layer count".into())?;
    let rank = r.u32(&|| "input rank".into())?;
    if rank == 0 || rank > 8 {
        return Err(Error::Malformed(format!("input rank {rank}")));
    }
    let input_shape = (0..rank)
        .map(|_| r.u32(&|| "input shape".into()))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let at = |field: &'static str| move || format!("layer {i} {field}");
        let tag = r.u8(&at("kind tag"))?;
        let layer = match tag {
            TAG_DENSE => {
                let out = r.u32(&at("header"))?;
                let inp = r.u32(&at("header"))?;
                let has_bias = r.u8(&at("header"))? != 0;
                let w = r.f32s(out * inp, &at("weights"))?;
                let b = if has_bias {
                    Some(Tensor::new(&[out], r.f32s(out, &at("bias"))?)?)
                } else {
                    None
                };
                Layer::Dense(Dense::new(Tensor::new(&[out, inp], w)?, b)?)
            }
            TAG_CONV => {
                let mut dims = [0usize; 4];
                for d in &mut dims {
                    *d = r.u32(&at("header"))?;
                }
                let stride = r.u32(&at("header"))?;
                let padding = r.u32(&at("header"))?;
                let has_bias = r.u8(&at("header"))? != 0;
                let w = r.f32s(dims.iter().product(), &at("weights"))?;
                let b = if has_bias {
                    Some(Tensor::new(&[dims[0]], r.f32s(dims[0], &at("bias"))?)?)
                } else {
                    None
                };
                Layer::Conv2d(Conv2d::new(Tensor::new(&dims, w)?, b, stride, padding)?)
            }
            TAG_RELU => Layer::Relu,
            TAG_UPSAMPLE => {
                let f = r.take(4, &at("factor"))?;
                Layer::Upsample {
                    factor: f32::from_le_bytes(f.try_into().unwrap()) as f64,
                }
            }
            other => return Err(Error::Malformed(format!("layer {i} has unknown kind tag {other}"))),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after last layer",
            bytes.len() - r.pos
        )));
    }
    Model::new(layers, input_shape)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::{build_table3_model, conv_autoencoder, tabular_mlp, Table3Scale};
    use super::*;

    #[test]
    fn round_trip_is_exact_for_fresh_models() {
        for model in [
            tabular_mlp(21, true, 7).unwrap(),
            conv_autoencoder(true, 8).unwrap(),
            build_table3_model(Table3Scale::Desk, false, 9).unwrap(),
        ] {
            let bytes = encode_model(&model);
            let back = decode_model(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(encode_model(&back), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lrpae");
        let model = tabular_mlp(5, false, 1).unwrap();
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_model(&tabular_mlp(5, true, 1).unwrap());
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::BadMagic)));
        bytes[0] = b'L';
        bytes[5] = 2;
        assert!(matches!(decode_model(&bytes), Err(Error::Version { found: 2, .. })));
    }

    #[test]
    fn truncation_names_the_layer() {
        let bytes = encode_model(&tabular_mlp(5, true, 1).unwrap());
        match decode_model(&bytes[..bytes.len() - 3]) {
            Err(Error::Truncated(what)) => assert!(what.starts_with("layer 6"), "{what}"),
            other => panic!("expected truncation, got {other:?}"),
        }
        match decode_model(&bytes[..40]) {
            Err(Error::Truncated(what)) => assert_eq!(what, "layer 0 weights"),
            other => panic!("expected truncation, got {other:?}"),
        }
    }
}
