//! On-disk layout of datasets: a `manifest.txt` of `key = value` lines next to
//! raw little-endian `f32` blobs, one per split.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::images::{DamageKind, DamagedImage, ImageDataset};
use super::tabular::TabularDataset;
use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Malformed(format!("manifest is missing `{key}`")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Malformed(format!("manifest value `{key} = {raw}` is invalid")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("line {}: expected `key = value`", n + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Writes tensors back to back as little-endian `f32`.
pub fn write_blob(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let n: usize = tensors.iter().map(Tensor::len).sum();
    let mut buf = Vec::with_capacity(4 * n);
    for t in tensors {
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads `count` tensors of `shape` from a blob written by [`write_blob`].
pub fn read_blob(path: &Path, shape: &[usize], count: usize) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path)?;
    let per: usize = shape.iter().product();
    if bytes.len() != 4 * per * count {
        return Err(Error::Truncated(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            4 * per * count,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    values
        .chunks(per.max(1))
        .take(count)
        .map(|c| Tensor::new(shape, c.to_vec()))
        .collect()
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| p.parse().map_err(|_| Error::Malformed(format!("bad shape `{s}`"))))
        .collect()
}

pub fn save_tabular(dir: &Path, data: &TabularDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let features = data.train.first().map_or(0, Tensor::len);
    let mut m = Manifest::new();
    m.set("kind", "tabular")
        .set("seed", data.seed)
        .set("latent_dim", data.latent_dim)
        .set("features", features)
        .set("train", data.train.len())
        .set("val", data.val.len())
        .set("test", data.test.len());
    for (name, split) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        write_blob(&dir.join(format!("{name}.f32")), split)?;
    }
    m.write(&dir.join(MANIFEST_FILE))
}

pub fn load_tabular(dir: &Path) -> Result<TabularDataset> {
    let m = Manifest::read(&dir.join(MANIFEST_FILE))?;
    if m.get("kind") != Some("tabular") {
        return Err(Error::Malformed(format!("{} is not a tabular dataset", dir.display())));
    }
    let features: usize = m.parse_value("features")?;
    let split = |name: &str| -> Result<Vec<Tensor>> {
        read_blob(&dir.join(format!("{name}.f32")), &[features], m.parse_value(name)?)
    };
    Ok(TabularDataset {
        train: split("train")?,
        val: split("val")?,
        test: split("test")?,
        seed: m.parse_value("seed")?,
        latent_dim: m.parse_value("latent_dim")?,
    })
}

pub fn save_images(dir: &Path, data: &ImageDataset, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let shape = [1, data.size, data.size];
    let kinds: Vec<DamageKind> = DamageKind::ALL
        .into_iter()
        .filter(|k| data.test.iter().any(|d| d.kind == *k))
        .collect();
    let mut m = Manifest::new();
    m.set("kind", "images")
        .set("seed", seed)
        .set("shape", shape_str(&shape))
        .set("train", data.train.len())
        .set("val", data.val.len())
        .set(
            "damage_kinds",
            kinds.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        );
    write_blob(&dir.join("train.f32"), &data.train)?;
    write_blob(&dir.join("val.f32"), &data.val)?;
    for kind in &kinds {
        let items: Vec<&DamagedImage> = data.test_of(*kind).collect();
        m.set(&format!("test_{kind}"), items.len());
        let collect = |f: fn(&DamagedImage) -> &Tensor| items.iter().map(|d| f(d).clone()).collect::<Vec<_>>();
        write_blob(&dir.join(format!("test_{kind}.f32")), &collect(|d| &d.image))?;
        write_blob(&dir.join(format!("clean_{kind}.f32")), &collect(|d| &d.clean))?;
        write_blob(&dir.join(format!("mask_{kind}.f32")), &collect(|d| &d.mask))?;
    }
    m.write(&dir.join(MANIFEST_FILE))
}

pub fn load_images(dir: &Path) -> Result<ImageDataset> {
    let m = Manifest::read(&dir.join(MANIFEST_FILE))?;
    if m.get("kind") != Some("images") {
        return Err(Error::Malformed(format!("{} is not an image dataset", dir.display())));
    }
    let shape = parse_shape(m.require("shape")?)?;
    if shape.len() != 3 || shape[1] != shape[2] {
        return dim_err(format!("unsupported image shape {shape:?}"));
    }
    let train = read_blob(&dir.join("train.f32"), &shape, m.parse_value("train")?)?;
    let val = read_blob(&dir.join("val.f32"), &shape, m.parse_value("val")?)?;
    let mut test = Vec::new();
    for name in m.require("damage_kinds")?.split(',').filter(|s| !s.is_empty()) {
        let kind: DamageKind = name.parse()?;
        let n: usize = m.parse_value(&format!("test_{kind}"))?;
        let images = read_blob(&dir.join(format!("test_{kind}.f32")), &shape, n)?;
        let clean = read_blob(&dir.join(format!("clean_{kind}.f32")), &shape, n)?;
        let masks = read_blob(&dir.join(format!("mask_{kind}.f32")), &shape, n)?;
        for ((image, clean), mask) in images.into_iter().zip(clean).zip(masks) {
            test.push(DamagedImage {
                clean,
                image,
                mask,
                kind,
            });
        }
    }
    Ok(ImageDataset {
        size: shape[1],
        train,
        val,
        test,
    })
}

/// Rescales to `[0, 1]` by the tensor's own minimum and maximum; a constant
/// tensor maps to zeros.
pub fn normalize_minmax(t: &Tensor) -> Tensor {
    let lo = t.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return Tensor::zeros(t.shape());
    }
    t.map(|v| (v - lo) / span)
}

/// Encodes a single-channel image with values in `[0, 1]` as binary PGM.
pub fn encode_pgm(img: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = match img.shape() {
        [h, w] => (1, *h, *w),
        _ => img.chw()?,
    };
    if c != 1 {
        return dim_err(format!("PGM needs one channel, got {c}"));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write_pgm(path: &Path, img: &Tensor) -> Result<()> {
    fs::write(path, encode_pgm(img)?)?;
    Ok(())
}
