use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// Allowed range of the damaged-area fraction of one image.
pub const DAMAGE_FRACTION: (f64, f64) = (0.01, 0.10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DamageKind {
    Blob,
    Scratch,
    Misplace,
}

impl DamageKind {
    pub const ALL: [DamageKind; 3] = [DamageKind::Blob, DamageKind::Scratch, DamageKind::Misplace];
}

impl fmt::Display for DamageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DamageKind::Blob => "blob",
            DamageKind::Scratch => "scratch",
            DamageKind::Misplace => "misplace",
        })
    }
}

impl FromStr for DamageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blob" => Ok(DamageKind::Blob),
            "scratch" => Ok(DamageKind::Scratch),
            "misplace" => Ok(DamageKind::Misplace),
            other => Err(Error::Config(format!(
                "unknown damage kind `{other}` (blob|scratch|misplace)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageCounts {
    pub train: usize,
    pub val: usize,
    /// Damaged test images per damage kind.
    pub test_per_kind: usize,
}

impl Default for ImageCounts {
    fn default() -> Self {
        Self {
            train: 2000,
            val: 200,
            test_per_kind: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamagedImage {
    pub clean: Tensor,
    pub image: Tensor,
    /// 1 on damaged pixels, 0 elsewhere.
    pub mask: Tensor,
    pub kind: DamageKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub size: usize,
    pub train: Vec<Tensor>,
    pub val: Vec<Tensor>,
    pub test: Vec<DamagedImage>,
}

impl ImageDataset {
    pub fn test_of(&self, kind: DamageKind) -> impl Iterator<Item = &DamagedImage> {
        self.test.iter().filter(move |d| d.kind == kind)
    }
}

fn quantize(v: f64) -> f64 {
    v.clamp(0.0, 1.0) as f32 as f64
}

/// Textured disk or rectangle on a dark, slightly noisy background.
fn clean_image(size: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let s = size as f64;
    let bg = rng.gen_range(0.05..0.15);
    let fg = rng.gen_range(0.55..0.8);
    let cx = s / 2.0 + rng.gen_range(-0.05..0.05) * s;
    let cy = s / 2.0 + rng.gen_range(-0.05..0.05) * s;
    let disk = rng.gen_bool(0.5);
    let r = rng.gen_range(0.28..0.36) * s;
    let (hw, hh) = (rng.gen_range(0.25..0.35) * s, rng.gen_range(0.25..0.35) * s);
    let period = rng.gen_range(0.12..0.2) * s;
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let inside = if disk {
                dx * dx + dy * dy <= r * r
            } else {
                dx.abs() <= hw && dy.abs() <= hh
            };
            let noise = rng.gen_range(-0.02..0.02);
            let v = if inside {
                let u = (dx * ca + dy * sa) / period;
                fg + 0.1 * (2.0 * std::f64::consts::PI * u).sin() + noise
            } else {
                bg + noise
            };
            data.push(quantize(v));
        }
    }
    Tensor::new(&[1, size, size], data).unwrap()
}

/// Moves a pixel value by `delta` away from the nearer end of `[0, 1]`.
fn perturb(v: f64, delta: f64) -> f64 {
    if v < 0.5 {
        v + delta
    } else {
        v - delta
    }
}

/// Region covered by one damage instance.
fn damage_region(kind: DamageKind, size: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let s = size as f64;
    let mut region = vec![false; size * size];
    match kind {
        DamageKind::Blob => {
            let area = rng.gen_range(0.02..0.07) * s * s;
            let aspect = rng.gen_range(0.6..1.6);
            let rx = (area / std::f64::consts::PI * aspect).sqrt();
            let ry = (area / std::f64::consts::PI / aspect).sqrt();
            let cx = rng.gen_range(0.3..0.7) * s;
            let cy = rng.gen_range(0.3..0.7) * s;
            for y in 0..size {
                for x in 0..size {
                    let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
                    region[y * size + x] = dx * dx + dy * dy <= 1.0;
                }
            }
        }
        DamageKind::Scratch => {
            let width = (s / 32.0).max(2.0);
            let len = rng.gen_range(0.4..0.8) * s;
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (ux, uy) = (angle.cos(), angle.sin());
            let cx = rng.gen_range(0.35..0.65) * s;
            let cy = rng.gen_range(0.35..0.65) * s;
            for y in 0..size {
                for x in 0..size {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    let along = dx * ux + dy * uy;
                    let across = -dx * uy + dy * ux;
                    region[y * size + x] = along.abs() <= len / 2.0 && across.abs() <= width / 2.0;
                }
            }
        }
        DamageKind::Misplace => {
            let side = (rng.gen_range(0.03..0.08f64).sqrt() * s).round() as usize;
            let x0 = rng.gen_range(0..size - side);
            let y0 = rng.gen_range(0..size - side);
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    region[y * size + x] = true;
                }
            }
        }
    }
    region
}

/// Applies one damage to `clean` and returns the damaged image and its mask.
/// Every masked pixel changes and no other pixel does.
pub fn damage_image(clean: &Tensor, kind: DamageKind, rng: &mut ChaCha8Rng) -> Result<(Tensor, Tensor)> {
    let (c, h, w) = clean.chw()?;
    if c != 1 || h != w {
        return dim_err(format!("damage expects a square grayscale image, got {:?}", clean.shape()));
    }
    let size = h;
    let total = (size * size) as f64;
    for _ in 0..100 {
        let region = damage_region(kind, size, rng);
        let frac = region.iter().filter(|&&b| b).count() as f64 / total;
        if frac < DAMAGE_FRACTION.0 || frac > DAMAGE_FRACTION.1 {
            continue;
        }
        let src = clean.data();
        let mut out = src.to_vec();
        match kind {
            DamageKind::Blob | DamageKind::Scratch => {
                let delta = rng.gen_range(0.3..0.45);
                for (i, &inside) in region.iter().enumerate() {
                    if inside {
                        out[i] = quantize(perturb(src[i], delta));
                    }
                }
            }
            DamageKind::Misplace => {
                // The patch comes from the diagonally opposite quadrant. Pixels
                // too close to what they replace are perturbed instead.
                let delta = rng.gen_range(0.3..0.45);
                let shift = size / 2;
                for (i, &inside) in region.iter().enumerate() {
                    if inside {
                        let (y, x) = (i / size, i % size);
                        let j = ((y + shift) % size) * size + (x + shift) % size;
                        let moved = src[j];
                        let v = if (moved - src[i]).abs() >= 0.3 { moved } else { perturb(src[i], delta) };
                        out[i] = quantize(v);
                    }
                }
            }
        }
        let mask: Vec<f64> = region
            .iter()
            .zip(out.iter().zip(src))
            .map(|(&r, (a, b))| if r && a != b { 1.0 } else { 0.0 })
            .collect();
        let shape = clean.shape();
        return Ok((Tensor::new(shape, out)?, Tensor::new(shape, mask)?));
    }
    Err(Error::Degenerate(format!("could not place {kind} damage within the area range")))
}

/// Seeded image dataset with clean train/val images and damaged test images.
/// Training images are augmented with right-angle rotations and flips.
pub fn gen_images(seed: u64, size: usize, counts: ImageCounts, kinds: &[DamageKind]) -> Result<ImageDataset> {
    if size != 64 && size != 128 {
        return Err(Error::Config(format!("image size must be 64 or 128, got {size}")));
    }
    if counts.train == 0 || counts.val == 0 {
        return Err(Error::Config("image train and val counts must be nonempty".into()));
    }
    let stream = |id: u64, i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((id << 40) | (i as u64 + 1));
        rng
    };
    let train = (0..counts.train)
        .map(|i| {
            let mut rng = stream(1, i);
            let img = clean_image(size, &mut rng);
            super::augment(&img, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let val = (0..counts.val)
        .map(|i| clean_image(size, &mut stream(2, i)))
        .collect();
    let mut test = Vec::new();
    for (k, &kind) in kinds.iter().enumerate() {
        for i in 0..counts.test_per_kind {
            let mut rng = stream(3 + k as u64, i);
            let clean = clean_image(size, &mut rng);
            let (image, mask) = damage_image(&clean, kind, &mut rng)?;
            test.push(DamagedImage {
                clean,
                image,
                mask,
                kind,
            });
        }
    }
    Ok(ImageDataset { size, train, val, test })
}
