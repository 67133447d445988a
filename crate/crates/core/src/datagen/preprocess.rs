use rand::Rng;

use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// Standard deviation of the smoothing filter.
pub const GAUSSIAN_SIGMA: f64 = 0.5;

/// Normalised 3×3 Gaussian kernel, row-major.
pub fn gaussian_kernel(sigma: f64) -> [f64; 9] {
    let mut k = [0.0; 9];
    for (i, v) in k.iter_mut().enumerate() {
        let (dy, dx) = ((i / 3) as f64 - 1.0, (i % 3) as f64 - 1.0);
        *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

fn to_gray(img: &Tensor) -> Result<(Vec<f64>, usize, usize)> {
    let (c, h, w) = img.chw()?;
    let plane = h * w;
    let d = img.data();
    let gray = match c {
        1 => d.to_vec(),
        3 => (0..plane)
            .map(|i| 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i])
            .collect(),
        _ => return dim_err(format!("expected 1 or 3 channels, got {c}")),
    };
    Ok((gray, h, w))
}

/// 3×3 filter with replicated borders.
fn smooth(src: &[f64], h: usize, w: usize, k: &[f64; 9]) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        src[y * w + x]
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * at(y + (i / 3) as isize - 1, x + (i % 3) as isize - 1);
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

/// Bilinear resize with pixel-centre alignment and clamped borders.
fn resize(src: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    let sample = |pos: f64, n: usize| {
        let p = pos.clamp(0.0, (n - 1) as f64);
        let lo = p.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, p - lo as f64)
    };
    let mut out = Vec::with_capacity(th * tw);
    for y in 0..th {
        let (y0, y1, fy) = sample((y as f64 + 0.5) * h as f64 / th as f64 - 0.5, h);
        for x in 0..tw {
            let (x0, x1, fx) = sample((x as f64 + 0.5) * w as f64 / tw as f64 - 0.5, w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Grayscale conversion, 3×3 Gaussian smoothing, bilinear resize to
/// `target × target` and division by `max_value` (e.g. 255 for 8-bit input),
/// clamped to `[0, 1]`.
pub fn preprocess_image(img: &Tensor, target: usize, max_value: f64) -> Result<Tensor> {
    if target == 0 || !(max_value > 0.0) {
        return dim_err(format!("bad preprocessing target {target} / scale {max_value}"));
    }
    let (gray, h, w) = to_gray(img)?;
    let smoothed = smooth(&gray, h, w, &gaussian_kernel(GAUSSIAN_SIGMA));
    let resized = resize(&smoothed, h, w, target, target);
    Tensor::new(
        &[1, target, target],
        resized.into_iter().map(|v| (v / max_value).clamp(0.0, 1.0)).collect(),
    )
}

/// Rotates by `quarter_turns × 90°` counter-clockwise, then flips.
pub fn augment_with(img: &Tensor, quarter_turns: usize, hflip: bool, vflip: bool) -> Result<Tensor> {
    let (c, h, w) = img.chw()?;
    if h != w && quarter_turns % 2 == 1 {
        return dim_err("odd quarter turns need a square image");
    }
    let n = h;
    let d = img.data();
    let mut out = vec![0.0; d.len()];
    for ch in 0..c {
        for y in 0..n {
            for x in 0..w {
                let (mut sy, mut sx) = (y, x);
                if vflip {
                    sy = n - 1 - sy;
                }
                if hflip {
                    sx = w - 1 - sx;
                }
                for _ in 0..quarter_turns % 4 {
                    // output (r, c) of a CCW turn reads input (c, n−1−r)
                    (sy, sx) = (sx, n - 1 - sy);
                }
                out[ch * n * w + y * w + x] = d[ch * n * w + sy * w + sx];
            }
        }
    }
    Tensor::new(img.shape(), out)
}

/// Random right-angle rotation composed with random horizontal and vertical
/// flips.
pub fn augment<R: Rng + ?Sized>(img: &Tensor, rng: &mut R) -> Result<Tensor> {
    let turns = rng.gen_range(0..4);
    let hflip = rng.gen_bool(0.5);
    let vflip = rng.gen_bool(0.5);
    augment_with(img, turns, hflip, vflip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_normalised() {
        let k = gaussian_kernel(GAUSSIAN_SIGMA);
        assert!((k.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert_eq!(k[0], k[8]);
        assert!(k[4] > k[1] && k[1] > k[0]);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Tensor::full(&[3, 10, 14], 127.5);
        let out = preprocess_image(&img, 8, 255.0).unwrap();
        assert_eq!(out.shape(), &[1, 8, 8]);
        assert!(out.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn impulse_response_is_kernel_centre() {
        let mut img = Tensor::zeros(&[1, 5, 5]);
        img.data_mut()[12] = 1.0;
        let out = preprocess_image(&img, 5, 1.0).unwrap();
        let g = |d2: f64| (-d2 / (2.0 * 0.25)).exp();
        let centre = 1.0 / (1.0 + 4.0 * g(1.0) + 4.0 * g(2.0));
        assert!((out.data()[12] - centre).abs() < 1e-12);
    }

    #[test]
    fn augmentation_identities() {
        let img = Tensor::new(&[1, 3, 3], (0..9).map(f64::from).collect()).unwrap();
        assert_eq!(augment_with(&img, 0, false, false).unwrap(), img);
        let half = augment_with(&img, 2, false, false).unwrap();
        assert_eq!(half.data(), &[8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(augment_with(&half, 2, false, false).unwrap(), img);
        let quarter = augment_with(&img, 1, false, false).unwrap();
        assert_eq!(quarter.data(), &[2.0, 5.0, 8.0, 1.0, 4.0, 7.0, 0.0, 3.0, 6.0]);
        assert_eq!(augment_with(&img, 0, true, true).unwrap(), half);
    }

    #[test]
    fn augmentation_preserves_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Tensor::new(&[1, 6, 6], (0..36).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let mut want = img.data().to_vec();
        want.sort_by(f64::total_cmp);
        for t in 0..4 {
            for h in [false, true] {
                for v in [false, true] {
                    let mut got = augment_with(&img, t, h, v).unwrap().into_data();
                    got.sort_by(f64::total_cmp);
                    assert_eq!(got, want);
                }
            }
        }
    }
}
