//! Recall@m for single-feature corruptions and pixel-level precision-recall
//! for heatmaps.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// Number of thresholds on a precision-recall curve.
pub const PR_THRESHOLDS: usize = 1000;

/// Position of `target` when features are sorted by descending attribution,
/// ties going to the lower index.
pub fn feature_rank(attribution: &[f64], target: usize) -> usize {
    let v = attribution[target];
    attribution
        .iter()
        .enumerate()
        .filter(|&(j, &a)| a > v || (a == v && j < target))
        .count()
}

/// Feature indices ordered by descending attribution, ties to the lower index.
pub fn ranked_features(attribution: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..attribution.len()).collect();
    idx.sort_by(|&a, &b| attribution[b].total_cmp(&attribution[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallPoint {
    pub m: usize,
    pub recall: f64,
    pub n_plus: usize,
    pub n_minus: usize,
}

/// Recall for every `m = 1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    pub points: Vec<RecallPoint>,
}

impl RecallReport {
    pub fn at(&self, m: usize) -> Option<&RecallPoint> {
        self.points.get(m.checked_sub(1)?)
    }
}

fn check_records(targets: &[usize], attributions: &[Tensor]) -> Result<usize> {
    if targets.is_empty() {
        return Err(Error::Empty("corruption records".into()));
    }
    if targets.len() != attributions.len() {
        return dim_err(format!(
            "{} records but {} attributions",
            targets.len(),
            attributions.len()
        ));
    }
    let features = attributions[0].len();
    for (t, a) in targets.iter().zip(attributions) {
        if a.len() != features {
            return dim_err("attribution vectors differ in length");
        }
        if *t >= features {
            return dim_err(format!("corrupted feature {t} outside {features} attributions"));
        }
    }
    Ok(features)
}

/// Fraction of records whose corrupted feature is among the `m` highest
/// attributions.
pub fn recall_at_m(targets: &[usize], attributions: &[Tensor], m: usize) -> Result<RecallPoint> {
    let features = check_records(targets, attributions)?;
    if m == 0 || m > features {
        return dim_err(format!("m = {m} outside 1..={features}"));
    }
    let n_plus = targets
        .iter()
        .zip(attributions)
        .filter(|(&t, a)| feature_rank(a.data(), t) < m)
        .count();
    let n_minus = targets.len() - n_plus;
    Ok(RecallPoint {
        m,
        recall: n_plus as f64 / targets.len() as f64,
        n_plus,
        n_minus,
    })
}

pub fn recall_report(targets: &[usize], attributions: &[Tensor]) -> Result<RecallReport> {
    let features = check_records(targets, attributions)?;
    let ranks: Vec<usize> = targets
        .iter()
        .zip(attributions)
        .map(|(&t, a)| feature_rank(a.data(), t))
        .collect();
    let points = (1..=features)
        .map(|m| {
            let n_plus = ranks.iter().filter(|&&r| r < m).count();
            RecallPoint {
                m,
                recall: n_plus as f64 / ranks.len() as f64,
                n_plus,
                n_minus: ranks.len() - n_plus,
            }
        })
        .collect();
    Ok(RecallReport { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub ap: f64,
}

/// Thresholds at 1000 evenly spaced rank positions of the pooled relevance
/// values, each placed halfway between the value at that position and the
/// next larger distinct value. The predicted sets therefore depend only on
/// the ordering of the values.
pub fn rank_thresholds(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return vec![f64::NEG_INFINITY; PR_THRESHOLDS];
    }
    let n = sorted.len();
    (1..=PR_THRESHOLDS)
        .map(|i| {
            let v = sorted[i * n / (PR_THRESHOLDS + 1)];
            let mut j = distinct.partition_point(|&u| u < v);
            if j == distinct.len() - 1 {
                j -= 1;
            }
            0.5 * (distinct[j] + distinct[j + 1])
        })
        .collect()
}

/// Precision-recall curve over the pixels of a group of images, pooled.
/// A pixel is predicted damaged when its relevance exceeds the threshold;
/// precision with no predictions counts as 1.
pub fn pr_curve_pixels(maps: &[Tensor], masks: &[Tensor]) -> Result<PrCurve> {
    if maps.is_empty() {
        return Err(Error::Empty("relevance maps".into()));
    }
    if maps.len() != masks.len() {
        return dim_err(format!("{} maps but {} masks", maps.len(), masks.len()));
    }
    let mut pixels: Vec<(f64, bool)> = Vec::new();
    for (i, (map, mask)) in maps.iter().zip(masks).enumerate() {
        if map.len() != mask.len() {
            return dim_err(format!("image {i}: map and mask differ in size"));
        }
        pixels.extend(map.data().iter().zip(mask.data()).map(|(&v, &k)| (v, k > 0.5)));
    }
    if pixels.iter().any(|p| !p.0.is_finite()) {
        return Err(Error::Degenerate("relevance map contains non-finite values".into()));
    }
    let positives = pixels.iter().filter(|p| p.1).count();
    if positives == 0 {
        return Err(Error::Degenerate("group has no damaged pixels".into()));
    }
    let values: Vec<f64> = pixels.iter().map(|p| p.0).collect();
    let thresholds = rank_thresholds(&values);

    pixels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pixels.len();
    // tp_above[k] = damaged pixels among sorted[k..]
    let mut tp_above = vec![0usize; n + 1];
    for k in (0..n).rev() {
        tp_above[k] = tp_above[k + 1] + usize::from(pixels[k].1);
    }
    let points = thresholds
        .iter()
        .map(|&t| {
            let k = pixels.partition_point(|p| p.0 <= t);
            let predicted = n - k;
            let tp = tp_above[k];
            PrPoint {
                threshold: t,
                precision: if predicted == 0 { 1.0 } else { tp as f64 / predicted as f64 },
                recall: tp as f64 / positives as f64,
            }
        })
        .collect::<Vec<_>>();
    let ap = curve_ap(&points)?;
    Ok(PrCurve { points, ap })
}

/// Trapezoidal area under a precision-recall curve, points sorted by recall
/// ascending (ties by precision descending).
pub fn average_precision(recall: &[f64], precision: &[f64]) -> Result<f64> {
    if recall.len() != precision.len() {
        return dim_err("recall and precision differ in length");
    }
    if recall.len() < 2 {
        return Err(Error::Degenerate(format!(
            "average precision needs at least 2 points, got {}",
            recall.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = recall.iter().copied().zip(precision.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum())
}

/// AP of a threshold sweep. The curve is extended flat to recall 0 from its
/// lowest-recall point, so an uninformative sweep scores the base rate.
pub fn curve_ap(points: &[PrPoint]) -> Result<f64> {
    let first = points
        .iter()
        .min_by(|a, b| a.recall.total_cmp(&b.recall).then(b.precision.total_cmp(&a.precision)))
        .ok_or_else(|| Error::Empty("precision-recall curve".into()))?;
    let mut recall = vec![0.0];
    let mut precision = vec![first.precision];
    recall.extend(points.iter().map(|p| p.recall));
    precision.extend(points.iter().map(|p| p.precision));
    average_precision(&recall, &precision)
}
