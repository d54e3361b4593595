//! Small statistics helpers: correlations, robust location and scale,
//! permutation tests.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch { expected: x.len(), actual: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::Undefined("correlation needs at least two points".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Ranks starting at 1, ties get their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&ranks(x), &ranks(y))
}

pub fn median(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Undefined("median of an empty set".into()));
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median absolute deviation from the median.
pub fn mad(x: &[f64]) -> Result<f64> {
    let m = median(x)?;
    let dev: Vec<f64> = x.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// Centered moving median with a window of `window` points (truncated at the
/// ends). `xs` must be sorted; the window is over positions, not distance.
pub fn moving_median(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            median(&values[lo..hi])
        })
        .collect()
}

/// Ratio of between-group to total sum of squares for a two-group split.
pub fn between_group_fraction(values: &[f64], in_group: &[bool]) -> f64 {
    let m = mean(values);
    let total: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut between = 0.0;
    for flag in [true, false] {
        let g: Vec<f64> = values.iter().zip(in_group).filter(|(_, &f)| f == flag).map(|(v, _)| *v).collect();
        if !g.is_empty() {
            between += g.len() as f64 * (mean(&g) - m).powi(2);
        }
    }
    between / total
}

/// One-sided permutation test for the between-group fraction: the p-value
/// `(1 + #{perm >= observed}) / (1 + permutations)` over random relabelings
/// with the same group sizes. Returns `(observed, p)`.
pub fn permutation_test(values: &[f64], in_group: &[bool], permutations: usize, seed: u64) -> Result<(f64, f64)> {
    if values.len() != in_group.len() {
        return Err(Error::ShapeMismatch { expected: values.len(), actual: in_group.len() });
    }
    let observed = between_group_fraction(values, in_group);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = in_group.to_vec();
    let mut hits = 0usize;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if between_group_fraction(values, &labels) >= observed {
            hits += 1;
        }
    }
    Ok((observed, (1 + hits) as f64 / (1 + permutations) as f64))
}
