//! Outlier and subgroup tests on the influence of training points.

use serde::{Deserialize, Serialize};

use super::stats::{mad, median, permutation_test};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadOutcome {
    /// Negative-sign points deviating by more than `k` MADs.
    pub flagged: usize,
    pub negatives: usize,
    /// Per negative point: `(train index, |deviation| / MAD)`.
    pub deviations: Vec<(usize, f64)>,
}

impl MadOutcome {
    /// At least half of the negative-sign points are flagged.
    pub fn passed(&self) -> bool {
        self.negatives > 0 && 2 * self.flagged >= self.negatives
    }
}

/// Compare each negative-sign training point with the smooth curve traced by
/// the positive-sign points of the same label.
///
/// The curve at a position is the median of the nearest `window / 2`
/// positive-sign points on each side along `v1`, never including the point
/// being scored. Positive points scored this way give the residual scale
/// (their MAD); a negative point is flagged when its distance to the curve
/// exceeds `k` such MADs. Excluding the scored point keeps the scale from
/// collapsing to zero on monotone stretches, where a centered median would
/// reproduce every point exactly.
pub fn five_mad_outliers(
    v1: &[f64],
    labels: &[usize],
    signs: &[i8],
    influence: &[f64],
    window: usize,
    k: f64,
) -> Result<MadOutcome> {
    let n = v1.len();
    if labels.len() != n || signs.len() != n || influence.len() != n {
        return Err(Error::ShapeMismatch { expected: n, actual: labels.len().min(signs.len()).min(influence.len()) });
    }
    let half = (window / 2).max(1);
    let mut deviations = Vec::new();
    let mut negatives = 0;
    let mut flagged = 0;
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    for class in classes {
        let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] == class && signs[i] > 0).collect();
        pos.sort_by(|&a, &b| v1[a].total_cmp(&v1[b]));
        let neg: Vec<usize> = (0..n).filter(|&i| labels[i] == class && signs[i] < 0).collect();
        negatives += neg.len();
        if neg.is_empty() {
            continue;
        }
        if pos.len() < 3 {
            return Err(Error::Undefined(format!("too few positive-sign points with label {class} to fit a curve")));
        }
        let xs: Vec<f64> = pos.iter().map(|&i| v1[i]).collect();
        let ys: Vec<f64> = pos.iter().map(|&i| influence[i]).collect();
        let resid = (0..ys.len())
            .map(|j| Ok(ys[j] - neighbour_median(&ys, j, j + 1, half)?))
            .collect::<Result<Vec<f64>>>()?;
        let scale = mad(&resid)?;
        for i in neg {
            let at = xs.partition_point(|&x| x <= v1[i]);
            let dev = (influence[i] - neighbour_median(&ys, at, at, half)?).abs();
            let z = if scale > 0.0 { dev / scale } else if dev > 0.0 { f64::INFINITY } else { 0.0 };
            if z > k {
                flagged += 1;
            }
            deviations.push((i, z));
        }
    }
    Ok(MadOutcome { flagged, negatives, deviations })
}

/// Median of up to `half` values before position `left` and up to `half`
/// values from position `right` on. Near the ends the window is shifted
/// inward so it keeps `2 * half` values when enough exist.
fn neighbour_median(ys: &[f64], left: usize, right: usize, half: usize) -> Result<f64> {
    let n_left = left.min(half);
    let n_right = (ys.len() - right).min(half);
    let extra_left = (half - n_right).min(left - n_left);
    let extra_right = (half - n_left).min(ys.len() - right - n_right);
    let mut vals: Vec<f64> = ys[left - n_left - extra_left..left].to_vec();
    vals.extend_from_slice(&ys[right..right + n_right + extra_right]);
    median(&vals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    /// Between-group share of the influence variance for the sign split.
    pub observed: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Does splitting the training points by global sign explain more of the
/// influence variance than random splits of the same sizes?
pub fn subgroup_permutation_test(
    signs: &[i8],
    influence: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<PermutationOutcome> {
    let groups: Vec<bool> = signs.iter().map(|&s| s > 0).collect();
    let (observed, p_value) = permutation_test(influence, &groups, permutations, seed)?;
    Ok(PermutationOutcome { observed, p_value, permutations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_points_off_a_smooth_curve() {
        let v1: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let labels: Vec<usize> = (0..30).map(|i| usize::from(i >= 15)).collect();
        let mut signs = vec![1i8; 30];
        let mut infl: Vec<f64> = v1.iter().map(|x| x.sin() + 1e-3 * (x * 37.0).cos()).collect();
        for &i in &[4, 20, 25] {
            signs[i] = -1;
            infl[i] += 2.0;
        }
        signs[10] = -1; // sits on the curve
        let out = five_mad_outliers(&v1, &labels, &signs, &infl, 5, 5.0).unwrap();
        assert_eq!(out.negatives, 4);
        assert_eq!(out.flagged, 3);
        assert!(out.passed());
        assert!(out.deviations.iter().any(|&(i, z)| i == 10 && z < 5.0));
    }

    #[test]
    fn neighbour_window_skips_the_scored_point_and_shifts_at_ends() {
        let ys = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(neighbour_median(&ys, 2, 3, 2).unwrap(), 2.0); // {0,1,3,4}
        assert_eq!(neighbour_median(&ys, 0, 1, 2).unwrap(), 2.5); // {1,2,3,4}
        assert_eq!(neighbour_median(&ys, 5, 6, 2).unwrap(), 2.5); // {1,2,3,4}
        assert_eq!(neighbour_median(&ys, 3, 3, 2).unwrap(), 2.5); // {1,2,3,4}
    }

    #[test]
    fn sign_split_is_significant_only_when_real() {
        let n = 40;
        let signs: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let base: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let split: Vec<f64> = base.iter().zip(&signs).map(|(b, &s)| b + if s > 0 { 3.0 } else { 0.0 }).collect();
        assert!(subgroup_permutation_test(&signs, &split, 5000, 1).unwrap().p_value < 0.01);
        assert!(subgroup_permutation_test(&signs, &base, 5000, 1).unwrap().p_value > 0.01);
    }
}
