use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::FockBasis;
use super::ground::{ground_state, GroundState};
use super::hamiltonian::{build_hamiltonian, Boundary};
use super::order::order_parameter;
use crate::error::{Error, Result};

/// Label boundary in `V1/J`: below is LL, at or above is CDW.
pub const PHASE_BOUNDARY: f64 = 1.0;

/// Residual tolerance used for every ground state in a dataset.
const GROUND_STATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    /// Luttinger liquid, class 0.
    LL,
    /// Charge-density wave, class 1.
    CDW,
}

impl Phase {
    pub fn from_v1(v1_over_j: f64) -> Self {
        if v1_over_j < PHASE_BOUNDARY {
            Phase::LL
        } else {
            Phase::CDW
        }
    }

    pub fn class(self) -> usize {
        match self {
            Phase::LL => 0,
            Phase::CDW => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One labeled input. Field order is the on-disk column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub split: Split,
    pub v1_over_j: f64,
    pub label: Phase,
    pub global_sign: i8,
    pub is_ood: bool,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    #[default]
    AllPositive,
    /// This fraction of each split (rounded up, at least one) is negated.
    Imbalanced(f64),
    /// `ceil(n / 2)` samples of each split are negated.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataGenConfig {
    pub l: usize,
    pub j: f64,
    /// Strictly increasing `V1/J` values. Without `test_grid`, even positions
    /// go to the training split and odd positions to the test split.
    pub v1_grid: Vec<f64>,
    pub test_grid: Option<Vec<f64>>,
    pub boundary: Boundary,
    pub sign_mode: SignMode,
    /// Fraction of test samples replaced by component permutations.
    pub ood_fraction: f64,
    pub rng_seed: u64,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        Self {
            l: 12,
            j: 1.0,
            v1_grid: default_v1_grid(),
            test_grid: None,
            boundary: Boundary::Periodic,
            sign_mode: SignMode::AllPositive,
            ood_fraction: 0.0,
            rng_seed: 0,
        }
    }
}

/// `V1/J = 0` followed by 100 geometrically spaced points in `[0.05, 20]`.
pub fn default_v1_grid() -> Vec<f64> {
    let (lo, hi, n) = (0.05_f64, 20.0_f64, 100);
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    std::iter::once(0.0)
        .chain((0..n).map(|k| lo * (ratio * k as f64).exp()))
        .collect()
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig(format!("{name} is empty")));
    }
    if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(format!("{name} values must be finite and >= 0")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl DataGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l < 2 || self.l % 2 != 0 {
            return Err(Error::InvalidConfig(format!("L must be even and >= 2, got {}", self.l)));
        }
        if !(self.j > 0.0) {
            return Err(Error::InvalidConfig("J must be positive".into()));
        }
        check_grid("v1_grid", &self.v1_grid)?;
        if let Some(test) = &self.test_grid {
            check_grid("test_grid", test)?;
            if test.iter().any(|t| self.v1_grid.contains(t)) {
                return Err(Error::InvalidConfig("train and test grids overlap".into()));
            }
        } else if self.v1_grid.len() < 2 {
            return Err(Error::InvalidConfig("need at least two grid points to interleave".into()));
        }
        if let SignMode::Imbalanced(f) = self.sign_mode {
            if !(f > 0.0 && f <= 0.5) {
                return Err(Error::InvalidConfig(format!("imbalanced fraction {f} outside (0, 0.5]")));
            }
        }
        if !(0.0..1.0).contains(&self.ood_fraction) {
            return Err(Error::InvalidConfig(format!("ood_fraction {} outside [0, 1)", self.ood_fraction)));
        }
        Ok(())
    }

    /// (train grid, test grid)
    pub fn split_grids(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.test_grid {
            Some(test) => (self.v1_grid.clone(), test.clone()),
            None => {
                let train = self.v1_grid.iter().step_by(2).copied().collect();
                let test = self.v1_grid.iter().skip(1).step_by(2).copied().collect();
                (train, test)
            }
        }
    }
}

/// Generated dataset plus the order-parameter curve over all grid points.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub l: usize,
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    /// `(V1/J, O)` sorted by `V1/J`, covering both splits.
    pub order_parameter: Vec<(f64, f64)>,
}

/// Ground states for every `V1/J` in `grid`, solved in parallel.
pub fn solve_grid(l: usize, j: f64, boundary: Boundary, grid: &[f64]) -> Result<Vec<GroundState>> {
    let basis = FockBasis::half_filled(l)?;
    grid.par_iter()
        .map(|&v| {
            let h = build_hamiltonian(&basis, j, v * j, boundary)?;
            ground_state(&h, GROUND_STATE_TOL)
        })
        .collect()
}

pub fn make_dataset(cfg: &DataGenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (train_grid, test_grid) = cfg.split_grids();
    let train = solve_grid(cfg.l, cfg.j, cfg.boundary, &train_grid)?;
    let test = solve_grid(cfg.l, cfg.j, cfg.boundary, &test_grid)?;
    make_dataset_from_states(cfg, &train, &test)
}

/// Apply labels, sign flips and OOD permutations to precomputed ground
/// states. The same `cfg.rng_seed` always yields the same manipulations.
pub fn make_dataset_from_states(
    cfg: &DataGenConfig,
    train_states: &[GroundState],
    test_states: &[GroundState],
) -> Result<Dataset> {
    cfg.validate()?;
    let basis = FockBasis::half_filled(cfg.l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut order: Vec<(f64, f64)> = train_states
        .iter()
        .chain(test_states)
        .map(|gs| Ok((gs.v1_over_j, order_parameter(gs, &basis)?)))
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut train = label_split(Split::Train, train_states);
    let mut test = label_split(Split::Test, test_states);
    apply_signs(&mut train, cfg.sign_mode, &mut rng);
    apply_signs(&mut test, cfg.sign_mode, &mut rng);
    apply_ood(&mut test, cfg.ood_fraction, &mut rng);

    Ok(Dataset { l: cfg.l, train, test, order_parameter: order })
}

fn label_split(split: Split, states: &[GroundState]) -> Vec<LabeledSample> {
    states
        .iter()
        .map(|gs| LabeledSample {
            split,
            v1_over_j: gs.v1_over_j,
            label: Phase::from_v1(gs.v1_over_j),
            global_sign: 1,
            is_ood: false,
            x: gs.amplitudes.clone(),
        })
        .collect()
}

fn apply_signs(samples: &mut [LabeledSample], mode: SignMode, rng: &mut ChaCha8Rng) {
    let n = samples.len();
    let count = match mode {
        SignMode::AllPositive => 0,
        SignMode::Balanced => n.div_ceil(2),
        SignMode::Imbalanced(f) => ((f * n as f64).ceil() as usize).clamp(1, n),
    };
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    for &i in idx.iter().take(count) {
        let s = &mut samples[i];
        s.global_sign = -1;
        s.x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Permute the components of `round(fraction * n)` test samples. Picks
/// interior positions, no two adjacent, so every OOD sample has two regular
/// neighbours in `V1/J`.
fn apply_ood(samples: &mut [LabeledSample], fraction: f64, rng: &mut ChaCha8Rng) {
    let n = samples.len();
    let want = (fraction * n as f64).round() as usize;
    if want == 0 || n < 3 {
        return;
    }
    let mut candidates: Vec<usize> = (1..n - 1).collect();
    candidates.shuffle(rng);
    let mut chosen: Vec<usize> = Vec::with_capacity(want);
    for c in candidates {
        if chosen.len() == want {
            break;
        }
        if chosen.iter().all(|&k| k.abs_diff(c) > 1) {
            chosen.push(c);
        }
    }
    chosen.sort_unstable();
    for i in chosen {
        let s = &mut samples[i];
        s.x.shuffle(rng);
        s.is_ood = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> DataGenConfig {
        DataGenConfig {
            l: 6,
            v1_grid: (0..21).map(|k| 0.25 * k as f64).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = default_v1_grid();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 0.05).abs() < 1e-15);
        assert!((g[100] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn labels_follow_boundary_and_splits_are_disjoint() {
        let ds = make_dataset(&small_cfg()).unwrap();
        assert_eq!(ds.train.len(), 11);
        assert_eq!(ds.test.len(), 10);
        for s in ds.train.iter().chain(&ds.test) {
            assert_eq!(s.label == Phase::LL, s.v1_over_j < 1.0);
            assert_eq!(s.x.len(), 20);
            assert!(!s.is_ood);
            assert_eq!(s.global_sign, 1);
        }
        for a in &ds.train {
            assert!(ds.test.iter().all(|b| b.v1_over_j != a.v1_over_j));
        }
    }

    #[test]
    fn balanced_signs_and_negation() {
        let cfg = DataGenConfig { sign_mode: SignMode::Balanced, rng_seed: 7, ..small_cfg() };
        let plain = make_dataset(&small_cfg()).unwrap();
        let ds = make_dataset(&cfg).unwrap();
        assert_eq!(ds.train.iter().filter(|s| s.global_sign == -1).count(), 6);
        assert_eq!(ds.test.iter().filter(|s| s.global_sign == -1).count(), 5);
        for (a, b) in ds.train.iter().zip(&plain.train) {
            let sign = a.global_sign as f64;
            assert!(a.x.iter().zip(&b.x).all(|(x, y)| *x == sign * y));
        }
    }

    #[test]
    fn ood_samples_are_permutations_with_regular_neighbours() {
        let cfg = DataGenConfig { ood_fraction: 0.3, rng_seed: 3, ..small_cfg() };
        let plain = make_dataset(&small_cfg()).unwrap();
        let ds = make_dataset(&cfg).unwrap();
        assert!(ds.train.iter().all(|s| !s.is_ood));
        let ood: Vec<usize> = (0..ds.test.len()).filter(|&i| ds.test[i].is_ood).collect();
        assert_eq!(ood.len(), 3);
        for &i in &ood {
            assert!(i > 0 && i + 1 < ds.test.len());
            assert!(!ds.test[i - 1].is_ood && !ds.test[i + 1].is_ood);
            let mut a = ds.test[i].x.clone();
            let mut b = plain.test[i].x.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
            assert_eq!(ds.test[i].label, plain.test[i].label);
        }
    }

    #[test]
    fn zero_ood_fraction_has_no_ood() {
        let ds = make_dataset(&small_cfg()).unwrap();
        assert!(ds.test.iter().all(|s| !s.is_ood));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small_cfg();
        cfg.test_grid = Some(vec![0.25, 7.0]);
        assert!(matches!(make_dataset(&cfg), Err(Error::InvalidConfig(_))));
        let cfg = DataGenConfig { v1_grid: vec![1.0, 0.5], ..small_cfg() };
        assert!(cfg.validate().is_err());
        let cfg = DataGenConfig { sign_mode: SignMode::Imbalanced(0.7), ..small_cfg() };
        assert!(cfg.validate().is_err());
        let cfg = DataGenConfig { l: 5, ..small_cfg() };
        assert!(cfg.validate().is_err());
    }
}
