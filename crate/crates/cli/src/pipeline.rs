//! The experiment stages as plain functions over in-memory data. The
//! subcommands wrap these with file IO; the acceptance tests call them
//! directly.

use std::time::Instant;

use hessian_toolbox::fock::{Dataset, LabeledSample};
use hessian_toolbox::hessian::{assemble_hessian, DampedHessian};
use hessian_toolbox::model::{train, Example, LossKind, ModelState, Objective, TrainConfig, TrainOutcome};
use hessian_toolbox::toolbox::{
    bootstrap_oracle, choose_m, convex_problem, five_mad_outliers, influence_records, lees_table, loo_oracle,
    per_sample_gradients, rue_span, stats, subgroup_permutation_test, BootstrapOracle, BootstrapPlan, InfluenceRecord,
    LooMode, MadOutcome, PermutationOutcome, RueEnsemble, TrainSolves,
};
use ndarray::Array2;

use crate::config::{nearest, transition_index, ExperimentConfig, OracleConfig};
use crate::error::{CliError, CliResult};

/// Points with `V1/J` in this closed range count as the transition window.
pub const TRANSITION_WINDOW: (f64, f64) = (0.8, 2.5);

pub fn train_model(cfg: &ExperimentConfig, ds: &Dataset) -> CliResult<TrainOutcome> {
    let start = ModelState::init(cfg.model_config()?, cfg.model.init_seed)?;
    let data = examples(&ds.train);
    Ok(train(&start, &data, &cfg.train)?)
}

pub fn examples(samples: &[LabeledSample]) -> Vec<Example> {
    samples.iter().map(Example::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Ll,
    Window,
    Cdw,
}

impl Region {
    pub fn of(v1: f64) -> Self {
        if v1 < TRANSITION_WINDOW.0 {
            Region::Ll
        } else if v1 <= TRANSITION_WINDOW.1 {
            Region::Window
        } else {
            Region::Cdw
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Ll => "ll",
            Region::Window => "window",
            Region::Cdw => "cdw",
        }
    }
}

/// `(correct, total)` per region.
pub fn accuracy_by_region(model: &ModelState, samples: &[LabeledSample]) -> CliResult<Vec<(Region, usize, usize)>> {
    let mut out = vec![(Region::Ll, 0, 0), (Region::Window, 0, 0), (Region::Cdw, 0, 0)];
    for s in samples {
        let slot = out.iter_mut().find(|r| r.0 == Region::of(s.v1_over_j)).expect("all regions present");
        slot.2 += 1;
        if model.predict(&s.x)? == s.label.class() {
            slot.1 += 1;
        }
    }
    Ok(out)
}

/// A trained model with its data and damped Hessian: everything the
/// analyses share.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub model: ModelState,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub weight_decay: f64,
    pub hessian: DampedHessian,
    /// `max |H - H^T|` before symmetrization; `None` for a cached Hessian.
    pub asymmetry: Option<f64>,
}

impl Prepared {
    pub fn assemble(dataset: Dataset, model: ModelState, weight_decay: f64, cap: usize) -> CliResult<Self> {
        let train = examples(&dataset.train);
        let obj = Objective::new(&model.config, &train, weight_decay);
        let asm = assemble_hessian(&model, &obj, cap)?;
        let mut p = Self::with_hessian(dataset, model, weight_decay, asm.matrix)?;
        p.asymmetry = Some(asm.asymmetry);
        Ok(p)
    }

    pub fn with_hessian(dataset: Dataset, model: ModelState, weight_decay: f64, h: Array2<f64>) -> CliResult<Self> {
        let train = examples(&dataset.train);
        let test = examples(&dataset.test);
        if h.nrows() != model.param_count() {
            return Err(CliError::Config(format!(
                "cached Hessian has dimension {}, model has {} parameters",
                h.nrows(),
                model.param_count()
            )));
        }
        let hessian = DampedHessian::new(h, train.len())?;
        Ok(Self { dataset, model, train, test, weight_decay, hessian, asymmetry: None })
    }

    pub fn objective(&self) -> Objective<'_> {
        Objective::new(&self.model.config, &self.train, self.weight_decay)
    }

    pub fn test_v1(&self) -> Vec<f64> {
        self.dataset.test.iter().map(|s| s.v1_over_j).collect()
    }

    pub fn train_v1(&self) -> Vec<f64> {
        self.dataset.train.iter().map(|s| s.v1_over_j).collect()
    }

    pub fn train_gradients(&self, kind: LossKind) -> CliResult<Vec<Vec<f64>>> {
        Ok(per_sample_gradients(&self.model, &self.train, kind)?)
    }

    pub fn test_gradients(&self, kind: LossKind) -> CliResult<Vec<Vec<f64>>> {
        Ok(per_sample_gradients(&self.model, &self.test, kind)?)
    }

    /// `(key, value)` pairs describing the damping and the spectrum.
    pub fn summary(&self) -> Vec<(String, String)> {
        let s = &self.hessian.spectrum;
        vec![
            ("M".into(), self.hessian.dim().to_string()),
            ("n_train".into(), self.train.len().to_string()),
            ("lambda".into(), self.hessian.lambda.to_string()),
            ("lambda_rue".into(), self.hessian.lambda_rue.to_string()),
            ("eigenvalue_max".into(), s.max().to_string()),
            ("eigenvalue_min".into(), s.min().to_string()),
            ("eigenvalues_above_1e-3_max".into(), s.significant_count(1e-3).to_string()),
        ]
    }
}

/// Influence records of every training point for each selected test point.
#[derive(Debug, Clone)]
pub struct InfluenceAnalysis {
    pub test_indices: Vec<usize>,
    /// `records[k][r]` for test point `test_indices[k]` and training point `r`.
    pub records: Vec<Vec<InfluenceRecord>>,
}

/// Test indices nearest to each requested `V1/J`, or all test points.
pub fn select_tests(p: &Prepared, v1: Option<&[f64]>) -> CliResult<Vec<usize>> {
    let xs = p.test_v1();
    match v1 {
        None => Ok((0..xs.len()).collect()),
        Some(targets) => targets
            .iter()
            .map(|&t| nearest(&xs, t).ok_or_else(|| CliError::Config("test split is empty".into())))
            .collect(),
    }
}

pub fn influence_analysis(p: &Prepared, test_indices: &[usize], kind: LossKind) -> CliResult<InfluenceAnalysis> {
    let solves = TrainSolves::new(&p.hessian, &p.train_gradients(LossKind::GroundTruth)?)?;
    let records = test_indices
        .iter()
        .map(|&t| {
            let g = p.model.grad_single(&p.test[t], kind)?;
            Ok(influence_records(&solves, t, &g)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(InfluenceAnalysis { test_indices: test_indices.to_vec(), records })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Score {
    Influence,
    Relatif,
}

impl Score {
    pub fn of(self, r: &InfluenceRecord) -> f64 {
        match self {
            Score::Influence => r.influence,
            // Undefined RelatIF (zero training gradient) ranks last.
            Score::Relatif => r.relatif.unwrap_or(f64::NAN),
        }
    }
}

/// Training indices of the `k` most helpful (largest score) or most harmful
/// (smallest score) records. Ties keep training order.
pub fn top_k(records: &[InfluenceRecord], score: Score, k: usize, helpful: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..records.len()).filter(|&i| !score.of(&records[i]).is_nan()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (score.of(&records[a]), score.of(&records[b]));
        if helpful {
            y.total_cmp(&x)
        } else {
            x.total_cmp(&y)
        }
    });
    idx.into_iter().take(k).map(|i| records[i].train_index).collect()
}

#[derive(Debug, Clone)]
pub struct RueAnalysis {
    pub variances: Vec<f64>,
    pub median_nonzero: Option<f64>,
    pub threshold: f64,
    /// Longest run of test points (in `V1/J` order) above the threshold.
    pub span: Option<(f64, f64)>,
}

/// `base * median / reference`, or `base` without a reference.
pub fn scaled_threshold(base: f64, median: Option<f64>, reference: Option<f64>) -> f64 {
    match (median, reference) {
        (Some(m), Some(r)) => base * m / r,
        _ => base,
    }
}

pub fn rue_analysis(
    p: &Prepared,
    b: usize,
    seed: u64,
    kind: LossKind,
    base_threshold: f64,
    reference_median: Option<f64>,
) -> CliResult<RueAnalysis> {
    let plan = BootstrapPlan::sample(p.train.len(), b, seed)?;
    let ens = RueEnsemble::new(&p.hessian, &p.model, &p.train_gradients(LossKind::GroundTruth)?, &plan)?;
    let variances = p
        .test
        .iter()
        .enumerate()
        .map(|(i, ex)| Ok(ens.variance(i, ex, kind)?.variance))
        .collect::<CliResult<Vec<_>>>()?;
    let nonzero: Vec<f64> = variances.iter().copied().filter(|v| *v > 0.0).collect();
    let median_nonzero = if nonzero.is_empty() { None } else { Some(stats::median(&nonzero)?) };
    let threshold = scaled_threshold(base_threshold, median_nonzero, reference_median);
    let span = rue_span(&p.test_v1(), &variances, threshold);
    Ok(RueAnalysis { variances, median_nonzero, threshold, span })
}

#[derive(Debug, Clone)]
pub struct LeesAnalysis {
    pub m: usize,
    /// Whether `m` came from the convergence criterion.
    pub auto_m: bool,
    /// `table[m][t] = E_m` for `m = 0..=m_max`.
    pub table: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub minimal_losses: Vec<f64>,
}

pub fn lees_analysis(p: &Prepared, kind: LossKind, m: Option<usize>, tol: f64, m_max: usize) -> CliResult<LeesAnalysis> {
    let grads = p.test_gradients(kind)?;
    let (m, auto_m) = match m {
        Some(m) => (m, false),
        None => (choose_m(&p.hessian.spectrum, &grads, tol)?.m, true),
    };
    let m_max = m_max.max(m).min(p.hessian.dim());
    let table = lees_table(&p.hessian.spectrum, &grads, m_max)?;
    let scores = table[m].clone();
    let minimal_losses = p
        .test
        .iter()
        .map(|ex| Ok(p.model.loss(ex, LossKind::Minimal)?))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(LeesAnalysis { m, auto_m, table, scores, minimal_losses })
}

/// For every flagged index `i`: whether `values[i]` strictly exceeds both
/// `values[i - 1]` and `values[i + 1]`. Points at either end compare with
/// their single neighbour.
pub fn exceeds_neighbours(values: &[f64], flagged: &[bool]) -> Vec<(usize, bool)> {
    (0..values.len())
        .filter(|&i| flagged[i])
        .map(|i| {
            let left = i == 0 || values[i] > values[i - 1];
            let right = i + 1 == values.len() || values[i] > values[i + 1];
            (i, left && right)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AnomalyAnalysis {
    pub test_index: usize,
    pub influence: Vec<f64>,
    pub mad: MadOutcome,
    pub permutation: PermutationOutcome,
}

/// Influence of every training point on the test point of sign `sign`
/// closest to the phase boundary, then the 5-MAD and sign-split tests.
pub fn anomaly_analysis(
    p: &Prepared,
    sign: i8,
    kind: LossKind,
    window: usize,
    k: f64,
    permutations: usize,
    seed: u64,
) -> CliResult<AnomalyAnalysis> {
    let candidates: Vec<usize> = (0..p.test.len()).filter(|&i| p.dataset.test[i].global_sign == sign).collect();
    let v1: Vec<f64> = candidates.iter().map(|&i| p.dataset.test[i].v1_over_j).collect();
    let test_index = transition_index(&v1)
        .map(|j| candidates[j])
        .ok_or_else(|| CliError::Config(format!("no test point with global sign {sign}")))?;
    let inf = influence_analysis(p, &[test_index], kind)?;
    let influence: Vec<f64> = inf.records[0].iter().map(|r| r.influence).collect();
    let labels: Vec<usize> = p.dataset.train.iter().map(|s| s.label.class()).collect();
    let signs: Vec<i8> = p.dataset.train.iter().map(|s| s.global_sign).collect();
    let mad = five_mad_outliers(&p.train_v1(), &labels, &signs, &influence, window, k)?;
    let permutation = subgroup_permutation_test(&signs, &influence, permutations, seed)?;
    Ok(AnomalyAnalysis { test_index, influence, mad, permutation })
}

#[derive(Debug, Clone)]
pub struct OracleAnalysis {
    /// `(influence, exact)` over all (removal, test point) pairs, removal-major.
    pub loo_pairs: Vec<(f64, f64)>,
    pub pearson: f64,
    pub sign_agreement: f64,
    /// Same statistics with the renormalized leave-one-out objective.
    pub pearson_renormalized: f64,
    pub sign_agreement_renormalized: f64,
    pub loo_seconds: f64,
    pub rue: Vec<f64>,
    pub bootstrap: BootstrapOracle,
    pub spearman: f64,
    pub bootstrap_seconds: f64,
}

fn sign_agreement(pairs: &[(f64, f64)]) -> f64 {
    let agree = pairs.iter().filter(|(a, b)| a.signum() == b.signum()).count();
    agree as f64 / pairs.len().max(1) as f64
}

/// Influence against leave-one-out retraining and RUE against bootstrap
/// retraining on the convex validation problem.
pub fn oracle_analysis(cfg: &OracleConfig) -> CliResult<OracleAnalysis> {
    let start = Instant::now();
    let problem = convex_problem(cfg.features, cfg.n_train, cfg.n_test, cfg.scale, cfg.seed)?;
    let retrain = TrainConfig { g_tol: cfg.g_tol, ..problem.train_cfg.clone() };
    let obj = Objective::new(&problem.model.config, &problem.train, problem.train_cfg.weight_decay);
    let hessian = DampedHessian::from_model(&problem.model, &obj, hessian_toolbox::hessian::DEFAULT_HESSIAN_CAP)?;
    let train_grads = per_sample_gradients(&problem.model, &problem.train, LossKind::GroundTruth)?;
    let test_grads = per_sample_gradients(&problem.model, &problem.test, LossKind::GroundTruth)?;
    let solves = TrainSolves::new(&hessian, &train_grads)?;
    let records = test_grads
        .iter()
        .enumerate()
        .map(|(t, g)| Ok(influence_records(&solves, t, g)?))
        .collect::<CliResult<Vec<_>>>()?;
    let setup = start.elapsed().as_secs_f64();

    let loo = |mode: LooMode| -> CliResult<Vec<(f64, f64)>> {
        let mut pairs = Vec::new();
        for r in 0..problem.train.len() {
            let delta = loo_oracle(&problem.model, &problem.train, &problem.test, &retrain, r, LossKind::GroundTruth, mode)?;
            pairs.extend(delta.iter().enumerate().map(|(t, d)| (records[t][r].influence, *d)));
        }
        Ok(pairs)
    };
    let start = Instant::now();
    let loo_pairs = loo(LooMode::DropTerm)?;
    let loo_seconds = setup + start.elapsed().as_secs_f64();
    let renorm = loo(LooMode::Renormalize)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = loo_pairs.iter().copied().unzip();
    let pearson = stats::pearson(&xs, &ys)?;
    let (xr, yr): (Vec<f64>, Vec<f64>) = renorm.iter().copied().unzip();
    let pearson_renormalized = stats::pearson(&xr, &yr)?;

    let start = Instant::now();
    let plan = BootstrapPlan::sample(problem.train.len(), cfg.b, cfg.bootstrap_seed)?;
    let ens = RueEnsemble::new(&hessian, &problem.model, &train_grads, &plan)?;
    let rue = problem
        .test
        .iter()
        .enumerate()
        .map(|(i, ex)| Ok(ens.variance(i, ex, LossKind::Minimal)?.variance))
        .collect::<CliResult<Vec<_>>>()?;
    let bootstrap = bootstrap_oracle(&problem.model, &problem.train, &problem.test, &retrain, &plan, LossKind::Minimal)?;
    let spearman = stats::spearman(&rue, &bootstrap.variance)?;
    let bootstrap_seconds = setup + start.elapsed().as_secs_f64();

    Ok(OracleAnalysis {
        sign_agreement: sign_agreement(&loo_pairs),
        sign_agreement_renormalized: sign_agreement(&renorm),
        loo_pairs,
        pearson,
        pearson_renormalized,
        loo_seconds,
        rue,
        bootstrap,
        spearman,
        bootstrap_seconds,
    })
}
