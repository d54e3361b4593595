//! Influence functions, RelatIF, similarity, resampling uncertainty (RUE),
//! local-ensemble extrapolation scores (LEES), and brute-force retraining
//! oracles used to validate them.

mod anomaly;
mod convex;
mod influence;
mod lees;
mod oracle;
mod report;
mod rue;
pub mod stats;

pub use anomaly::{five_mad_outliers, subgroup_permutation_test, MadOutcome, PermutationOutcome};
pub use convex::{convex_problem, ConvexProblem};
pub use influence::{influence, influence_records, relatif, similarity, InfluenceRecord, TrainSolves};
pub use lees::{choose_m, lees_score, lees_table, LeesResult, MChoice};
pub use oracle::{bootstrap_oracle, loo_oracle, minimize, BootstrapOracle, LooMode};
pub use report::{write_table, Table};
pub use rue::{rue_span, rue_variance, BootstrapPlan, RueEnsemble, RueResult};

use crate::error::Result;
use crate::model::{Example, LossKind, ModelState};

/// Per-sample loss gradients at the model parameters, one vector per sample.
pub fn per_sample_gradients(model: &ModelState, data: &[Example], kind: LossKind) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    data.par_iter().map(|ex| model.grad_single(ex, kind)).collect()
}
