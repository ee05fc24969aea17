//! Finite-horizon mixture cure model.
//!
//! The population is split by whether the event occurs before an
//! analyst-chosen horizon `c`. Incidence `P(T < c | x)` is logistic; the
//! latency distribution on `[0, c)` has Cox form with a B-spline mixture
//! baseline density. Estimation is MAP by EM, with Laplace credible
//! intervals and an empirical Bayes loop for the spline prior precision.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conventional;
pub mod data;
pub mod eb;
pub mod em;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod laplace;
mod likelihood;
pub mod model;
pub mod optim;
pub mod simulation;
pub mod spline;

pub use conventional::{conventional_risk_score, fit_conventional, ConventionalConfig, ConventionalFit};
pub use data::Dataset;
pub use eb::{fit_empirical_bayes, fit_with_intervals, EbConfig, EbState, InferredFit, LambdaMode};
pub use em::{fit_map, FitConfig, FitResult};
pub use error::{CureError, Result};
pub use evaluation::{kaplan_meier, mean_cumulative_dynamic_auc, StepSurvival, StudySummary};
pub use io::{CsvSchema, ResultDocument};
pub use laplace::{credible_intervals, precision_matrix, CredibleInterval, PrecisionMatrix};
pub use model::{coefficient_labels, FiniteHorizonParams, ModelSnapshot};
pub use simulation::{ScenarioAConfig, ScenarioBConfig, StudyConfig, StudyOutcome};
pub use spline::{build_knots, KnotVector, NormalizedBasis};
