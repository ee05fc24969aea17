//! Data generators and study drivers for the two synthetic scenarios.
//!
//! Scenario A draws from the finite-horizon model itself with baseline
//! `S_0c(t) = 1 - (t/c)^η`. Scenario B draws from a cure model with
//! exponential latency, where a covariate lowers the ultimate event
//! probability but shortens time to event.
//!
//! Randomness comes from ChaCha8 streams keyed by `(seed, stream)`. Scenario A
//! covariates use stream [`COVARIATE_STREAM`]; replication `r` uses stream `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::eb::{fit_with_intervals, EbConfig, LambdaMode};
use crate::em::basis_for;
use crate::error::{CureError, Result};
use crate::evaluation::{integrated_squared_error, rmise_from_errors, summarize, StudySummary};
use crate::model::{coefficient_labels, dot, Logistic};

/// Stream reserved for the Scenario A covariate matrix.
pub const COVARIATE_STREAM: u64 = u64::MAX;

/// Event time used for Scenario B subjects who never experience the event.
pub const NEVER: f64 = f64::INFINITY;

/// Generator for replication `r` under master seed `seed`.
pub fn replication_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Uniform draw on `(0, 1]`.
fn open_uniform(rng: &mut impl Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

fn logistic(eta: f64) -> f64 {
    Logistic::new(eta).p
}

/// Standard-normal continuous covariates followed by categorical blocks,
/// each coded with its first level as reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub n_continuous: usize,
    /// Number of levels per categorical covariate, drawn uniformly.
    pub categorical_levels: Vec<usize>,
}

impl Default for CovariateSpec {
    fn default() -> Self {
        Self {
            n_continuous: 1,
            categorical_levels: vec![4, 3, 2],
        }
    }
}

impl CovariateSpec {
    pub fn n_features(&self) -> usize {
        self.n_continuous + self.categorical_levels.iter().map(|l| l - 1).sum::<usize>()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n_continuous).map(|j| format!("cont{j}")).collect();
        for (g, &levels) in self.categorical_levels.iter().enumerate() {
            names.extend((2..=levels).map(|l| format!("cat{}_L{l}", g + 1)));
        }
        names
    }

    fn validate(&self) -> Result<()> {
        if self.categorical_levels.iter().any(|&l| l < 2) {
            return Err(CureError::InvalidParameter(
                "categorical covariates need at least 2 levels".into(),
            ));
        }
        Ok(())
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let mut row = Vec::with_capacity(self.n_features());
                for _ in 0..self.n_continuous {
                    row.push(rng.sample::<f64, _>(StandardNormal));
                }
                for &levels in &self.categorical_levels {
                    let level = rng.random_range(0..levels);
                    row.extend((1..levels).map(|l| if l == level { 1.0 } else { 0.0 }));
                }
                row
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAConfig {
    pub n: usize,
    pub c: f64,
    pub eta: f64,
    /// Incidence coefficients, intercept first.
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
    /// Exponential censoring rate; 0 disables censoring.
    pub lambda_cens: f64,
    /// Rate of the exponential excess beyond `c` for the non-event group.
    pub lambda_after_c: f64,
    pub covariates: CovariateSpec,
    pub seed: u64,
}

const B_REST: [f64; 7] = [-0.3, 0.5, 0.4, 0.2, 0.0, -0.2, -0.5];
const BETA_TRUE: [f64; 7] = [0.3, -0.4, -0.2, 0.0, 0.2, 0.4, 0.5];

impl ScenarioAConfig {
    fn with_intercept(n: usize, b1: f64, seed: u64) -> Self {
        let mut b = vec![b1];
        b.extend_from_slice(&B_REST);
        Self {
            n,
            c: 10.0,
            eta: 1.5,
            b,
            beta: BETA_TRUE.to_vec(),
            lambda_cens: 0.06,
            lambda_after_c: 0.05,
            covariates: CovariateSpec::default(),
            seed,
        }
    }

    /// High event rate: about 70% in the event group.
    pub fn a1(n: usize, seed: u64) -> Self {
        Self::with_intercept(n, 0.928, seed)
    }

    /// Low event rate: about 30% in the event group.
    pub fn a2(n: usize, seed: u64) -> Self {
        Self::with_intercept(n, -0.838, seed)
    }

    pub fn p(&self) -> usize {
        self.covariates.n_features()
    }

    pub fn validate(&self) -> Result<()> {
        self.covariates.validate()?;
        let p = self.p();
        if self.n == 0 {
            return Err(CureError::InvalidParameter("N must be positive".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(CureError::InvalidParameter(format!("c must be positive, got {}", self.c)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(CureError::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda_cens >= 0.0 && self.lambda_cens.is_finite()) {
            return Err(CureError::InvalidParameter(format!(
                "censoring rate must be nonnegative, got {}",
                self.lambda_cens
            )));
        }
        if !(self.lambda_after_c > 0.0 && self.lambda_after_c.is_finite()) {
            return Err(CureError::InvalidParameter(format!(
                "post-horizon rate must be positive, got {}",
                self.lambda_after_c
            )));
        }
        if self.b.len() != p + 1 || self.beta.len() != p {
            return Err(CureError::InvalidParameter(format!(
                "need {} incidence and {p} latency coefficients, got {} and {}",
                p + 1,
                self.b.len(),
                self.beta.len()
            )));
        }
        if self.b.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(CureError::InvalidParameter("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// `b1, …, b_{p+1}, beta1, …, beta_p`.
    pub fn parameter_names(&self) -> Vec<String> {
        let p = self.p();
        (1..=p + 1)
            .map(|j| format!("b{j}"))
            .chain((1..=p).map(|j| format!("beta{j}")))
            .collect()
    }

    /// True `(b, β)` in the order of [`Self::parameter_names`].
    pub fn truth(&self) -> Vec<f64> {
        self.b.iter().chain(&self.beta).copied().collect()
    }

    /// The covariate matrix shared by every replication under this seed.
    pub fn covariate_matrix(&self) -> Vec<Vec<f64>> {
        self.covariates.sample(self.n, &mut replication_rng(self.seed, COVARIATE_STREAM))
    }

    fn incidence(&self, x: &[f64]) -> f64 {
        logistic(self.b[0] + dot(&self.b[1..], x))
    }
}

/// `S_0c(t) = 1 - (t/c)^η` on `[0, c]`.
pub fn true_baseline_survival(t: f64, c: f64, eta: f64) -> f64 {
    1.0 - (t / c).clamp(0.0, 1.0).powf(eta)
}

/// Inverse of `S_c(t | x̃) = u` under the Scenario A baseline:
/// `t = c (1 - u^{exp(-x̃ᵀβ)})^{1/η}`. `u = 0` maps to the largest float
/// below `c`.
pub fn sample_latency_time_a(u: f64, x_tilde: &[f64], beta: &[f64], c: f64, eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(CureError::domain(u, "(0, 1]"));
    }
    if x_tilde.len() != beta.len() {
        return Err(CureError::InvalidInput(format!(
            "{} covariates for {} coefficients",
            x_tilde.len(),
            beta.len()
        )));
    }
    let below_c = c.next_down();
    if u == 0.0 {
        return Ok(below_c);
    }
    let s0 = u.powf((-dot(x_tilde, beta)).exp());
    Ok((c * (1.0 - s0).powf(1.0 / eta)).min(below_c))
}

/// Latent quantities behind a Scenario A dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioATruth {
    pub z: Vec<bool>,
    pub event_times: Vec<f64>,
    pub censor_times: Vec<f64>,
}

/// Draws outcomes for fixed covariates from `rng`.
pub fn simulate_scenario_a(
    cfg: &ScenarioAConfig,
    covariates: &[Vec<f64>],
    rng: &mut impl Rng,
) -> Result<(Dataset, ScenarioATruth)> {
    cfg.validate()?;
    let after = Exp::new(cfg.lambda_after_c).map_err(|e| CureError::InvalidParameter(e.to_string()))?;
    let n = covariates.len();
    let mut truth = ScenarioATruth {
        z: Vec::with_capacity(n),
        event_times: Vec::with_capacity(n),
        censor_times: Vec::with_capacity(n),
    };
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for x in covariates {
        let z = rng.random::<f64>() < cfg.incidence(x);
        let t = if z {
            sample_latency_time_a(open_uniform(rng), x, &cfg.beta, cfg.c, cfg.eta)?
        } else {
            cfg.c + after.sample(rng)
        };
        let cens = if cfg.lambda_cens > 0.0 {
            rng.sample::<f64, _>(rand_distr::Exp1) / cfg.lambda_cens
        } else {
            f64::INFINITY
        };
        times.push(t.min(cens));
        events.push(t <= cens);
        truth.z.push(z);
        truth.event_times.push(t);
        truth.censor_times.push(cens);
    }
    let data = Dataset::new(times, events, covariates.to_vec(), cfg.covariates.feature_names())?;
    Ok((data, truth))
}

/// Replication 0 of the configured scenario.
pub fn generate_scenario_a(cfg: &ScenarioAConfig) -> Result<(Dataset, ScenarioATruth)> {
    cfg.validate()?;
    simulate_scenario_a(cfg, &cfg.covariate_matrix(), &mut replication_rng(cfg.seed, 0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub b1: f64,
    pub lambda_cens: f64,
    /// Realized fractions on the pilot data at the returned values.
    pub event_fraction: f64,
    pub censor_fraction: f64,
    /// The target could not be met within 0.005; the value is the closest
    /// point of the search range.
    pub b1_at_boundary: bool,
    pub lambda_at_boundary: bool,
}

const CALIBRATION_TOL: f64 = 0.005;

fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo), f(hi));
    if (flo - target).abs() <= (fhi - target).abs() {
        lo
    } else {
        hi
    }
}

/// Finds the intercept giving `target_event` of a pilot sample in the event
/// group, then the censoring rate giving `target_censor` censored among that
/// group. Other coefficients come from `base`; the pilot reuses the same
/// uniforms for every candidate value.
pub fn calibrate(
    base: &ScenarioAConfig,
    target_event: f64,
    target_censor: f64,
    pilot_n: usize,
) -> Result<Calibration> {
    base.validate()?;
    for t in [target_event, target_censor] {
        if !(t > 0.0 && t < 1.0) {
            return Err(CureError::domain(t, "(0, 1)"));
        }
    }
    if pilot_n == 0 {
        return Err(CureError::InvalidParameter("pilot size must be positive".into()));
    }
    let x = base.covariates.sample(pilot_n, &mut replication_rng(base.seed, COVARIATE_STREAM));
    let mut rng = replication_rng(base.seed, 0);
    let offsets: Vec<f64> = x.iter().map(|xi| dot(&base.b[1..], xi)).collect();
    let u_z: Vec<f64> = (0..pilot_n).map(|_| rng.random::<f64>()).collect();
    let latency: Vec<f64> = x
        .iter()
        .map(|xi| sample_latency_time_a(open_uniform(&mut rng), xi, &base.beta, base.c, base.eta))
        .collect::<Result<_>>()?;
    let e: Vec<f64> = (0..pilot_n).map(|_| rng.sample::<f64, _>(rand_distr::Exp1)).collect();

    let event_fraction = |b1: f64| {
        offsets.iter().zip(&u_z).filter(|(o, u)| **u < logistic(b1 + **o)).count() as f64 / pilot_n as f64
    };
    let (b_lo, b_hi) = (-30.0, 30.0);
    let b1 = bisect_increasing(event_fraction, target_event, b_lo, b_hi);
    let achieved_event = event_fraction(b1);

    let group: Vec<usize> = (0..pilot_n).filter(|&i| u_z[i] < logistic(b1 + offsets[i])).collect();
    let censor_fraction = |log_rate: f64| {
        if group.is_empty() {
            return 0.0;
        }
        let rate = log_rate.exp();
        group.iter().filter(|&&i| e[i] / rate < latency[i]).count() as f64 / group.len() as f64
    };
    let (l_lo, l_hi) = (1e-8_f64.ln(), 1e4_f64.ln());
    let log_rate = bisect_increasing(censor_fraction, target_censor, l_lo, l_hi);
    let achieved_censor = censor_fraction(log_rate);

    Ok(Calibration {
        b1,
        lambda_cens: log_rate.exp(),
        event_fraction: achieved_event,
        censor_fraction: achieved_censor,
        b1_at_boundary: (achieved_event - target_event).abs() > CALIBRATION_TOL,
        lambda_at_boundary: (achieved_censor - target_censor).abs() > CALIBRATION_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBConfig {
    pub n: usize,
    /// Ultimate event probability for `x = 1` and `x = 0`.
    pub pi1: f64,
    pub pi0: f64,
    /// Exponential event rates among susceptibles.
    pub rate1: f64,
    pub rate0: f64,
    /// Censoring is `Uniform(0, censor_upper)`.
    pub censor_upper: f64,
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl Default for ScenarioBConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            pi1: 0.5,
            pi0: 0.8,
            rate1: 7.0,
            rate0: 0.4,
            censor_upper: 8.0,
            grid: (0..16).map(|k| 0.1 + 0.4 * k as f64).collect(),
            seed: 0,
        }
    }
}

impl ScenarioBConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CureError::InvalidParameter("n must be positive".into()));
        }
        for p in [self.pi1, self.pi0] {
            if !(p > 0.0 && p < 1.0) {
                return Err(CureError::InvalidParameter(format!("probability {p} outside (0, 1)")));
            }
        }
        for r in [self.rate1, self.rate0, self.censor_upper] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(CureError::InvalidParameter(format!("rate or bound {r} must be positive")));
            }
        }
        if self
            .grid
            .iter()
            .any(|&c| !(c > 0.0 && c < self.censor_upper))
            || self.grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(CureError::InvalidParameter(format!(
                "cutoff grid must be increasing within (0, {})",
                self.censor_upper
            )));
        }
        Ok(())
    }

    /// `P(T < c | x) = π(x) (1 - exp(-λ(x) c))`.
    pub fn event_probability(&self, x: bool, c: f64) -> f64 {
        let (pi, rate) = if x { (self.pi1, self.rate1) } else { (self.pi0, self.rate0) };
        pi * (1.0 - (-rate * c).exp())
    }

    /// Cutoff where `P(T < c | x=1) = P(T < c | x=0)`, searched over
    /// `(0, censor_upper)`.
    pub fn crossover(&self) -> Option<f64> {
        let d = |c: f64| self.event_probability(true, c) - self.event_probability(false, c);
        let n = 10_000;
        let step = self.censor_upper / n as f64;
        (1..n).find_map(|j| {
            let (a, b) = (step * j as f64, step * (j + 1) as f64);
            (d(a).signum() != d(b).signum()).then(|| {
                let (mut lo, mut hi) = (a, b);
                let up = d(lo) < 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (d(mid) < 0.0) == up {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
        })
    }
}

/// Scenario B with its latent event times (`NEVER` for non-susceptibles).
pub fn generate_scenario_b_with_truth(cfg: &ScenarioBConfig) -> Result<(Dataset, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = replication_rng(cfg.seed, 0);
    let exp1 = Exp::new(cfg.rate1).map_err(|e| CureError::InvalidParameter(e.to_string()))?;
    let exp0 = Exp::new(cfg.rate0).map_err(|e| CureError::InvalidParameter(e.to_string()))?;
    let mut times = Vec::with_capacity(cfg.n);
    let mut events = Vec::with_capacity(cfg.n);
    let mut rows = Vec::with_capacity(cfg.n);
    let mut latent = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let x = rng.random::<f64>() < 0.5;
        let (pi, dist) = if x { (cfg.pi1, &exp1) } else { (cfg.pi0, &exp0) };
        let susceptible = rng.random::<f64>() < pi;
        let t = if susceptible { dist.sample(&mut rng) } else { NEVER };
        let cens = rng.random::<f64>() * cfg.censor_upper;
        times.push(t.min(cens));
        events.push(t <= cens);
        rows.push(vec![if x { 1.0 } else { 0.0 }]);
        latent.push(t);
    }
    Ok((Dataset::new(times, events, rows, vec!["x".into()])?, latent))
}

pub fn generate_scenario_b(cfg: &ScenarioBConfig) -> Result<Dataset> {
    generate_scenario_b_with_truth(cfg).map(|(d, _)| d)
}

/// How each replication is fit and summarized.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyConfig {
    pub k: usize,
    pub lambda: LambdaMode,
    pub eb: EbConfig,
    pub level: f64,
    /// Grid size for the integrated squared error of the baseline.
    pub rmise_points: usize,
    /// Worker threads; `None` uses the rayon default.
    pub jobs: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            k: 7,
            lambda: LambdaMode::Fixed(1.0),
            eb: EbConfig::default(),
            level: 0.95,
            rmise_points: 1000,
            jobs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    /// `(b, β)`; empty when the fit failed.
    pub estimates: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub lambda: f64,
    /// `(1/c) ∫ (Ŝ_0c - S_0c)²`.
    pub ise: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub summary: StudySummary,
    pub records: Vec<ReplicationRecord>,
}

fn run_one(
    cfg: &ScenarioAConfig,
    covariates: &[Vec<f64>],
    study: &StudyConfig,
    r: usize,
) -> Result<ReplicationRecord> {
    let mut rng = replication_rng(cfg.seed, r as u64);
    let (data, _) = simulate_scenario_a(cfg, covariates, &mut rng)?;
    let basis = basis_for(&data, cfg.c, study.k)?;
    let inferred = fit_with_intervals(&data, basis, study.lambda, &study.eb, study.level, false)?;
    let n_coef = 2 * cfg.p() + 1;
    let params = &inferred.fit.params;
    let ise = integrated_squared_error(
        |t| params.baseline_survival_closed(t),
        |t| true_baseline_survival(t, cfg.c, cfg.eta),
        cfg.c,
        study.rmise_points,
    )?;
    Ok(ReplicationRecord {
        replication: r,
        estimates: params.to_theta()[..n_coef].to_vec(),
        intervals: inferred.intervals[..n_coef].iter().map(|iv| (iv.low, iv.high)).collect(),
        lambda: inferred.lambda,
        ise,
        converged: inferred.fit.converged,
        error: None,
    })
}

/// Fits `m` replications of a Scenario A design and summarizes bias, SD,
/// coverage, width and RMISE over those that succeed.
pub fn run_replications(cfg: &ScenarioAConfig, m: usize, study: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    if m == 0 {
        return Err(CureError::InvalidParameter("need at least one replication".into()));
    }
    if !(study.level > 0.0 && study.level < 1.0) {
        return Err(CureError::domain(study.level, "(0, 1)"));
    }
    let covariates = cfg.covariate_matrix();
    let work = || -> Vec<ReplicationRecord> {
        (0..m)
            .into_par_iter()
            .map(|r| {
                run_one(cfg, &covariates, study, r).unwrap_or_else(|e| ReplicationRecord {
                    replication: r,
                    estimates: Vec::new(),
                    intervals: Vec::new(),
                    lambda: f64::NAN,
                    ise: f64::NAN,
                    converged: false,
                    error: Some(e.to_string()),
                })
            })
            .collect()
    };
    let records = match study.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| CureError::InvalidParameter(e.to_string()))?
            .install(work),
        None => work(),
    };
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let failures = m - ok.len();
    let names = cfg.parameter_names();
    let truth = cfg.truth();
    let parameters = if ok.is_empty() {
        Vec::new()
    } else {
        let est: Vec<Vec<f64>> = ok.iter().map(|r| r.estimates.clone()).collect();
        let ivs: Vec<Vec<(f64, f64)>> = ok.iter().map(|r| r.intervals.clone()).collect();
        summarize(&names, &truth, &est, &ivs)?
    };
    let ise: Vec<f64> = ok.iter().map(|r| r.ise).collect();
    let rmise = if ise.is_empty() { None } else { Some(rmise_from_errors(&ise)?) };
    Ok(StudyOutcome {
        summary: StudySummary {
            parameters,
            rmise,
            replications: m,
            failures,
        },
        records,
    })
}

/// One row of the long-format cutoff sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub c: f64,
    pub coefficient: String,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub c: f64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub failures: Vec<SweepFailure>,
}

/// Refits the model at each cutoff in `grid` and tabulates the `(b, β)`
/// estimates with credible intervals.
pub fn sweep_cutoffs(
    data: &Dataset,
    grid: &[f64],
    k: usize,
    lambda: LambdaMode,
    eb: &EbConfig,
    level: f64,
) -> Result<SweepResult> {
    let t_max = data.times().iter().copied().fold(0.0, f64::max);
    if grid.is_empty() || grid.iter().any(|&c| !(c > 0.0 && c <= t_max)) {
        return Err(CureError::InvalidParameter(format!(
            "cutoffs must lie in (0, {t_max}], the observed time range"
        )));
    }
    let labels = coefficient_labels(data.feature_names());
    let mut out = SweepResult::default();
    for &c in grid {
        let fitted = basis_for(data, c, k).and_then(|basis| fit_with_intervals(data, basis, lambda, eb, level, false));
        match fitted {
            Ok(f) => out.entries.extend(labels.iter().zip(&f.intervals).map(|(name, iv)| SweepEntry {
                c,
                coefficient: name.clone(),
                estimate: iv.estimate,
                low: iv.low,
                high: iv.high,
            })),
            Err(e) => out.failures.push(SweepFailure { c, error: e.to_string() }),
        }
    }
    Ok(out)
}

/// First cutoff at which `coefficient` changes sign, by linear interpolation
/// between adjacent sweep points.
pub fn estimated_crossover(entries: &[SweepEntry], coefficient: &str) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.coefficient == coefficient)
        .map(|e| (e.c, e.estimate))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((c0, v0), (c1, v1)) = (w[0], w[1]);
        if v0 == 0.0 {
            Some(c0)
        } else if v0.signum() != v1.signum() {
            Some(c0 + (c1 - c0) * v0 / (v0 - v1))
        } else {
            None
        }
    })
}
