//! Factorial scenario grid and Monte Carlo study runner.
//!
//! The benchmark crosses five factors — AC sample size, prognostic strength,
//! interaction strength, covariate correlation, and AC covariate mean — into
//! 162 scenarios. Each replicate generates an AC trial and a BC trial from
//! the shared mechanism (both active treatments carry the same treatment
//! coefficient and interaction effects, so the true marginal A vs. B effect
//! in the BC population is zero), aggregates BC, and analyzes the same data
//! with MAIC, STC and the Bucher comparison. Estimator failures never abort
//! a run; they are recorded as per-row status codes and excluded later by
//! the metrics layer.

pub mod persist;

use rayon::prelude::*;

use crate::datagen::{aggregate_trial, generate_trial, CovariateSpec, OutcomeModelParams};
use crate::error::{Error, Result};
use crate::itc::{bucher_estimate, indirect_comparison};
use crate::maic::{maic_estimate, VarianceMethod};
use crate::rng::{derive_rng, StreamRole};
use crate::stc::{stc_estimate, StcModelSpec};

/// The true marginal A vs. B log hazard ratio in the BC population: both
/// active treatments share the treatment coefficient and interaction
/// effects, so the contrast is null in every scenario.
pub const TRUE_LOG_HR_AB: f64 = 0.0;

pub const N_COVARIATES: usize = 4;
pub const EFFECT_MODIFIER_INDICES: [usize; 2] = [2, 3];
pub const BC_SAMPLE_SIZE: usize = 600;
pub const BC_COVARIATE_MEAN: f64 = 0.6;
pub const WEIBULL_INVERSE_SCALE: f64 = 8.5;
pub const WEIBULL_SHAPE: f64 = 1.3;
pub const DEFAULT_CENSORING_RATE: f64 = 0.96;
pub const DEFAULT_CENSORING_TARGET: f64 = 0.35;

/// Marginal covariate standard deviation (variance 0.2). This value
/// calibrates the mean ESS reductions at the three overlap levels to
/// approximately 19%, 53% and 79%.
pub fn covariate_sd() -> f64 {
    0.2f64.sqrt()
}

pub fn treatment_coef() -> f64 {
    0.25f64.ln()
}

pub fn n_ac_levels() -> [usize; 3] {
    [150, 300, 600]
}

/// Conditional hazard ratios of roughly 1.5, 2 and 3 per prognostic unit.
pub fn prognostic_levels() -> [f64; 3] {
    [-(0.67f64.ln()), -(0.5f64.ln()), -(0.33f64.ln())]
}

pub fn interaction_levels() -> [f64; 3] {
    prognostic_levels()
}

pub fn correlation_levels() -> [f64; 2] {
    [0.0, 0.35]
}

/// Strong, moderate and poor covariate overlap with the BC mean of 0.6.
pub fn ac_mean_levels() -> [f64; 3] {
    [0.45, 0.30, 0.15]
}

/// One cell of the factorial grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub id: u32,
    pub n_ac: usize,
    pub prognostic_coef: f64,
    pub interaction_coef: f64,
    pub correlation: f64,
    pub ac_covariate_mean: f64,
}

impl Scenario {
    pub fn ac_covariate_spec(&self) -> CovariateSpec {
        CovariateSpec::new(
            vec![self.ac_covariate_mean; N_COVARIATES],
            vec![covariate_sd(); N_COVARIATES],
            self.correlation,
            EFFECT_MODIFIER_INDICES.to_vec(),
        )
        .expect("study covariate spec is valid")
    }

    /// BC covariates share the correlation level of the scenario.
    pub fn bc_covariate_spec(&self) -> CovariateSpec {
        CovariateSpec::new(
            vec![BC_COVARIATE_MEAN; N_COVARIATES],
            vec![covariate_sd(); N_COVARIATES],
            self.correlation,
            EFFECT_MODIFIER_INDICES.to_vec(),
        )
        .expect("study covariate spec is valid")
    }

    pub fn outcome_params(&self, censoring_rate: f64) -> OutcomeModelParams {
        OutcomeModelParams {
            weibull_inverse_scale: WEIBULL_INVERSE_SCALE,
            weibull_shape: WEIBULL_SHAPE,
            prognostic_coefs: vec![self.prognostic_coef; N_COVARIATES],
            interaction_coefs: vec![self.interaction_coef; EFFECT_MODIFIER_INDICES.len()],
            treatment_coef: treatment_coef(),
            censoring_rate,
        }
    }
}

/// Enumerate the grid in the fixed nesting order (sample size outermost,
/// AC covariate mean innermost); ids run 1..=162 and are stable.
pub fn build_grid(filter: Option<&dyn Fn(&Scenario) -> bool>) -> Vec<Scenario> {
    let mut scenarios = Vec::with_capacity(162);
    let mut id = 0u32;
    for &n_ac in &n_ac_levels() {
        for &prognostic_coef in &prognostic_levels() {
            for &interaction_coef in &interaction_levels() {
                for &correlation in &correlation_levels() {
                    for &ac_covariate_mean in &ac_mean_levels() {
                        id += 1;
                        let s = Scenario {
                            id,
                            n_ac,
                            prognostic_coef,
                            interaction_coef,
                            correlation,
                            ac_covariate_mean,
                        };
                        if filter.map(|f| f(&s)).unwrap_or(true) {
                            scenarios.push(s);
                        }
                    }
                }
            }
        }
    }
    scenarios
}

/// The 12-scenario desk-scale subset: smallest AC sample size, strongest
/// prognostic effects, crossed with both interaction-strength extremes, both
/// correlation levels and all three overlap levels (grid ids 37-42, 49-54).
pub fn desk_grid() -> Vec<Scenario> {
    let levels = interaction_levels();
    let (moderate, very_strong) = (levels[0], levels[2]);
    build_grid(Some(&|s: &Scenario| {
        s.n_ac == 150
            && s.prognostic_coef == very_strong
            && (s.interaction_coef == moderate || s.interaction_coef == very_strong)
    }))
}

/// Estimation method applied to a replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Maic,
    Stc,
    Bucher,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Maic, Method::Stc, Method::Bucher];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Maic => "maic",
            Method::Stc => "stc",
            Method::Bucher => "bucher",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "maic" => Ok(Method::Maic),
            "stc" => Ok(Method::Stc),
            "bucher" => Ok(Method::Bucher),
            _ => Err(Error::Parse(format!("unknown method '{s}'"))),
        }
    }
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    WeightFailure,
    Separation,
    CoxFailure,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::WeightFailure => "weight_failure",
            RunStatus::Separation => "separation",
            RunStatus::CoxFailure => "cox_failure",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RunStatus::Ok),
            "weight_failure" => Ok(RunStatus::WeightFailure),
            "separation" => Ok(RunStatus::Separation),
            "cox_failure" => Ok(RunStatus::CoxFailure),
            _ => Err(Error::Parse(format!("unknown status '{s}'"))),
        }
    }
}

/// One row of the replicate table: the A vs. B estimate of one method on one
/// simulated dataset, or its failure status.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub scenario_id: u32,
    pub replicate_id: u32,
    pub method: Method,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub status: RunStatus,
    pub ess: Option<f64>,
}

/// Immutable run settings shared by every replicate.
#[derive(Debug, Clone)]
pub struct StudySettings {
    pub seed_root: u64,
    pub n_replicates: u32,
    pub workers: usize,
    pub maic_variance: VarianceMethod,
    pub censoring_rate: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            seed_root: 42,
            n_replicates: 1000,
            workers: 1,
            maic_variance: VarianceMethod::Sandwich,
            censoring_rate: DEFAULT_CENSORING_RATE,
        }
    }
}

fn status_of(err: &Error) -> RunStatus {
    match err {
        Error::WeightNonConvergence(_) => RunStatus::WeightFailure,
        Error::Separation(_) => RunStatus::Separation,
        _ => RunStatus::CoxFailure,
    }
}

/// Run all three methods on one simulated replicate (common random numbers:
/// every method sees the same AC trial and BC summary).
pub fn run_replicate(
    scenario: &Scenario,
    replicate_id: u32,
    settings: &StudySettings,
) -> Vec<ReplicateResult> {
    let row = |method: Method, outcome: Result<(f64, f64)>, ess: Option<f64>| match outcome {
        Ok((estimate, se)) => ReplicateResult {
            scenario_id: scenario.id,
            replicate_id,
            method,
            estimate: Some(estimate),
            se: Some(se),
            status: RunStatus::Ok,
            ess,
        },
        Err(err) => ReplicateResult {
            scenario_id: scenario.id,
            replicate_id,
            method,
            estimate: None,
            se: None,
            status: status_of(&err),
            ess: None,
        },
    };

    let params = scenario.outcome_params(settings.censoring_rate);
    let mut ac_rng =
        derive_rng(settings.seed_root, scenario.id as u64, replicate_id as u64, StreamRole::AcTrial);
    let mut bc_rng =
        derive_rng(settings.seed_root, scenario.id as u64, replicate_id as u64, StreamRole::BcTrial);

    let prepared = (|| -> Result<_> {
        let ac = generate_trial(&scenario.ac_covariate_spec(), &params, scenario.n_ac, &mut ac_rng)?;
        let bc_trial =
            generate_trial(&scenario.bc_covariate_spec(), &params, BC_SAMPLE_SIZE, &mut bc_rng)?;
        let bc = aggregate_trial(&bc_trial)?;
        Ok((ac, bc))
    })();

    let (ac, bc) = match prepared {
        Ok(pair) => pair,
        Err(err) => {
            // Data generation or aggregation failed: every method inherits it.
            return Method::ALL
                .iter()
                .map(|&m| row(m, Err(Error::Estimation(format!("data stage: {err}"))), None))
                .collect();
        }
    };

    let maic_row = {
        let mut boot_rng = derive_rng(
            settings.seed_root,
            scenario.id as u64,
            replicate_id as u64,
            StreamRole::Bootstrap,
        );
        match maic_estimate(&ac, &bc, settings.maic_variance, &mut boot_rng) {
            Ok(m) => {
                let ab = indirect_comparison(&m.effect, &bc.effect);
                row(Method::Maic, Ok((ab.value, ab.se)), Some(m.weights.ess))
            }
            Err(err) => row(Method::Maic, Err(err), None),
        }
    };

    let stc_row = match stc_estimate(&ac, &bc, &StcModelSpec::study_default()) {
        Ok(est) => {
            let ab = indirect_comparison(&est, &bc.effect);
            row(Method::Stc, Ok((ab.value, ab.se)), None)
        }
        Err(err) => row(Method::Stc, Err(err), None),
    };

    let bucher_row = match bucher_estimate(&ac, &bc) {
        Ok(ab) => row(Method::Bucher, Ok((ab.value, ab.se)), None),
        Err(err) => row(Method::Bucher, Err(err), None),
    };

    vec![maic_row, stc_row, bucher_row]
}

/// Run `grid x n_replicates` and return all rows sorted by
/// (scenario, replicate, method). Content is identical for any worker count.
pub fn run_study(
    grid: &[Scenario],
    settings: &StudySettings,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<Vec<ReplicateResult>> {
    let todo: Vec<(Scenario, u32)> = grid
        .iter()
        .flat_map(|s| (0..settings.n_replicates).map(move |r| (*s, r)))
        .collect();
    run_tasks(&todo, settings, progress)
}

/// Run an explicit set of (scenario, replicate) pairs.
pub fn run_tasks(
    tasks: &[(Scenario, u32)],
    settings: &StudySettings,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<Vec<ReplicateResult>> {
    if settings.n_replicates == 0 {
        return Err(Error::Config("replicate count must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("could not build worker pool: {e}")))?;

    let total = tasks.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<ReplicateResult> = pool.install(|| {
        tasks
            .par_iter()
            .flat_map_iter(|(scenario, replicate)| {
                let rows = run_replicate(scenario, *replicate, settings);
                if let Some(cb) = progress {
                    let d = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                    cb(d, total);
                }
                rows
            })
            .collect()
    });
    results.sort_by_key(|r| (r.scenario_id, r.replicate_id, r.method));
    Ok(results)
}

/// Counts of non-ok rows by status, for run reports.
pub fn failure_counts(results: &[ReplicateResult]) -> Vec<(RunStatus, usize)> {
    let statuses = [RunStatus::WeightFailure, RunStatus::Separation, RunStatus::CoxFailure];
    statuses
        .iter()
        .map(|&s| (s, results.iter().filter(|r| r.status == s).count()))
        .collect()
}
