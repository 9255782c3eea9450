//! Trial data generation under a Weibull proportional-hazards mechanism.
//!
//! Survival times follow the inverse-transform construction
//! `tau = (-log u / (lambda * exp(LP)))^(1/nu)` with linear predictor
//! `LP = X b1 + (b_T + X_em b2) * 1(T = 1)`, right-censored by independent
//! exponential censoring times. Covariates are multivariate normal with an
//! exchangeable correlation structure; since all marginals are normal this
//! coincides with the Gaussian-copula construction and is sampled directly
//! via a Cholesky factor.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use crate::coxmodel::{fit_cox, CoxData, CoxOptions};
use crate::error::{Error, Result};
use crate::itc::EstimateWithSE;
use crate::matrix::Matrix;
use crate::solve::brent_root;

/// Marginal means/sds, exchangeable correlation, and the designated
/// effect-modifier subset of the covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSpec {
    means: Vec<f64>,
    sds: Vec<f64>,
    pairwise_correlation: f64,
    effect_modifier_indices: Vec<usize>,
}

impl CovariateSpec {
    pub fn new(
        means: Vec<f64>,
        sds: Vec<f64>,
        pairwise_correlation: f64,
        effect_modifier_indices: Vec<usize>,
    ) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Config("at least one covariate is required".into()));
        }
        if sds.len() != means.len() {
            return Err(Error::Config(format!(
                "means/sds length mismatch: {} vs {}",
                means.len(),
                sds.len()
            )));
        }
        if sds.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Config("covariate sds must be finite and > 0".into()));
        }
        if !(0.0..1.0).contains(&pairwise_correlation) {
            return Err(Error::Config(format!(
                "pairwise correlation must lie in [0, 1), got {pairwise_correlation}"
            )));
        }
        let mut em = effect_modifier_indices;
        let declared = em.len();
        em.sort_unstable();
        em.dedup();
        if em.len() != declared {
            return Err(Error::Config("duplicate effect-modifier indices".into()));
        }
        if em.iter().any(|&k| k >= means.len()) {
            return Err(Error::Config("effect-modifier index out of range".into()));
        }
        Ok(Self { means, sds, pairwise_correlation, effect_modifier_indices: em })
    }

    pub fn n_covariates(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn pairwise_correlation(&self) -> f64 {
        self.pairwise_correlation
    }

    pub fn effect_modifier_indices(&self) -> &[usize] {
        &self.effect_modifier_indices
    }

    fn cholesky_factor(&self) -> Result<DMatrix<f64>> {
        let k = self.n_covariates();
        let rho = self.pairwise_correlation;
        let cov = DMatrix::from_fn(k, k, |i, j| {
            let r = if i == j { 1.0 } else { rho };
            self.sds[i] * self.sds[j] * r
        });
        cov.cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::Config("correlation matrix is not positive definite".into()))
    }
}

/// Weibull outcome-model parameters and the exponential censoring rate.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModelParams {
    pub weibull_inverse_scale: f64,
    pub weibull_shape: f64,
    pub prognostic_coefs: Vec<f64>,
    pub interaction_coefs: Vec<f64>,
    pub treatment_coef: f64,
    pub censoring_rate: f64,
}

impl OutcomeModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("weibull inverse scale", self.weibull_inverse_scale),
            ("weibull shape", self.weibull_shape),
            ("censoring rate", self.censoring_rate),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One subject: covariates, arm, observed time and event indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct IpdRecord {
    pub covariates: Vec<f64>,
    pub treatment: bool,
    pub time: f64,
    pub event: bool,
}

/// Treatment arm label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Active,
    Comparator,
}

impl Arm {
    pub fn indicator(self) -> bool {
        matches!(self, Arm::Active)
    }
}

/// Individual patient data for one two-arm trial.
#[derive(Debug, Clone, PartialEq)]
pub struct IpdTrial {
    records: Vec<IpdRecord>,
    effect_modifier_indices: Vec<usize>,
}

impl IpdTrial {
    pub fn new(records: Vec<IpdRecord>, effect_modifier_indices: Vec<usize>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Config("trial has no records".into()));
        }
        let k = records[0].covariates.len();
        if records.iter().any(|r| r.covariates.len() != k) {
            return Err(Error::Config("records have inconsistent covariate lengths".into()));
        }
        if records.iter().any(|r| !r.time.is_finite() || r.time <= 0.0) {
            return Err(Error::Config("record times must be finite and > 0".into()));
        }
        if !records.iter().any(|r| r.treatment) || !records.iter().any(|r| !r.treatment) {
            return Err(Error::Config("both arms must be present".into()));
        }
        if effect_modifier_indices.iter().any(|&j| j >= k) {
            return Err(Error::Config("effect-modifier index out of range".into()));
        }
        Ok(Self { records, effect_modifier_indices })
    }

    pub fn records(&self) -> &[IpdRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.records[0].covariates.len()
    }

    pub fn effect_modifier_indices(&self) -> &[usize] {
        &self.effect_modifier_indices
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        let flag = arm.indicator();
        self.records.iter().filter(|r| r.treatment == flag).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.treatment).collect()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn covariate_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n(), self.n_covariates());
        for (i, r) in self.records.iter().enumerate() {
            for (j, &x) in r.covariates.iter().enumerate() {
                m.set(i, j, x);
            }
        }
        m
    }

    /// Serialize as CSV with header `x1,...,xK,trt,time,event`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let k = self.n_covariates();
        let header: Vec<String> = (1..=k)
            .map(|j| format!("x{j}"))
            .chain(["trt".into(), "time".into(), "event".into()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut fields: Vec<String> = r.covariates.iter().map(|v| v.to_string()).collect();
            fields.push(if r.treatment { "1" } else { "0" }.into());
            fields.push(r.time.to_string());
            fields.push(if r.event { "1" } else { "0" }.into());
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Parse an IPD CSV produced by [`IpdTrial::write_csv`].
///
/// The CSV does not encode the effect-modifier designation, so it is supplied
/// by the caller (0-based covariate indices).
pub fn read_ipd_csv<R: BufRead>(reader: R, effect_modifier_indices: Vec<usize>) -> Result<IpdTrial> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty IPD file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 4 || cols[cols.len() - 3..] != ["trt", "time", "event"] {
        return Err(Error::Parse(
            "IPD header must be x1,...,xK,trt,time,event".into(),
        ));
    }
    let k = cols.len() - 3;
    for (j, c) in cols[..k].iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(Error::Parse(format!("unexpected covariate column name '{c}'")));
        }
    }

    let parse_f64 = |s: &str, what: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|_| Error::Parse(format!("line {line}: invalid {what} '{s}'")))
    };
    let parse_flag = |s: &str, what: &str, line: usize| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Parse(format!("line {line}: invalid {what} '{s}'"))),
    };

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 3 {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields, found {}",
                idx + 2,
                k + 3,
                fields.len()
            )));
        }
        let covariates = fields[..k]
            .iter()
            .map(|s| parse_f64(s, "covariate", idx + 2))
            .collect::<Result<Vec<f64>>>()?;
        records.push(IpdRecord {
            covariates,
            treatment: parse_flag(fields[k], "treatment flag", idx + 2)?,
            time: parse_f64(fields[k + 1], "time", idx + 2)?,
            event: parse_flag(fields[k + 2], "event flag", idx + 2)?,
        });
    }
    IpdTrial::new(records, effect_modifier_indices)
}

/// Published-style aggregate summary of a trial: covariate means plus the
/// marginal log hazard ratio with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct AldSummary {
    pub covariate_means: Vec<f64>,
    pub effect: EstimateWithSE,
}

impl AldSummary {
    /// Serialize as flat `key=value` lines (`mean.x1=...`, `logHR=...`, `se=...`).
    pub fn write_kv<W: Write>(&self, w: &mut W) -> Result<()> {
        for (j, m) in self.covariate_means.iter().enumerate() {
            writeln!(w, "mean.x{}={}", j + 1, m)?;
        }
        writeln!(w, "logHR={}", self.effect.value)?;
        writeln!(w, "se={}", self.effect.se)?;
        Ok(())
    }
}

/// Parse an ALD key-value file produced by [`AldSummary::write_kv`].
pub fn read_ald_kv<R: BufRead>(reader: R) -> Result<AldSummary> {
    let mut map = HashMap::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("malformed ALD line '{line}'")))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get_f64 = |key: &str| -> Result<f64> {
        map.get(key)
            .ok_or_else(|| Error::Parse(format!("missing ALD key '{key}'")))?
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("invalid number for ALD key '{key}'")))
    };

    let mut covariate_means = Vec::new();
    loop {
        let key = format!("mean.x{}", covariate_means.len() + 1);
        if !map.contains_key(&key) {
            break;
        }
        covariate_means.push(get_f64(&key)?);
    }
    if covariate_means.is_empty() {
        return Err(Error::Parse("ALD file has no mean.x* entries".into()));
    }
    let effect = EstimateWithSE::new(get_f64("logHR")?, get_f64("se")?)?;
    Ok(AldSummary { covariate_means, effect })
}

/// Linear predictor on the log-hazard scale.
fn linear_predictor(
    x: &[f64],
    treatment: bool,
    params: &OutcomeModelParams,
    effect_modifiers: &[usize],
) -> f64 {
    let mut lp: f64 = x
        .iter()
        .zip(&params.prognostic_coefs)
        .map(|(xi, bi)| xi * bi)
        .sum();
    if treatment {
        let mut active = params.treatment_coef;
        for (&j, b2) in effect_modifiers.iter().zip(&params.interaction_coefs) {
            active += x[j] * b2;
        }
        lp += active;
    }
    lp
}

/// Draw an `n x K` covariate sample with the requested normal marginals and
/// exchangeable correlation.
pub fn sample_covariates<R: Rng>(spec: &CovariateSpec, n: usize, rng: &mut R) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let k = spec.n_covariates();
    let l = spec.cholesky_factor()?;
    let mut out = Matrix::zeros(n, k);
    let mut z = vec![0.0f64; k];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        for j in 0..k {
            let mut v = spec.means[j];
            for (jj, zv) in z.iter().enumerate().take(j + 1) {
                v += l[(j, jj)] * zv;
            }
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Invert the Weibull proportional-hazards survival function at `u`.
pub fn survival_time(
    u: f64,
    x: &[f64],
    treatment: bool,
    params: &OutcomeModelParams,
    effect_modifiers: &[usize],
) -> Result<f64> {
    if !(0.0 < u && u < 1.0) {
        return Err(Error::Domain(format!("u must lie in (0, 1), got {u}")));
    }
    params.validate()?;
    let lp = linear_predictor(x, treatment, params, effect_modifiers);
    let scale = params.weibull_inverse_scale * lp.exp();
    Ok((-u.ln() / scale).powf(1.0 / params.weibull_shape))
}

/// Invert the exponential censoring distribution at `u`.
pub fn censoring_time(u: f64, rate: f64) -> Result<f64> {
    if !(0.0 < u && u < 1.0) {
        return Err(Error::Domain(format!("u must lie in (0, 1), got {u}")));
    }
    if !rate.is_finite() || rate <= 0.0 {
        return Err(Error::Domain(format!("censoring rate must be > 0, got {rate}")));
    }
    Ok(-u.ln() / rate)
}

/// Calibrate the exponential censoring rate to hit `target_rate` censoring
/// among active-arm subjects with covariates fixed at zero.
///
/// A probe sample of `n_probe` survival times and censoring exponentials is
/// drawn once; the observed censoring proportion is then a monotone function
/// of the rate and the target is located with Brent's method.
pub fn calibrate_censoring_rate<R: Rng>(
    target_rate: f64,
    params: &OutcomeModelParams,
    n_probe: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(0.0 < target_rate && target_rate < 1.0) {
        return Err(Error::Domain(format!(
            "target censoring rate must lie in (0, 1), got {target_rate}"
        )));
    }
    if n_probe == 0 {
        return Err(Error::Config("probe size must be at least 1".into()));
    }
    params.validate()?;

    let zeros = vec![0.0; params.prognostic_coefs.len()];
    // A subject is censored iff exp_draw / rate < tau, i.e. rate > exp_draw / tau.
    // The per-subject thresholds make the observed proportion an empirical CDF.
    let mut thresholds: Vec<f64> = (0..n_probe)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            let tau = survival_time(u, &zeros, true, params, &[])?;
            let uc: f64 = rng.sample(Open01);
            Ok(-uc.ln() / tau)
        })
        .collect::<Result<Vec<f64>>>()?;
    thresholds.sort_by(|a, b| a.total_cmp(b));

    let censored_proportion = |rate: f64| {
        thresholds.partition_point(|t| *t < rate) as f64 / n_probe as f64
    };

    let (lo, hi) = (1e-8, 64.0);
    if censored_proportion(lo) - target_rate > 0.0 || censored_proportion(hi) - target_rate < 0.0 {
        return Err(Error::Calibration(format!(
            "target censoring rate {target_rate} not bracketed on [{lo}, {hi}]"
        )));
    }
    brent_root(|rate| censored_proportion(rate) - target_rate, lo, hi, 1e-7, 200)
}

/// Generate a 1:1 two-arm trial of size `n` (first half active).
pub fn generate_trial<R: Rng>(
    spec: &CovariateSpec,
    params: &OutcomeModelParams,
    n: usize,
    rng: &mut R,
) -> Result<IpdTrial> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "sample size must be even and >= 2 for 1:1 allocation, got {n}"
        )));
    }
    params.validate()?;
    if params.prognostic_coefs.len() != spec.n_covariates() {
        return Err(Error::Config(format!(
            "prognostic coefficient count {} does not match {} covariates",
            params.prognostic_coefs.len(),
            spec.n_covariates()
        )));
    }
    if params.interaction_coefs.len() != spec.effect_modifier_indices.len() {
        return Err(Error::Config(format!(
            "interaction coefficient count {} does not match {} effect modifiers",
            params.interaction_coefs.len(),
            spec.effect_modifier_indices.len()
        )));
    }

    let x = sample_covariates(spec, n, rng)?;
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let treatment = i < n / 2;
        let u: f64 = rng.sample(Open01);
        let survival = survival_time(u, x.row(i), treatment, params, spec.effect_modifier_indices())?;
        let uc: f64 = rng.sample(Open01);
        let censoring = censoring_time(uc, params.censoring_rate)?;
        records.push(IpdRecord {
            covariates: x.row(i).to_vec(),
            treatment,
            time: survival.min(censoring),
            event: survival <= censoring,
        });
    }
    IpdTrial::new(records, spec.effect_modifier_indices().to_vec())
}

/// Aggregate a trial into published-style summaries: covariate means and the
/// marginal (treatment-only, unweighted Cox) log hazard ratio with model SE.
pub fn aggregate_trial(trial: &IpdTrial) -> Result<AldSummary> {
    let covariate_means = trial.covariate_matrix().column_means();
    let design = Matrix::from_rows(
        &trial
            .records()
            .iter()
            .map(|r| vec![if r.treatment { 1.0 } else { 0.0 }])
            .collect::<Vec<_>>(),
    )?;
    let data = CoxData::new(trial.times(), trial.events(), design)?;
    let fit = fit_cox(&data, None, &CoxOptions::default())?;
    let effect = EstimateWithSE::new(fit.coefs[0], fit.model_se(0))?;
    Ok(AldSummary { covariate_means, effect })
}
