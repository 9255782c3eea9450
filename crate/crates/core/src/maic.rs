//! Matching-adjusted indirect comparison.
//!
//! The AC effect modifiers are centered on the published BC means and the
//! trial-selection weights `w_i = exp(c_i' a)` are obtained by minimizing the
//! convex objective `Q(a) = sum_i exp(c_i' a)`; the gradient of `Q` is the
//! moment-balance condition, so a vanishing gradient means the weighted
//! effect-modifier means equal the BC targets. The intercept of the
//! trial-selection model is absorbed by the centering and never needs to be
//! estimated. A weighted treatment-only Cox model then gives the marginal
//! A vs. C effect in the BC population with a robust sandwich SE (weights
//! treated as fixed) or a nonparametric bootstrap SE.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::coxmodel::{fit_cox, CoxData, CoxFit, CoxOptions, ObservationWeights};
use crate::datagen::{AldSummary, Arm, IpdRecord, IpdTrial};
use crate::error::{Error, Result};
use crate::itc::EstimateWithSE;
use crate::matrix::Matrix;
use crate::stats::sample_sd;

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;
const MAX_ABS_ALPHA: f64 = 50.0;
const MAX_STALLED: usize = 20;

/// Solved trial-selection weights with diagnostics.
#[derive(Debug, Clone)]
pub struct WeightSolution {
    pub alpha1: Vec<f64>,
    pub weights: ObservationWeights,
    pub ess: f64,
    pub objective_value: f64,
}

impl WeightSolution {
    /// True when every weight equals 1 (no reweighting happened).
    pub fn is_unit(&self) -> bool {
        self.weights.as_slice().iter().all(|w| (*w - 1.0).abs() < 1e-12)
    }
}

/// How the standard error of the weighted effect is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMethod {
    /// Robust sandwich with the weights treated as fixed.
    Sandwich,
    /// Standard deviation over nonparametric resamples of the whole trial,
    /// re-estimating the weights inside each resample.
    Bootstrap { replicates: usize },
}

/// A population-adjusted effect together with the weights that produced it.
#[derive(Debug, Clone)]
pub struct MaicEstimate {
    pub effect: EstimateWithSE,
    pub weights: WeightSolution,
}

/// Subtract the BC effect-modifier means from the AC effect-modifier columns.
///
/// Target means supplied for non-designated covariates are ignored.
pub fn center_effect_modifiers(ipd: &IpdTrial, targets: &AldSummary) -> Result<Matrix> {
    let em = ipd.effect_modifier_indices();
    if em.is_empty() {
        return Err(Error::Config("no effect modifiers designated".into()));
    }
    if let Some(&j) = em.iter().find(|&&j| j >= targets.covariate_means.len()) {
        return Err(Error::Config(format!("no target mean for effect modifier x{}", j + 1)));
    }
    let mut out = Matrix::zeros(ipd.n(), em.len());
    for (i, r) in ipd.records().iter().enumerate() {
        for (jj, &j) in em.iter().enumerate() {
            out.set(i, jj, r.covariates[j] - targets.covariate_means[j]);
        }
    }
    Ok(out)
}

// A target on or outside the componentwise support makes the first-order
// condition unattainable: a centered column that never changes sign cannot
// have a zero weighted mean with strictly positive weights.
fn check_target_support(centered: &Matrix) -> Result<()> {
    for j in 0..centered.n_cols() {
        let col = centered.column(j);
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if (min >= 0.0 && max > 0.0) || (max <= 0.0 && min < 0.0) {
            return Err(Error::WeightNonConvergence(
                "no finite solution: target outside covariate support".into(),
            ));
        }
    }
    Ok(())
}

/// Minimize `Q(a) = sum_i exp(c_i' a)` by damped Newton iterations.
pub fn estimate_weights(centered: &Matrix) -> Result<WeightSolution> {
    let n = centered.n_rows();
    let m = centered.n_cols();
    if n == 0 || m == 0 {
        return Err(Error::Config("centered effect-modifier matrix is empty".into()));
    }
    check_target_support(centered)?;

    let eval = |alpha: &[f64]| -> (f64, Vec<f64>, DMatrix<f64>) {
        let mut q = 0.0;
        let mut grad = vec![0.0; m];
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            let row = centered.row(i);
            let e: f64 = row.iter().zip(alpha).map(|(c, a)| c * a).sum::<f64>().exp();
            q += e;
            for j in 0..m {
                grad[j] += row[j] * e;
                for k in j..m {
                    let v = row[j] * row[k] * e;
                    hess[(j, k)] += v;
                    if k != j {
                        hess[(k, j)] += v;
                    }
                }
            }
        }
        (q, grad, hess)
    };

    let mut alpha = vec![0.0f64; m];
    let (mut q, mut grad, mut hess) = eval(&alpha);
    let mut best_grad_norm = f64::INFINITY;
    let mut stalled = 0usize;

    for _ in 0..MAX_ITER {
        let grad_norm = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if grad_norm < GRAD_TOL {
            let weights: Vec<f64> = (0..n)
                .map(|i| centered.row(i).iter().zip(&alpha).map(|(c, a)| c * a).sum::<f64>().exp())
                .collect();
            let ess_value = ess(&weights)?;
            return Ok(WeightSolution {
                alpha1: alpha,
                weights: ObservationWeights::new(weights)?,
                ess: ess_value,
                objective_value: q,
            });
        }
        if grad_norm < best_grad_norm * (1.0 - 1e-12) {
            best_grad_norm = grad_norm;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= MAX_STALLED {
                return Err(Error::WeightNonConvergence(
                    "no finite solution: target outside covariate support".into(),
                ));
            }
        }

        // Newton direction; ridge-damped retry if the Hessian is singular.
        let rhs = DVector::from_column_slice(&grad);
        let direction = match hess.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => {
                let ridge = 1e-10 * (hess.trace() / m as f64).max(1e-300);
                let damped = &hess + DMatrix::identity(m, m) * ridge;
                damped
                    .cholesky()
                    .ok_or_else(|| {
                        Error::Estimation(
                            "weight Hessian is singular (degenerate effect modifiers?)".into(),
                        )
                    })?
                    .solve(&rhs)
            }
        };

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> =
                alpha.iter().zip(direction.iter()).map(|(a, d)| a - scale * d).collect();
            let (q_new, g_new, h_new) = eval(&candidate);
            if q_new.is_finite() && q_new <= q * (1.0 + 1e-14) {
                alpha = candidate;
                q = q_new;
                grad = g_new;
                hess = h_new;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::WeightNonConvergence(
                "step-halving failed to reduce the weight objective".into(),
            ));
        }
        if alpha.iter().any(|a| a.abs() > MAX_ABS_ALPHA) {
            return Err(Error::WeightNonConvergence(
                "no finite solution: target outside covariate support".into(),
            ));
        }
    }
    Err(Error::WeightNonConvergence(format!(
        "weight estimation did not converge in {MAX_ITER} iterations"
    )))
}

/// Effective sample size `(sum w)^2 / sum w^2`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    if sum_sq <= 0.0 {
        return Err(Error::Domain("all weights are zero".into()));
    }
    Ok(sum * sum / sum_sq)
}

/// Weighted mean of the observed times in one arm (diagnostic only; the
/// anchored comparison works on relative effects).
pub fn weighted_mean_outcome(ipd: &IpdTrial, weights: &ObservationWeights, arm: Arm) -> Result<f64> {
    if weights.len() != ipd.n() {
        return Err(Error::Config("weights length does not match trial size".into()));
    }
    let flag = arm.indicator();
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, &w) in ipd.records().iter().zip(weights.as_slice()) {
        if r.treatment == flag {
            num += r.time * w;
            den += w;
        }
    }
    if den <= 0.0 {
        return Err(Error::Domain("arm is empty or has zero total weight".into()));
    }
    Ok(num / den)
}

/// Weighted covariate means, for balance reporting.
pub fn weighted_covariate_means(ipd: &IpdTrial, weights: &ObservationWeights) -> Vec<f64> {
    let k = ipd.n_covariates();
    let mut num = vec![0.0; k];
    let mut den = 0.0;
    for (r, &w) in ipd.records().iter().zip(weights.as_slice()) {
        for (j, &x) in r.covariates.iter().enumerate() {
            num[j] += w * x;
        }
        den += w;
    }
    num.iter().map(|v| v / den).collect()
}

fn weighted_treatment_fit(ipd: &IpdTrial, weights: &ObservationWeights) -> Result<CoxFit> {
    let design = Matrix::from_rows(
        &ipd.records()
            .iter()
            .map(|r| vec![if r.treatment { 1.0 } else { 0.0 }])
            .collect::<Vec<_>>(),
    )?;
    let data = CoxData::new(ipd.times(), ipd.events(), design)?;
    fit_cox(&data, Some(weights), &CoxOptions::default())
}

/// The full MAIC pipeline: balance the designated effect modifiers on the BC
/// means, fit the weighted treatment-only Cox model, and return the marginal
/// A vs. C log hazard ratio in the BC population.
pub fn maic_estimate<R: Rng>(
    ipd: &IpdTrial,
    targets: &AldSummary,
    variance: VarianceMethod,
    rng: &mut R,
) -> Result<MaicEstimate> {
    let centered = center_effect_modifiers(ipd, targets)?;
    let solution = estimate_weights(&centered)?;
    let fit = weighted_treatment_fit(ipd, &solution.weights)?;
    let point = fit.coefs[0];

    let se = match variance {
        VarianceMethod::Sandwich => fit.robust_se(0),
        VarianceMethod::Bootstrap { replicates } => {
            if replicates < 2 {
                return Err(Error::Config("bootstrap needs at least 2 replicates".into()));
            }
            let n = ipd.n();
            let mut estimates = Vec::with_capacity(replicates);
            let mut failures = 0usize;
            while estimates.len() < replicates {
                let records: Vec<IpdRecord> =
                    (0..n).map(|_| ipd.records()[rng.random_range(0..n)].clone()).collect();
                match resample_estimate(records, ipd.effect_modifier_indices(), targets) {
                    Ok(est) => estimates.push(est),
                    Err(_) => {
                        failures += 1;
                        if failures > replicates {
                            return Err(Error::Estimation(
                                "bootstrap failed on more resamples than requested".into(),
                            ));
                        }
                    }
                }
            }
            sample_sd(&estimates)
        }
    };

    Ok(MaicEstimate { effect: EstimateWithSE::new(point, se)?, weights: solution })
}

fn resample_estimate(
    records: Vec<IpdRecord>,
    effect_modifiers: &[usize],
    targets: &AldSummary,
) -> Result<f64> {
    let trial = IpdTrial::new(records, effect_modifiers.to_vec())?;
    let centered = center_effect_modifiers(&trial, targets)?;
    let solution = estimate_weights(&centered)?;
    let fit = weighted_treatment_fit(&trial, &solution.weights)?;
    Ok(fit.coefs[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_trial, CovariateSpec, OutcomeModelParams};
    use crate::rng::{derive_rng, StreamRole};
    use proptest::prelude::*;

    fn targets(means: Vec<f64>) -> AldSummary {
        AldSummary { covariate_means: means, effect: EstimateWithSE::new(-0.7, 0.12).unwrap() }
    }

    fn study_params() -> OutcomeModelParams {
        OutcomeModelParams {
            weibull_inverse_scale: 8.5,
            weibull_shape: 1.3,
            prognostic_coefs: vec![0.4; 4],
            interaction_coefs: vec![0.4; 2],
            treatment_coef: 0.25f64.ln(),
            censoring_rate: 0.96,
        }
    }

    fn trial(mean: f64, sd: f64, n: usize, seed: u64) -> IpdTrial {
        let spec = CovariateSpec::new(vec![mean; 4], vec![sd; 4], 0.0, vec![2, 3]).unwrap();
        let mut rng = derive_rng(seed, 0, 0, StreamRole::AcTrial);
        generate_trial(&spec, &study_params(), n, &mut rng).unwrap()
    }

    #[test]
    fn centering_is_plain_subtraction() {
        let t = trial(0.45, 0.4, 100, 50);
        let ald = targets(vec![0.6; 4]);
        let centered = center_effect_modifiers(&t, &ald).unwrap();
        let x = t.covariate_matrix();
        for (jj, &j) in [2usize, 3].iter().enumerate() {
            let expected = x.column_mean(j) - 0.6;
            assert!((centered.column_mean(jj) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn centering_at_own_means_gives_zero_columns() {
        let t = trial(0.45, 0.4, 100, 51);
        let x = t.covariate_matrix();
        let ald = targets(x.column_means());
        let centered = center_effect_modifiers(&t, &ald).unwrap();
        assert!(centered.column_mean(0).abs() < 1e-12);
        assert!(centered.column_mean(1).abs() < 1e-12);
    }

    #[test]
    fn extra_target_means_are_ignored_but_missing_ones_fail() {
        let t = trial(0.45, 0.4, 40, 52);
        assert!(center_effect_modifiers(&t, &targets(vec![0.6; 9])).is_ok());
        assert!(matches!(
            center_effect_modifiers(&t, &targets(vec![0.6; 2])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn one_dimensional_closed_form_solution() {
        // c = {-1, 2}: -exp(-a) + 2 exp(2a) = 0  =>  e^{3a} = 1/2.
        let centered = Matrix::from_rows(&[vec![-1.0], vec![2.0]]).unwrap();
        let sol = estimate_weights(&centered).unwrap();
        let expected_alpha = -(2.0f64.ln()) / 3.0;
        assert!((sol.alpha1[0] - expected_alpha).abs() < 1e-10);
        let w = sol.weights.as_slice();
        assert!((w[0] - 2.0f64.powf(1.0 / 3.0)).abs() < 1e-9);
        assert!((w[1] - 2.0f64.powf(-2.0 / 3.0)).abs() < 1e-9);
        let weighted_mean = (-w[0] + 2.0 * w[1]) / (w[0] + w[1]);
        assert!(weighted_mean.abs() < 1e-10);
        assert!((w[0] - 1.2599).abs() < 1e-4);
        assert!((w[1] - 0.6300).abs() < 1e-4);
    }

    #[test]
    fn symmetric_sample_needs_no_reweighting() {
        let centered = Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let sol = estimate_weights(&centered).unwrap();
        assert_eq!(sol.alpha1[0], 0.0);
        assert_eq!(sol.weights.as_slice(), &[1.0, 1.0]);
        assert!((sol.ess - 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_target_is_a_non_convergence_error() {
        let centered = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        match estimate_weights(&centered) {
            Err(Error::WeightNonConvergence(msg)) => {
                assert!(msg.contains("outside covariate support"));
            }
            other => panic!("expected weight non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn target_outside_range_is_a_non_convergence_error() {
        let centered = Matrix::from_rows(&[vec![0.5], vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(estimate_weights(&centered), Err(Error::WeightNonConvergence(_))));
    }

    #[test]
    fn ess_examples() {
        assert!((ess(&[1.0, 1.0, 1.0, 1.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!((ess(&[1.0, 3.0]).unwrap() - 1.6).abs() < 1e-12);
        assert!(matches!(ess(&[0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn ess_is_scale_invariant() {
        proptest!(|(c in 0.01f64..100.0, n in 2usize..40)| {
            let w = vec![c; n];
            prop_assert!((ess(&w).unwrap() - n as f64).abs() < 1e-9);
        });
    }

    #[test]
    fn weighted_mean_outcome_identities() {
        let t = trial(0.45, 0.4, 60, 53);
        let unit = ObservationWeights::unit(t.n());
        let active_mean = weighted_mean_outcome(&t, &unit, Arm::Active).unwrap();
        let times: Vec<f64> =
            t.records().iter().filter(|r| r.treatment).map(|r| r.time).collect();
        assert!((active_mean - crate::stats::mean(&times)).abs() < 1e-12);

        // One-hot weights pick out a single subject.
        let mut w = vec![0.0; t.n()];
        w[3] = 1.0;
        let one = ObservationWeights::new(w).unwrap();
        let arm = if t.records()[3].treatment { Arm::Active } else { Arm::Comparator };
        assert_eq!(weighted_mean_outcome(&t, &one, arm).unwrap(), t.records()[3].time);

        // Scaling all weights changes nothing.
        let doubled =
            ObservationWeights::new(unit.as_slice().iter().map(|w| 2.0 * w).collect()).unwrap();
        assert!(
            (weighted_mean_outcome(&t, &doubled, Arm::Active).unwrap() - active_mean).abs() < 1e-12
        );

        // Zero weight on a whole arm is a domain error.
        let active_only = ObservationWeights::new(
            t.records().iter().map(|r| if r.treatment { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        assert!(matches!(
            weighted_mean_outcome(&t, &active_only, Arm::Comparator),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn equal_means_reduce_to_the_unweighted_fit() {
        let t = trial(0.45, 0.4, 200, 54);
        let ald = targets(t.covariate_matrix().column_means());
        let mut rng = derive_rng(54, 0, 0, StreamRole::Bootstrap);
        let maic = maic_estimate(&t, &ald, VarianceMethod::Sandwich, &mut rng).unwrap();
        assert!(maic.weights.is_unit());
        let unweighted = crate::itc::unadjusted_ac_effect(&t).unwrap();
        assert!((maic.effect.value - unweighted.value).abs() < 1e-12);
        assert!((maic.weights.ess - t.n() as f64).abs() < 1e-9);
    }

    #[test]
    fn moment_balance_holds_after_estimation() {
        for seed in 60..70u64 {
            let t = trial(0.45, 0.4, 150, seed);
            let ald = targets(vec![0.6; 4]);
            let centered = center_effect_modifiers(&t, &ald).unwrap();
            let sol = estimate_weights(&centered).unwrap();
            let wm = weighted_covariate_means(&t, &sol.weights);
            for &j in t.effect_modifier_indices() {
                assert!(
                    (wm[j] - 0.6).abs() < 1e-8,
                    "seed {seed}: weighted mean x{} = {}",
                    j + 1,
                    wm[j]
                );
            }
        }
    }

    #[test]
    fn solution_is_invariant_to_row_order() {
        let t = trial(0.45, 0.4, 80, 55);
        let ald = targets(vec![0.6; 4]);
        let centered = center_effect_modifiers(&t, &ald).unwrap();
        let sol = estimate_weights(&centered).unwrap();

        let mut rows: Vec<Vec<f64>> =
            (0..centered.n_rows()).map(|i| centered.row(i).to_vec()).collect();
        rows.reverse();
        rows.swap(3, 17);
        let shuffled = Matrix::from_rows(&rows).unwrap();
        let sol2 = estimate_weights(&shuffled).unwrap();
        for j in 0..2 {
            assert!((sol.alpha1[j] - sol2.alpha1[j]).abs() < 1e-10);
        }
        assert!((sol.ess - sol2.ess).abs() < 1e-8);
    }
}
