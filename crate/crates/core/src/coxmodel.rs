//! Weighted Cox proportional-hazards fitting.
//!
//! Maximizes the observation-weighted log partial likelihood
//!
//! ```text
//! l(beta) = sum_{i: event} w_i * [ eta_i - log( sum_{j in R(t_i)} w_j exp(eta_j) ) ]
//! ```
//!
//! with Breslow handling of ties, by Newton-Raphson with step-halving. Risk
//! sets are accumulated from a single descending sort of the observation
//! times. Two variance estimates are produced: the inverse observed
//! information (`model_vcov`) and a robust sandwich `A^-1 B A^-1` built from
//! score residuals with the weights treated as fixed (`robust_vcov`).
//!
//! Covariates are centered internally before exponentiation; the optimum,
//! both variances, the log likelihood and the score residuals are invariant
//! to that shift because the partial likelihood depends only on covariate
//! differences within risk sets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Survival observations plus a regressor matrix, validated for fitting.
#[derive(Debug, Clone)]
pub struct CoxData {
    time: Vec<f64>,
    event: Vec<bool>,
    design: Matrix,
}

impl CoxData {
    pub fn new(time: Vec<f64>, event: Vec<bool>, design: Matrix) -> Result<Self> {
        let n = time.len();
        if n == 0 {
            return Err(Error::Config("no observations".into()));
        }
        if event.len() != n || design.n_rows() != n {
            return Err(Error::Config(format!(
                "length mismatch: {} times, {} events, {} design rows",
                n,
                event.len(),
                design.n_rows()
            )));
        }
        if design.n_cols() == 0 {
            return Err(Error::Config("design matrix must have at least one column".into()));
        }
        if time.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::Config("times must be finite and > 0".into()));
        }
        for i in 0..n {
            if design.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("non-finite regressor in row {i}")));
            }
        }
        Ok(Self { time, event, design })
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.design.n_cols()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }
}

/// Per-observation weights: finite, non-negative, not all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWeights(Vec<f64>);

impl ObservationWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("weights are empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weights must be finite and >= 0".into()));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::Config("at least one weight must be positive".into()));
        }
        Ok(Self(weights))
    }

    pub fn unit(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Convergence and separation-detection controls.
#[derive(Debug, Clone)]
pub struct CoxOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_abs_coef: f64,
    pub max_step_halvings: usize,
    /// A converged fit with a model SE above this is treated as separation:
    /// a fast-flattening monotone likelihood can pass the score tolerance at
    /// a finite coefficient while the maximizer is at infinity.
    pub max_model_se: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-9,
            step_tol: 1e-10,
            max_abs_coef: 15.0,
            max_step_halvings: 10,
            max_model_se: 100.0,
        }
    }
}

/// A converged fit with both variance estimates.
#[derive(Debug, Clone)]
pub struct CoxFit {
    pub coefs: Vec<f64>,
    pub model_vcov: DMatrix<f64>,
    pub robust_vcov: DMatrix<f64>,
    pub loglik: f64,
    pub n_events: usize,
    pub converged: bool,
    pub n_iter: usize,
}

impl CoxFit {
    pub fn model_se(&self, j: usize) -> f64 {
        self.model_vcov[(j, j)].sqrt()
    }

    pub fn robust_se(&self, j: usize) -> f64 {
        self.robust_vcov[(j, j)].sqrt()
    }
}

// Observations sorted by descending time, with tie-group boundaries and
// centered covariates.
struct Prepared {
    n: usize,
    p: usize,
    order: Vec<usize>,
    event: Vec<bool>,
    w: Vec<f64>,
    x: Vec<f64>,
    group_starts: Vec<usize>,
}

impl Prepared {
    fn build(data: &CoxData, weights: Option<&ObservationWeights>) -> Result<Self> {
        let n = data.n();
        let p = data.n_regressors();
        let w_input = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::Config(format!(
                        "weights length {} does not match {} observations",
                        w.len(),
                        n
                    )));
                }
                w.as_slice().to_vec()
            }
            None => vec![1.0; n],
        };

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data.time[b].total_cmp(&data.time[a]));

        let mut means = vec![0.0; p];
        for i in 0..n {
            for (j, m) in means.iter_mut().enumerate() {
                *m += data.design.get(i, j);
            }
        }
        for m in means.iter_mut() {
            *m /= n as f64;
        }

        let mut event = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n * p);
        for &idx in &order {
            event.push(data.event[idx]);
            w.push(w_input[idx]);
            for j in 0..p {
                x.push(data.design.get(idx, j) - means[j]);
            }
        }

        let mut group_starts = vec![0];
        for i in 1..n {
            if data.time[order[i]] != data.time[order[i - 1]] {
                group_starts.push(i);
            }
        }

        Ok(Self { n, p, order, event, w, x, group_starts })
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn weighted_event_mass(&self) -> f64 {
        (0..self.n).filter(|&i| self.event[i]).map(|i| self.w[i]).sum()
    }
}

#[inline]
fn exp_clamped(v: f64) -> f64 {
    v.clamp(-700.0, 700.0).exp()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Evaluation {
    loglik: f64,
    score: Vec<f64>,
    information: DMatrix<f64>,
}

fn evaluate(prep: &Prepared, beta: &[f64]) -> Evaluation {
    let n = prep.n;
    let p = prep.p;
    let mut eta = vec![0.0; n];
    let mut risk = vec![0.0; n];
    for i in 0..n {
        eta[i] = dot(prep.row(i), beta);
        risk[i] = prep.w[i] * exp_clamped(eta[i]);
    }

    let mut loglik = 0.0;
    let mut score = vec![0.0; p];
    let mut info = DMatrix::<f64>::zeros(p, p);

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut xbar = vec![0.0; p];

    for (g, &start) in prep.group_starts.iter().enumerate() {
        let end = prep.group_starts.get(g + 1).copied().unwrap_or(n);
        for i in start..end {
            let r = risk[i];
            s0 += r;
            let row = prep.row(i);
            for j in 0..p {
                s1[j] += r * row[j];
                for k in j..p {
                    let v = r * row[j] * row[k];
                    s2[(j, k)] += v;
                    if k != j {
                        s2[(k, j)] += v;
                    }
                }
            }
        }
        for i in start..end {
            if !prep.event[i] || prep.w[i] == 0.0 {
                continue;
            }
            let wi = prep.w[i];
            let row = prep.row(i);
            loglik += wi * (eta[i] - s0.ln());
            for j in 0..p {
                xbar[j] = s1[j] / s0;
                score[j] += wi * (row[j] - xbar[j]);
            }
            for j in 0..p {
                for k in j..p {
                    let v = wi * (s2[(j, k)] / s0 - xbar[j] * xbar[k]);
                    info[(j, k)] += v;
                    if k != j {
                        info[(k, j)] += v;
                    }
                }
            }
        }
    }

    Evaluation { loglik, score, information: info }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn solve_spd(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Estimation("information matrix is singular (collinear regressors?)".into()))?;
    let sol = chol.solve(&DVector::from_column_slice(b));
    Ok(sol.iter().copied().collect())
}

fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Estimation("information matrix is singular (collinear regressors?)".into()))
}

fn check_fittable(data: &CoxData, prep: &Prepared) -> Result<()> {
    if data.n_events() == 0 {
        return Err(Error::Estimation("no events in the data".into()));
    }
    if prep.weighted_event_mass() <= 0.0 {
        return Err(Error::Estimation("no positively weighted events".into()));
    }
    Ok(())
}

/// Weighted log partial likelihood at `beta` (Breslow ties).
pub fn log_partial_likelihood(
    data: &CoxData,
    weights: Option<&ObservationWeights>,
    beta: &[f64],
) -> Result<f64> {
    let prep = Prepared::build(data, weights)?;
    check_fittable(data, &prep)?;
    if beta.len() != prep.p {
        return Err(Error::Config("beta length does not match regressor count".into()));
    }
    Ok(evaluate(&prep, beta).loglik)
}

/// Analytic gradient and negative Hessian of the weighted log partial
/// likelihood at `beta`.
pub fn score_and_information(
    data: &CoxData,
    weights: Option<&ObservationWeights>,
    beta: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let prep = Prepared::build(data, weights)?;
    check_fittable(data, &prep)?;
    if beta.len() != prep.p {
        return Err(Error::Config("beta length does not match regressor count".into()));
    }
    let eval = evaluate(&prep, beta);
    Ok((DVector::from_vec(eval.score), eval.information))
}

/// Per-subject score residuals at `beta`, in the original row order.
///
/// The residual of subject `i` equals the derivative of the total score with
/// respect to that subject's weight; multiplying by the weight gives the
/// terms of the sandwich middle matrix. Summing `w_i * U_i` over subjects
/// recovers the score.
pub fn score_residuals(
    data: &CoxData,
    weights: Option<&ObservationWeights>,
    beta: &[f64],
) -> Result<Matrix> {
    let prep = Prepared::build(data, weights)?;
    check_fittable(data, &prep)?;
    if beta.len() != prep.p {
        return Err(Error::Config("beta length does not match regressor count".into()));
    }

    let n = prep.n;
    let p = prep.p;
    let mut eta = vec![0.0; n];
    let mut risk = vec![0.0; n];
    for i in 0..n {
        eta[i] = dot(prep.row(i), beta);
        risk[i] = prep.w[i] * exp_clamped(eta[i]);
    }

    // Descending pass: risk-set sums at each tie group.
    let n_groups = prep.group_starts.len();
    let mut group_s0 = vec![0.0; n_groups];
    let mut group_xbar = vec![vec![0.0; p]; n_groups];
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    for (g, &start) in prep.group_starts.iter().enumerate() {
        let end = prep.group_starts.get(g + 1).copied().unwrap_or(n);
        for i in start..end {
            let r = risk[i];
            s0 += r;
            let row = prep.row(i);
            for j in 0..p {
                s1[j] += r * row[j];
            }
        }
        group_s0[g] = s0;
        // A risk set whose members all have zero weight has no defined mean;
        // any finite value works because such residuals only ever enter the
        // sandwich multiplied by those zero weights.
        for j in 0..p {
            group_xbar[g][j] = if s0 > 0.0 { s1[j] / s0 } else { 0.0 };
        }
    }

    // Ascending pass: cumulative hazard-increment sums over event times
    // up to and including each subject's observation time.
    let mut residuals = Matrix::zeros(n, p);
    let mut g0 = 0.0;
    let mut g1 = vec![0.0; p];
    for g in (0..n_groups).rev() {
        let start = prep.group_starts[g];
        let end = prep.group_starts.get(g + 1).copied().unwrap_or(n);
        for i in start..end {
            if prep.event[i] && prep.w[i] > 0.0 {
                let inc = prep.w[i] / group_s0[g];
                g0 += inc;
                for j in 0..p {
                    g1[j] += inc * group_xbar[g][j];
                }
            }
        }
        for i in start..end {
            let row = prep.row(i);
            let e = exp_clamped(eta[i]);
            let original = prep.order[i];
            for j in 0..p {
                let event_part = if prep.event[i] { row[j] - group_xbar[g][j] } else { 0.0 };
                residuals.set(original, j, event_part - e * (row[j] * g0 - g1[j]));
            }
        }
    }
    Ok(residuals)
}

/// Fit the weighted Cox model by Newton-Raphson with step-halving.
pub fn fit_cox(
    data: &CoxData,
    weights: Option<&ObservationWeights>,
    options: &CoxOptions,
) -> Result<CoxFit> {
    let prep = Prepared::build(data, weights)?;
    check_fittable(data, &prep)?;
    let p = prep.p;

    let mut beta = vec![0.0; p];
    let mut eval = evaluate(&prep, &beta);
    let mut converged = false;
    let mut n_iter = 0;

    for iter in 1..=options.max_iter {
        n_iter = iter;
        if max_abs(&eval.score) < options.grad_tol {
            converged = true;
            break;
        }

        let direction = solve_spd(&eval.information, &eval.score)?;
        // Near the optimum the likelihood gain falls below f64 resolution, so
        // accept any step that does not degrade it beyond rounding noise.
        let slack = 1e-11 * (1.0 + eval.loglik.abs());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_step_halvings {
            let candidate: Vec<f64> =
                beta.iter().zip(&direction).map(|(b, d)| b + scale * d).collect();
            let cand_eval = evaluate(&prep, &candidate);
            if cand_eval.loglik.is_finite() && cand_eval.loglik > eval.loglik - slack {
                accepted = Some((candidate, cand_eval, scale));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, cand_eval, scale)) = accepted else {
            return Err(Error::Separation(
                "step-halving failed to improve the partial likelihood; \
                 monotone likelihood (separation) suspected"
                    .into(),
            ));
        };

        let step = scale * max_abs(&direction);
        beta = candidate;
        eval = cand_eval;

        if max_abs(&beta) > options.max_abs_coef {
            return Err(Error::Separation(format!(
                "coefficient magnitude exceeded {} during fitting; \
                 monotone likelihood (separation) suspected",
                options.max_abs_coef
            )));
        }
        if step < options.step_tol {
            converged = true;
            break;
        }
    }

    if !converged && max_abs(&eval.score) < options.grad_tol {
        converged = true;
    }
    if !converged {
        return Err(Error::Estimation(format!(
            "Newton-Raphson did not converge in {} iterations (max |score| = {:.3e})",
            options.max_iter,
            max_abs(&eval.score)
        )));
    }

    let model_vcov = spd_inverse(&eval.information)?;
    for j in 0..p {
        if model_vcov[(j, j)].sqrt() > options.max_model_se {
            return Err(Error::Separation(format!(
                "coefficient {j} is not identified (model SE {:.3e} exceeds {}); \
                 monotone or near-flat partial likelihood suspected",
                model_vcov[(j, j)].sqrt(),
                options.max_model_se
            )));
        }
    }

    let residuals = score_residuals(data, weights, &beta)?;
    let w = match weights {
        Some(w) => w.as_slice().to_vec(),
        None => vec![1.0; prep.n],
    };
    let mut middle = DMatrix::<f64>::zeros(p, p);
    for i in 0..prep.n {
        for j in 0..p {
            let uj = w[i] * residuals.get(i, j);
            for k in j..p {
                let v = uj * w[i] * residuals.get(i, k);
                middle[(j, k)] += v;
                if k != j {
                    middle[(k, j)] += v;
                }
            }
        }
    }
    let robust_vcov = &model_vcov * middle * &model_vcov;

    Ok(CoxFit {
        coefs: beta,
        model_vcov,
        robust_vcov,
        loglik: eval.loglik,
        n_events: data.n_events(),
        converged,
        n_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, StreamRole};
    use rand::Rng;
    use rand_distr::Open01;

    fn simple_data(rows: &[(f64, bool, f64)]) -> CoxData {
        let design =
            Matrix::from_rows(&rows.iter().map(|r| vec![r.2]).collect::<Vec<_>>()).unwrap();
        CoxData::new(
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            design,
        )
        .unwrap()
    }

    // Independent evaluation of the weighted Breslow log partial likelihood,
    // written directly from the risk-set definition (O(n^2)).
    fn oracle_log_pl(
        times: &[f64],
        events: &[bool],
        x: &Matrix,
        w: &[f64],
        beta: &[f64],
    ) -> f64 {
        let n = times.len();
        let mut ll = 0.0;
        for i in 0..n {
            if !events[i] || w[i] == 0.0 {
                continue;
            }
            let mut denom = 0.0;
            for j in 0..n {
                if times[j] >= times[i] {
                    let eta: f64 = x.row(j).iter().zip(beta).map(|(a, b)| a * b).sum();
                    denom += w[j] * eta.exp();
                }
            }
            let eta_i: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            ll += w[i] * (eta_i - denom.ln());
        }
        ll
    }

    fn oracle_grid_argmax(
        times: &[f64],
        events: &[bool],
        x: &Matrix,
        w: &[f64],
        lo: f64,
        hi: f64,
        step: f64,
    ) -> f64 {
        let mut best_beta = lo;
        let mut best_ll = f64::NEG_INFINITY;
        let mut beta = lo;
        while beta <= hi {
            let ll = oracle_log_pl(times, events, x, w, &[beta]);
            if ll > best_ll {
                best_ll = ll;
                best_beta = beta;
            }
            beta += step;
        }
        best_beta
    }

    fn random_data(seed: u64, n: usize, p: usize) -> (CoxData, Vec<f64>) {
        let mut rng = derive_rng(seed, 0, 0, StreamRole::Probe);
        let mut rows = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(p);
            row.push(if i % 2 == 0 { 1.0 } else { 0.0 });
            for _ in 1..p {
                let u: f64 = rng.sample(Open01);
                row.push(2.0 * u - 1.0);
            }
            let lp: f64 = row.iter().sum::<f64>() * 0.4;
            let u: f64 = rng.sample(Open01);
            times.push(-u.ln() / (0.8 * lp.exp()));
            events.push(rng.random::<f64>() < 0.75);
            weights.push(0.25 + 2.0 * rng.random::<f64>());
            rows.push(row);
        }
        if !events.iter().any(|e| *e) {
            events[0] = true;
        }
        let data = CoxData::new(times, events, Matrix::from_rows(&rows).unwrap()).unwrap();
        (data, weights)
    }

    #[test]
    fn unit_weights_match_omitted_weights() {
        let (data, _) = random_data(21, 80, 3);
        let opts = CoxOptions::default();
        let a = fit_cox(&data, None, &opts).unwrap();
        let b = fit_cox(&data, Some(&ObservationWeights::unit(80)), &opts).unwrap();
        for j in 0..3 {
            assert!((a.coefs[j] - b.coefs[j]).abs() < 1e-10);
            for k in 0..3 {
                assert!((a.model_vcov[(j, k)] - b.model_vcov[(j, k)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn four_subject_fit_matches_grid_search_oracle() {
        let data = simple_data(&[(1.0, true, 1.0), (2.0, true, 0.0), (3.0, true, 1.0), (4.0, true, 0.0)]);
        let fit = fit_cox(&data, None, &CoxOptions::default()).unwrap();
        let w = vec![1.0; 4];
        let grid = oracle_grid_argmax(
            &[1.0, 2.0, 3.0, 4.0],
            &[true; 4],
            &Matrix::from_rows(&[vec![1.0], vec![0.0], vec![1.0], vec![0.0]]).unwrap(),
            &w,
            -10.0,
            10.0,
            1e-4,
        );
        assert!((fit.coefs[0] - grid).abs() < 2e-4, "fit {} vs grid {}", fit.coefs[0], grid);
        assert!((fit.coefs[0] - 0.941).abs() < 5e-3);
        assert!(fit.converged);
    }

    #[test]
    fn weighted_fit_matches_weighted_grid_oracle() {
        let times = vec![2.0, 5.0, 1.0, 7.0, 3.0, 4.0];
        let events = vec![true, true, true, false, true, true];
        let x = Matrix::from_rows(&[
            vec![1.0],
            vec![0.0],
            vec![1.0],
            vec![0.0],
            vec![0.0],
            vec![1.0],
        ])
        .unwrap();
        let w = vec![0.5, 2.0, 1.0, 1.5, 0.75, 1.25];
        let data = CoxData::new(times.clone(), events.clone(), x.clone()).unwrap();
        let weights = ObservationWeights::new(w.clone()).unwrap();
        let fit = fit_cox(&data, Some(&weights), &CoxOptions::default()).unwrap();
        let grid = oracle_grid_argmax(&times, &events, &x, &w, -10.0, 10.0, 1e-4);
        assert!((fit.coefs[0] - grid).abs() < 2e-4, "fit {} vs grid {}", fit.coefs[0], grid);
    }

    #[test]
    fn tied_event_times_match_breslow_grid_oracle() {
        let times = vec![1.0, 1.0, 2.0, 2.0, 3.0, 4.0];
        let events = vec![true, true, true, false, true, true];
        let x = Matrix::from_rows(&[
            vec![1.0],
            vec![0.0],
            vec![1.0],
            vec![0.0],
            vec![1.0],
            vec![0.0],
        ])
        .unwrap();
        let w = vec![1.0; 6];
        let data = CoxData::new(times.clone(), events.clone(), x.clone()).unwrap();
        let fit = fit_cox(&data, None, &CoxOptions::default()).unwrap();
        let grid = oracle_grid_argmax(&times, &events, &x, &w, -10.0, 10.0, 1e-4);
        assert!((fit.coefs[0] - grid).abs() < 2e-4, "fit {} vs grid {}", fit.coefs[0], grid);
    }

    #[test]
    fn two_subject_monotone_likelihood_is_flagged_as_separation() {
        let data = simple_data(&[(1.0, true, 1.0), (2.0, true, 0.0)]);
        match fit_cox(&data, None, &CoxOptions::default()) {
            Err(Error::Separation(_)) => {}
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn fast_flattening_monotone_likelihood_is_flagged_as_separation() {
        // PL = 1/(1 + exp(-4.0065 b)): monotone increasing, but the score
        // drops below the gradient tolerance near b = 5.5, well before the
        // coefficient-magnitude guard can fire.
        let data = simple_data(&[
            (4.982501225929598, true, 1.5855390812135672),
            (8.930511291961668, true, -2.4209506591850634),
        ]);
        match fit_cox(&data, None, &CoxOptions::default()) {
            Err(Error::Separation(_)) => {}
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn score_vanishes_at_the_optimum() {
        let (data, w) = random_data(22, 150, 3);
        let weights = ObservationWeights::new(w).unwrap();
        let fit = fit_cox(&data, Some(&weights), &CoxOptions::default()).unwrap();
        let (score, _) = score_and_information(&data, Some(&weights), &fit.coefs).unwrap();
        assert!(
            score.iter().all(|s| s.abs() < 1e-8),
            "score = {:?}, n_iter = {}",
            score.as_slice(),
            fit.n_iter
        );
    }

    #[test]
    fn analytic_score_matches_finite_differences() {
        let (data, w) = random_data(23, 60, 3);
        let weights = ObservationWeights::new(w).unwrap();
        for beta in [vec![0.0, 0.0, 0.0], vec![0.3, -0.5, 0.2], vec![-0.8, 0.1, 0.6]] {
            let (score, _) = score_and_information(&data, Some(&weights), &beta).unwrap();
            let h = 1e-5;
            for j in 0..3 {
                let mut up = beta.clone();
                let mut down = beta.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (log_partial_likelihood(&data, Some(&weights), &up).unwrap()
                    - log_partial_likelihood(&data, Some(&weights), &down).unwrap())
                    / (2.0 * h);
                let tol = 1e-6 * score[j].abs().max(1.0);
                assert!((score[j] - fd).abs() < tol, "j={j}: {} vs {}", score[j], fd);
            }
        }
    }

    #[test]
    fn information_is_symmetric() {
        let (data, w) = random_data(24, 60, 3);
        let weights = ObservationWeights::new(w).unwrap();
        let (_, info) = score_and_information(&data, Some(&weights), &[0.2, -0.3, 0.1]).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                assert!((info[(j, k)] - info[(k, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn estimate_is_invariant_to_weight_scaling() {
        let (data, w) = random_data(25, 120, 2);
        let opts = CoxOptions::default();
        let a = fit_cox(&data, Some(&ObservationWeights::new(w.clone()).unwrap()), &opts).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| 3.7 * v).collect();
        let b = fit_cox(&data, Some(&ObservationWeights::new(scaled).unwrap()), &opts).unwrap();
        for j in 0..2 {
            assert!((a.coefs[j] - b.coefs[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn weighted_residuals_sum_to_the_score() {
        let (data, w) = random_data(26, 90, 3);
        let weights = ObservationWeights::new(w.clone()).unwrap();
        let beta = [0.25, -0.4, 0.1];
        let (score, _) = score_and_information(&data, Some(&weights), &beta).unwrap();
        let residuals = score_residuals(&data, Some(&weights), &beta).unwrap();
        for j in 0..3 {
            let total: f64 = (0..data.n()).map(|i| w[i] * residuals.get(i, j)).sum();
            assert!(
                (total - score[j]).abs() < 1e-9 * score[j].abs().max(1.0),
                "j={j}: {} vs {}",
                total,
                score[j]
            );
        }
    }

    #[test]
    fn residuals_match_weight_perturbation_of_the_score() {
        let (data, w) = random_data(27, 40, 2);
        let beta = [0.3, -0.2];
        let residuals =
            score_residuals(&data, Some(&ObservationWeights::new(w.clone()).unwrap()), &beta)
                .unwrap();
        let h = 1e-6;
        for i in [0usize, 7, 19, 33] {
            for j in 0..2 {
                let mut up = w.clone();
                let mut down = w.clone();
                up[i] += h;
                down[i] -= h;
                let (s_up, _) = score_and_information(
                    &data,
                    Some(&ObservationWeights::new(up).unwrap()),
                    &beta,
                )
                .unwrap();
                let (s_down, _) = score_and_information(
                    &data,
                    Some(&ObservationWeights::new(down).unwrap()),
                    &beta,
                )
                .unwrap();
                let fd = (s_up[j] - s_down[j]) / (2.0 * h);
                let tol = 1e-6 * residuals.get(i, j).abs().max(1.0);
                assert!(
                    (residuals.get(i, j) - fd).abs() < tol,
                    "i={i}, j={j}: {} vs {}",
                    residuals.get(i, j),
                    fd
                );
            }
        }
    }

    #[test]
    fn zero_weight_row_is_equivalent_to_dropping_it() {
        let (data, _) = random_data(28, 30, 2);
        let mut w = vec![1.0; 30];
        w[11] = 0.0;
        let fit_zeroed =
            fit_cox(&data, Some(&ObservationWeights::new(w).unwrap()), &CoxOptions::default())
                .unwrap();

        let keep: Vec<usize> = (0..30).filter(|&i| i != 11).collect();
        let rows: Vec<Vec<f64>> = keep.iter().map(|&i| data.design.row(i).to_vec()).collect();
        let dropped = CoxData::new(
            keep.iter().map(|&i| data.time[i]).collect(),
            keep.iter().map(|&i| data.event[i]).collect(),
            Matrix::from_rows(&rows).unwrap(),
        )
        .unwrap();
        let fit_dropped = fit_cox(&dropped, None, &CoxOptions::default()).unwrap();
        for j in 0..2 {
            assert!((fit_zeroed.coefs[j] - fit_dropped.coefs[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_weight_subject_alone_at_the_latest_time_keeps_variances_finite() {
        let data = simple_data(&[
            (1.0, true, 1.0),
            (2.0, true, 0.0),
            (3.0, true, 1.0),
            (4.0, true, 0.0),
            (9.0, true, 1.0),
        ]);
        let w = ObservationWeights::new(vec![1.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        let fit = fit_cox(&data, Some(&w), &CoxOptions::default()).unwrap();
        assert!(fit.robust_vcov[(0, 0)].is_finite());
        assert!(fit.model_vcov[(0, 0)].is_finite());
    }

    #[test]
    fn no_events_is_an_estimation_error() {
        let data = simple_data(&[(1.0, false, 1.0), (2.0, false, 0.0)]);
        assert!(matches!(
            fit_cox(&data, None, &CoxOptions::default()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn collinear_regressors_are_an_estimation_error() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let v = if i % 2 == 0 { 1.0 } else { 0.0 };
                vec![v, 2.0 * v]
            })
            .collect();
        let data = CoxData::new(
            (1..=20).map(|t| t as f64).collect(),
            vec![true; 20],
            Matrix::from_rows(&rows).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            fit_cox(&data, None, &CoxOptions::default()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn robust_and_model_se_agree_for_large_unweighted_samples() {
        // Single binary regressor, exponential times, no censoring.
        let n = 20_000;
        let mut rng = derive_rng(29, 0, 0, StreamRole::Probe);
        let mut rows = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        for i in 0..n {
            let trt = if i < n / 2 { 1.0 } else { 0.0 };
            let rate = if trt > 0.5 { 1.6 } else { 1.0 };
            let u: f64 = rng.sample(Open01);
            times.push(-u.ln() / rate);
            rows.push(vec![trt]);
        }
        let data = CoxData::new(times, vec![true; n], Matrix::from_rows(&rows).unwrap()).unwrap();
        let fit = fit_cox(&data, None, &CoxOptions::default()).unwrap();
        let rel = (fit.robust_se(0) - fit.model_se(0)).abs() / fit.model_se(0);
        assert!(rel < 0.05, "relative SE gap {rel}");
    }
}
