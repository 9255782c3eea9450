//! Distributional properties of the MAIC weighting step.

use popadjust::datagen::{generate_trial, AldSummary, CovariateSpec, OutcomeModelParams};
use popadjust::itc::EstimateWithSE;
use popadjust::maic::{
    center_effect_modifiers, estimate_weights, maic_estimate, VarianceMethod,
};
use popadjust::rng::{derive_rng, StreamRole};

const SD: f64 = 0.4472135954999579;

fn params() -> OutcomeModelParams {
    OutcomeModelParams {
        weibull_inverse_scale: 8.5,
        weibull_shape: 1.3,
        prognostic_coefs: vec![0.7; 4],
        interaction_coefs: vec![0.7; 2],
        treatment_coef: 0.25f64.ln(),
        censoring_rate: 0.96,
    }
}

fn bc_targets() -> AldSummary {
    AldSummary {
        covariate_means: vec![0.6; 4],
        effect: EstimateWithSE::new(-0.7, 0.12).unwrap(),
    }
}

fn mean_ess(ac_mean: f64, rho: f64, n: usize, reps: u64, seed: u64) -> f64 {
    let spec = CovariateSpec::new(vec![ac_mean; 4], vec![SD; 4], rho, vec![2, 3]).unwrap();
    let p = params();
    let targets = bc_targets();
    let mut total = 0.0;
    let mut used = 0.0;
    for rep in 0..reps {
        // Matched seeds across calls: the stream key ignores ac_mean/rho.
        let mut rng = derive_rng(seed, 0, rep, StreamRole::AcTrial);
        let trial = generate_trial(&spec, &p, n, &mut rng).unwrap();
        let centered = center_effect_modifiers(&trial, &targets).unwrap();
        if let Ok(sol) = estimate_weights(&centered) {
            total += sol.ess;
            used += 1.0;
        }
    }
    assert!(used > reps as f64 * 0.95, "too many weight failures");
    total / used
}

#[test]
fn ess_decreases_as_the_covariate_gap_grows() {
    let strong = mean_ess(0.45, 0.0, 200, 100, 401);
    let moderate = mean_ess(0.30, 0.0, 200, 100, 401);
    let poor = mean_ess(0.15, 0.0, 200, 100, 401);
    assert!(
        strong > moderate && moderate > poor,
        "mean ESS: strong {strong}, moderate {moderate}, poor {poor}"
    );
}

#[test]
fn correlation_increases_joint_overlap_and_ess() {
    let independent = mean_ess(0.30, 0.0, 200, 500, 402);
    let correlated = mean_ess(0.30, 0.35, 200, 500, 402);
    assert!(
        correlated >= independent,
        "mean ESS: rho=0.35 {correlated} vs rho=0 {independent}"
    );
}

#[test]
fn bootstrap_se_agrees_with_sandwich_on_a_large_balanced_trial() {
    // Equal AC and BC means: weights are near unit, so both variance routes
    // should approach the same large-sample answer.
    let spec = CovariateSpec::new(vec![0.6; 4], vec![SD; 4], 0.0, vec![2, 3]).unwrap();
    let mut rng = derive_rng(403, 0, 0, StreamRole::AcTrial);
    let trial = generate_trial(&spec, &params(), 2_000, &mut rng).unwrap();
    let targets = bc_targets();

    let mut sandwich_rng = derive_rng(403, 0, 0, StreamRole::Bootstrap);
    let sandwich =
        maic_estimate(&trial, &targets, VarianceMethod::Sandwich, &mut sandwich_rng).unwrap();
    let mut boot_rng = derive_rng(403, 0, 1, StreamRole::Bootstrap);
    let bootstrap = maic_estimate(
        &trial,
        &targets,
        VarianceMethod::Bootstrap { replicates: 1000 },
        &mut boot_rng,
    )
    .unwrap();

    assert!((bootstrap.effect.value - sandwich.effect.value).abs() < 1e-12);
    let rel = (bootstrap.effect.se - sandwich.effect.se).abs() / sandwich.effect.se;
    assert!(
        rel < 0.15,
        "bootstrap se {} vs sandwich se {} (rel {rel})",
        bootstrap.effect.se,
        sandwich.effect.se
    );
}
