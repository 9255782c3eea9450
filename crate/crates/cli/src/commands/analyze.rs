//! `analyze {maic|stc|bucher}`: run one estimator on a user-supplied
//! IPD/ALD pair and print the within-trial and indirect effects.

use std::fs::File;
use std::io::BufReader;

use popadjust::datagen::{read_ald_kv, read_ipd_csv, AldSummary, IpdTrial};
use popadjust::itc::{bucher_estimate, confidence_interval, indirect_comparison, EstimateWithSE};
use popadjust::maic::{
    maic_estimate, weighted_covariate_means, MaicEstimate, VarianceMethod,
};
use popadjust::rng::{derive_rng, StreamRole};
use popadjust::stc::{stc_estimate, StcModelSpec};

use crate::config::parse_effect_modifiers;
use crate::{AnalyzeCommonArgs, AnalyzeMaicArgs, AnalyzeStcArgs, CliError, CliResult, VarianceArg};

fn load_inputs(args: &AnalyzeCommonArgs) -> CliResult<(IpdTrial, AldSummary)> {
    let em = parse_effect_modifiers(&args.effect_modifiers)?;
    let ipd_file = File::open(&args.ipd)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", args.ipd)))?;
    let ipd = read_ipd_csv(BufReader::new(ipd_file), em)?;
    let ald_file = File::open(&args.ald)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", args.ald)))?;
    let ald = read_ald_kv(BufReader::new(ald_file))?;
    Ok((ipd, ald))
}

fn print_effect_block(label: &str, est: &EstimateWithSE) -> CliResult<()> {
    let ci = confidence_interval(est, 0.95)?;
    println!(
        "{label}: logHR {:>8.4}  SE {:.4}  95% CI [{:.4}, {:.4}]",
        est.value, est.se, ci.lower, ci.upper
    );
    Ok(())
}

fn print_indirect(ac_label: &str, ac: &EstimateWithSE, bc: &EstimateWithSE) -> CliResult<()> {
    print_effect_block(ac_label, ac)?;
    println!("B vs C (published):                logHR {:>8.4}  SE {:.4}", bc.value, bc.se);
    let ab = indirect_comparison(ac, bc);
    print_effect_block("A vs B (indirect)", &ab)
}

pub fn print_balance_table(ipd: &IpdTrial, ald: &AldSummary, maic: &MaicEstimate) {
    let unweighted = ipd.covariate_matrix().column_means();
    let weighted = weighted_covariate_means(ipd, &maic.weights.weights);
    println!("balance (unweighted AC | weighted AC | BC target):");
    for j in 0..ipd.n_covariates() {
        let role = if ipd.effect_modifier_indices().contains(&j) {
            "effect modifier"
        } else {
            "prognostic"
        };
        let target = ald
            .covariate_means
            .get(j)
            .map(|m| format!("{m:.4}"))
            .unwrap_or_else(|| "   NA".to_string());
        println!(
            "  x{:<2} {:>8.4} | {:>8.4} | {:>8} ({role})",
            j + 1,
            unweighted[j],
            weighted[j],
            target
        );
    }
}

pub fn execute_maic(args: AnalyzeMaicArgs) -> CliResult<()> {
    let (ipd, ald) = load_inputs(&args.common)?;
    let seed = crate::env_seed_override()?.unwrap_or(args.seed);
    let variance = match args.variance {
        VarianceArg::Sandwich => VarianceMethod::Sandwich,
        VarianceArg::Bootstrap => VarianceMethod::Bootstrap { replicates: args.bootstrap_reps },
    };
    let mut rng = derive_rng(seed, 0, 0, StreamRole::Bootstrap);
    let maic = maic_estimate(&ipd, &ald, variance, &mut rng)?;

    println!("MAIC (marginal effect via trial-selection weighting)");
    let alpha: Vec<String> = maic.weights.alpha1.iter().map(|a| format!("{a:.4}")).collect();
    println!("alpha1 = [{}]", alpha.join(", "));
    let n = ipd.n() as f64;
    println!(
        "ESS: {:.1} of {} ({:.1}% reduction)",
        maic.weights.ess,
        ipd.n(),
        100.0 * (1.0 - maic.weights.ess / n)
    );
    print_balance_table(&ipd, &ald, &maic);
    print_indirect("A vs C, marginal (BC population)", &maic.effect, &ald.effect)
}

pub fn execute_stc(args: AnalyzeStcArgs) -> CliResult<()> {
    let (ipd, ald) = load_inputs(&args.common)?;
    let spec = StcModelSpec::new(
        (0..ipd.n_covariates()).collect(),
        ipd.effect_modifier_indices().to_vec(),
        !args.center_all,
    )?;
    let est = stc_estimate(&ipd, &ald, &spec)?;
    println!("STC (centered outcome regression)");
    print_indirect("conditional log HR (A vs C, BC-centered)", &est, &ald.effect)
}

pub fn execute_bucher(args: AnalyzeCommonArgs) -> CliResult<()> {
    let (ipd, ald) = load_inputs(&args)?;
    let ac = popadjust::itc::unadjusted_ac_effect(&ipd)?;
    println!("Bucher (standard unadjusted indirect comparison)");
    print_effect_block("A vs C, marginal (AC population)", &ac)?;
    println!("B vs C (published):                logHR {:>8.4}  SE {:.4}", ald.effect.value, ald.effect.se);
    let ab = bucher_estimate(&ipd, &ald)?;
    print_effect_block("A vs B (indirect)", &ab)
}
