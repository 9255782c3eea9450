//! `calibrate-censoring`: locate the exponential rate hitting the target
//! censoring proportion under active treatment at baseline.

use popadjust::datagen::calibrate_censoring_rate;
use popadjust::rng::{derive_rng, StreamRole};

use crate::{CalibrateArgs, CliResult};

pub fn execute(args: CalibrateArgs) -> CliResult<()> {
    let seed = crate::env_seed_override()?.unwrap_or(args.seed);
    let grid = popadjust::simengine::build_grid(None);
    let params = grid[0].outcome_params(popadjust::simengine::DEFAULT_CENSORING_RATE);
    let mut rng = derive_rng(seed, 0, 0, StreamRole::Probe);
    let rate = calibrate_censoring_rate(args.target, &params, args.probe_n, &mut rng)?;
    println!("lambda_c={rate:.6}");
    println!("target={} probe_n={} seed={seed}", args.target, args.probe_n);
    Ok(())
}
