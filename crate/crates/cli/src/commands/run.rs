//! `run`: execute the study with incremental persistence, then summarize.

use std::io::BufWriter;
use std::path::Path;

use popadjust::datagen::calibrate_censoring_rate;
use popadjust::metrics::{summarize, write_summary_csv};
use popadjust::rng::{derive_rng, StreamRole};
use popadjust::simengine::persist::run_study_in_dir;
use popadjust::simengine::{failure_counts, StudySettings, TRUE_LOG_HR_AB};

use crate::config::RunConfig;
use crate::{CliError, CliResult, RunArgs};

pub fn execute(args: RunArgs) -> CliResult<()> {
    let config = RunConfig::resolve(&args)?;
    if config.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let grid = config.select_scenarios()?;

    let censoring_rate = if config.recalibrate_censoring {
        let params = grid[0].outcome_params(popadjust::simengine::DEFAULT_CENSORING_RATE);
        let mut rng = derive_rng(config.seed, 0, 0, StreamRole::Probe);
        let rate =
            calibrate_censoring_rate(config.censoring_target, &params, config.probe_n, &mut rng)?;
        eprintln!(
            "recalibrated censoring rate: {rate:.6} (target {}, probe n = {})",
            config.censoring_target, config.probe_n
        );
        rate
    } else {
        popadjust::simengine::DEFAULT_CENSORING_RATE
    };

    let settings = StudySettings {
        seed_root: config.seed,
        n_replicates: config.reps,
        workers: config.workers,
        maic_variance: config.variance,
        censoring_rate,
    };

    let out_dir = Path::new(&config.out);
    let total_replicates = grid.len() * config.reps as usize;
    eprintln!(
        "running {} scenarios x {} replicates (seed {}, {} workers) -> {}",
        grid.len(),
        config.reps,
        config.seed,
        settings.workers,
        out_dir.display()
    );
    let stride = (total_replicates / 20).max(1);
    let progress = move |done: usize, total: usize| {
        if done.is_multiple_of(stride) || done == total {
            eprintln!("progress: {done}/{total} replicates");
        }
    };
    let rows = run_study_in_dir(out_dir, &grid, &settings, Some(&progress))?;

    let summary = summarize(&rows, TRUE_LOG_HR_AB)?;
    let summary_path = out_dir.join("summary.csv");
    let mut writer = BufWriter::new(
        std::fs::File::create(&summary_path)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", summary_path.display())))?,
    );
    write_summary_csv(&mut writer, &summary)?;

    println!("replicate rows: {}", rows.len());
    for (status, count) in failure_counts(&rows) {
        println!("{}: {}", status.as_str(), count);
    }
    println!("replicates: {}", out_dir.join("replicates.csv").display());
    println!("summary:    {}", summary_path.display());
    println!("manifest:   {}", out_dir.join("manifest.txt").display());
    Ok(())
}
