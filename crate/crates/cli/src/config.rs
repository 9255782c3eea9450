//! Run configuration: flag/config-file/default resolution and scenario
//! selection parsing.

use std::collections::HashMap;
use std::path::Path;

use popadjust::maic::VarianceMethod;
use popadjust::simengine::{
    ac_mean_levels, build_grid, correlation_levels, desk_grid, prognostic_levels, Scenario,
};

use crate::{CliError, CliResult, RunArgs, VarianceArg};

const KNOWN_KEYS: &[&str] = &[
    "scenarios",
    "reps",
    "seed",
    "workers",
    "out",
    "variance",
    "bootstrap_reps",
    "recalibrate_censoring",
    "censoring_target",
    "probe_n",
    "n_ac",
    "prognostic",
    "interaction",
    "correlation",
    "ac_mean",
];

/// Parse a flat `key = value` file (quotes optional, `#` comments).
pub fn parse_config_file(path: &Path) -> CliResult<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected key = value, got '{raw}'",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key '{key}'", lineno + 1)));
        }
        let value = value.trim().trim_matches('"').to_string();
        map.insert(key, value);
    }
    Ok(map)
}

/// Fully resolved `run` configuration.
pub struct RunConfig {
    pub scenarios: String,
    pub reps: u32,
    pub seed: u64,
    pub workers: usize,
    pub out: String,
    pub variance: VarianceMethod,
    pub recalibrate_censoring: bool,
    pub censoring_target: f64,
    pub probe_n: usize,
    pub factor_filters: FactorFilters,
}

#[derive(Default)]
pub struct FactorFilters {
    pub n_ac: Option<Vec<usize>>,
    pub prognostic: Option<Vec<f64>>,
    pub interaction: Option<Vec<f64>>,
    pub correlation: Option<Vec<f64>>,
    pub ac_mean: Option<Vec<f64>>,
}

fn parse_from<T: std::str::FromStr>(value: &str, what: &str) -> CliResult<T> {
    value
        .parse::<T>()
        .map_err(|_| CliError::Usage(format!("invalid {what}: '{value}'")))
}

fn parse_list<T: std::str::FromStr>(value: &str, what: &str) -> CliResult<Vec<T>> {
    value.split(',').map(|v| parse_from::<T>(v.trim(), what)).collect()
}

// Hazard-ratio labels (0.67, 0.5, 0.33) map onto the grid's coefficients.
fn parse_hr_levels(value: &str, what: &str) -> CliResult<Vec<f64>> {
    let hrs: Vec<f64> = parse_list(value, what)?;
    hrs.iter()
        .map(|hr| {
            let coef = -hr.ln();
            let levels = prognostic_levels();
            levels
                .iter()
                .find(|l| (**l - coef).abs() < 1e-9)
                .copied()
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "{what} level {hr} is not one of the grid levels 0.67, 0.5, 0.33"
                    ))
                })
        })
        .collect()
}

fn parse_level_values(value: &str, allowed: &[f64], what: &str) -> CliResult<Vec<f64>> {
    let vals: Vec<f64> = parse_list(value, what)?;
    vals.iter()
        .map(|v| {
            allowed
                .iter()
                .find(|a| (**a - v).abs() < 1e-9)
                .copied()
                .ok_or_else(|| {
                    CliError::Usage(format!("{what} value {v} is not a grid level ({allowed:?})"))
                })
        })
        .collect()
}

impl RunConfig {
    /// Precedence: POPADJUST_SEED env (seed only) > flags > config file >
    /// defaults.
    pub fn resolve(args: &RunArgs) -> CliResult<Self> {
        let file = match &args.config {
            Some(path) => parse_config_file(Path::new(path))?,
            None => HashMap::new(),
        };
        let from_file = |key: &str| file.get(key).cloned();

        let scenarios = args
            .scenarios
            .clone()
            .or_else(|| from_file("scenarios"))
            .unwrap_or_else(|| "desk".to_string());
        let reps = match (args.reps, from_file("reps")) {
            (Some(r), _) => r,
            (None, Some(v)) => parse_from(&v, "reps")?,
            (None, None) => 1000,
        };
        let seed = match (crate::env_seed_override()?, args.seed, from_file("seed")) {
            (Some(env), _, _) => env,
            (None, Some(s), _) => s,
            (None, None, Some(v)) => parse_from(&v, "seed")?,
            (None, None, None) => 42,
        };
        let workers = match (args.workers, from_file("workers")) {
            (Some(w), _) => w,
            (None, Some(v)) => parse_from(&v, "workers")?,
            (None, None) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };
        let out = args
            .out
            .clone()
            .or_else(|| from_file("out"))
            .unwrap_or_else(|| "results".to_string());
        let variance_arg = match (args.variance, from_file("variance")) {
            (Some(v), _) => v,
            (None, Some(v)) => match v.as_str() {
                "sandwich" => VarianceArg::Sandwich,
                "bootstrap" => VarianceArg::Bootstrap,
                other => {
                    return Err(CliError::Usage(format!(
                        "config variance must be sandwich or bootstrap, got '{other}'"
                    )))
                }
            },
            (None, None) => VarianceArg::Sandwich,
        };
        let bootstrap_reps = match (args.bootstrap_reps, from_file("bootstrap_reps")) {
            (Some(b), _) => b,
            (None, Some(v)) => parse_from(&v, "bootstrap_reps")?,
            (None, None) => 1000,
        };
        let variance = match variance_arg {
            VarianceArg::Sandwich => VarianceMethod::Sandwich,
            VarianceArg::Bootstrap => VarianceMethod::Bootstrap { replicates: bootstrap_reps },
        };
        let recalibrate_censoring = args.recalibrate_censoring
            || from_file("recalibrate_censoring").map(|v| v == "true").unwrap_or(false);
        let censoring_target = match (args.censoring_target, from_file("censoring_target")) {
            (Some(t), _) => t,
            (None, Some(v)) => parse_from(&v, "censoring_target")?,
            (None, None) => popadjust::simengine::DEFAULT_CENSORING_TARGET,
        };
        let probe_n = match (args.probe_n, from_file("probe_n")) {
            (Some(p), _) => p,
            (None, Some(v)) => parse_from(&v, "probe_n")?,
            (None, None) => 1_000_000,
        };

        let pick = |flag: &Option<String>, key: &str| flag.clone().or_else(|| from_file(key));
        let factor_filters = FactorFilters {
            n_ac: pick(&args.n_ac, "n_ac")
                .map(|v| parse_list::<usize>(&v, "n_ac"))
                .transpose()?,
            prognostic: pick(&args.prognostic, "prognostic")
                .map(|v| parse_hr_levels(&v, "prognostic"))
                .transpose()?,
            interaction: pick(&args.interaction, "interaction")
                .map(|v| parse_hr_levels(&v, "interaction"))
                .transpose()?,
            correlation: pick(&args.correlation, "correlation")
                .map(|v| parse_level_values(&v, &correlation_levels(), "correlation"))
                .transpose()?,
            ac_mean: pick(&args.ac_mean, "ac_mean")
                .map(|v| parse_level_values(&v, &ac_mean_levels(), "ac_mean"))
                .transpose()?,
        };

        Ok(Self {
            scenarios,
            reps,
            seed,
            workers,
            out,
            variance,
            recalibrate_censoring,
            censoring_target,
            probe_n,
            factor_filters,
        })
    }

    /// Materialize the scenario list from the selection string plus filters.
    pub fn select_scenarios(&self) -> CliResult<Vec<Scenario>> {
        let base: Vec<Scenario> = match self.scenarios.as_str() {
            "desk" => desk_grid(),
            "all" => build_grid(None),
            spec => {
                let ids = parse_id_ranges(spec)?;
                build_grid(Some(&|s: &Scenario| ids.contains(&s.id)))
            }
        };
        let f = &self.factor_filters;
        let matches = |s: &Scenario| {
            f.n_ac.as_ref().map(|v| v.contains(&s.n_ac)).unwrap_or(true)
                && f.prognostic
                    .as_ref()
                    .map(|v| v.iter().any(|l| (l - s.prognostic_coef).abs() < 1e-9))
                    .unwrap_or(true)
                && f.interaction
                    .as_ref()
                    .map(|v| v.iter().any(|l| (l - s.interaction_coef).abs() < 1e-9))
                    .unwrap_or(true)
                && f.correlation
                    .as_ref()
                    .map(|v| v.iter().any(|l| (l - s.correlation).abs() < 1e-9))
                    .unwrap_or(true)
                && f.ac_mean
                    .as_ref()
                    .map(|v| v.iter().any(|l| (l - s.ac_covariate_mean).abs() < 1e-9))
                    .unwrap_or(true)
        };
        let selected: Vec<Scenario> = base.into_iter().filter(matches).collect();
        if selected.is_empty() {
            return Err(CliError::Usage("scenario selection matches no scenarios".into()));
        }
        Ok(selected)
    }
}

/// Parse `1,5,9-12` into a sorted id set.
pub fn parse_id_ranges(spec: &str) -> CliResult<Vec<u32>> {
    let mut ids = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: u32 = parse_from(lo.trim(), "scenario id")?;
            let hi: u32 = parse_from(hi.trim(), "scenario id")?;
            if lo > hi {
                return Err(CliError::Usage(format!("empty scenario range '{part}'")));
            }
            ids.extend(lo..=hi);
        } else {
            ids.push(parse_from(part, "scenario id")?);
        }
    }
    if ids.is_empty() {
        return Err(CliError::Usage(format!("no scenario ids in '{spec}'")));
    }
    if ids.iter().any(|&id| id == 0 || id > 162) {
        return Err(CliError::Usage("scenario ids must lie in 1..=162".into()));
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

/// Effect-modifier columns: user-facing 1-based `3,4` to 0-based indices.
pub fn parse_effect_modifiers(spec: &str) -> CliResult<Vec<usize>> {
    let cols: Vec<usize> = parse_list(spec, "effect-modifier column")?;
    if cols.is_empty() || cols.contains(&0) {
        return Err(CliError::Usage("effect-modifier columns are 1-based (e.g. 3,4)".into()));
    }
    let mut idx: Vec<usize> = cols.iter().map(|c| c - 1).collect();
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}
