//! Performance measures over replicate tables, with Monte Carlo standard
//! errors.
//!
//! Per (scenario, method) cell, over the S successful replicates: bias is
//! the mean estimate minus the truth; ESE is the sample standard deviation
//! (divisor S-1); the variability ratio is the mean model SE over the ESE;
//! coverage is the fraction of nominal-95% intervals containing the truth
//! (exact normal quantile 1.959964); MSE is the mean squared error.
//! Standardized bias is bias as a percentage of the ESE. Replicates with a
//! failure status are excluded and `n_used` makes the exclusion auditable.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::simengine::{Method, ReplicateResult, RunStatus};
use crate::stats::{mean, normal_critical_value, sample_sd};

pub const SUMMARY_HEADER: &str = "scenario_id,method,n_used,bias,bias_mcse,std_bias_pct,ese,\
                                  ese_mcse,vr,coverage,coverage_mcse,mse,mse_mcse,mean_model_se";

/// Empirical coverage significantly below/above nominal 95% at 1,000
/// replicates (roughly two Monte Carlo standard errors from 0.95).
pub const COVERAGE_SIG_LOW: f64 = 0.9365;
pub const COVERAGE_SIG_HIGH: f64 = 0.9635;

/// Standardized bias above this magnitude (percent) is considered
/// problematic.
pub const PROBLEMATIC_STD_BIAS_PCT: f64 = 50.0;

/// Per-cell performance summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSummary {
    pub scenario_id: u32,
    pub method: Method,
    pub n_used: usize,
    pub bias: f64,
    pub bias_mcse: f64,
    pub standardized_bias_pct: f64,
    pub ese: f64,
    pub ese_mcse: f64,
    pub variability_ratio: f64,
    pub coverage: f64,
    pub coverage_mcse: f64,
    pub mse: f64,
    pub mse_mcse: f64,
    pub mean_model_se: f64,
}

pub fn bias_mcse(ese: f64, s: usize) -> f64 {
    ese / (s as f64).sqrt()
}

pub fn ese_mcse(ese: f64, s: usize) -> f64 {
    ese / (2.0 * (s as f64 - 1.0)).sqrt()
}

pub fn coverage_mcse(coverage: f64, s: usize) -> f64 {
    (coverage * (1.0 - coverage) / s as f64).sqrt()
}

pub fn mse_mcse(squared_errors: &[f64], mse: f64) -> f64 {
    let s = squared_errors.len() as f64;
    let ss: f64 = squared_errors.iter().map(|e| (e - mse) * (e - mse)).sum();
    (ss / (s * (s - 1.0))).sqrt()
}

fn summarize_cell(
    scenario_id: u32,
    method: Method,
    estimates: &[f64],
    ses: &[f64],
    truth: f64,
) -> PerformanceSummary {
    let s = estimates.len();
    let z = normal_critical_value(0.95);

    let bias = mean(estimates) - truth;
    let ese = sample_sd(estimates);
    let mean_model_se = mean(ses);
    let vr = mean_model_se / ese;
    let covered = estimates
        .iter()
        .zip(ses)
        .filter(|(e, se)| (*e - truth).abs() <= z * **se)
        .count();
    let coverage = covered as f64 / s as f64;
    let squared_errors: Vec<f64> =
        estimates.iter().map(|e| (e - truth) * (e - truth)).collect();
    let mse = mean(&squared_errors);

    PerformanceSummary {
        scenario_id,
        method,
        n_used: s,
        bias,
        bias_mcse: bias_mcse(ese, s),
        standardized_bias_pct: 100.0 * bias / ese,
        ese,
        ese_mcse: ese_mcse(ese, s),
        variability_ratio: vr,
        coverage,
        coverage_mcse: coverage_mcse(coverage, s),
        mse,
        mse_mcse: mse_mcse(&squared_errors, mse),
        mean_model_se,
    }
}

// (replicate_id, estimate, se) triples of one (scenario, method) cell.
type CellRows = Vec<(u32, f64, f64)>;

/// Summarize a replicate table against the known truth, one row per
/// (scenario, method), ordered by scenario id then method.
pub fn summarize(results: &[ReplicateResult], truth: f64) -> Result<Vec<PerformanceSummary>> {
    let mut cells: BTreeMap<(u32, Method), CellRows> = BTreeMap::new();
    for r in results {
        let cell = cells.entry((r.scenario_id, r.method)).or_default();
        if r.status == RunStatus::Ok {
            let (Some(est), Some(se)) = (r.estimate, r.se) else {
                return Err(Error::Summarize(format!(
                    "scenario {} replicate {} marked ok but not finite",
                    r.scenario_id, r.replicate_id
                )));
            };
            cell.push((r.replicate_id, est, se));
        }
    }

    let mut out = Vec::with_capacity(cells.len());
    for ((scenario_id, method), mut cell) in cells {
        if cell.len() < 2 {
            return Err(Error::Summarize(format!(
                "scenario {scenario_id} method {} has {} usable replicates (need at least 2)",
                method.as_str(),
                cell.len()
            )));
        }
        // Pin the accumulation order so summaries are independent of input
        // row order (resumed runs append rows out of order).
        cell.sort_by_key(|(rep, _, _)| *rep);
        let estimates: Vec<f64> = cell.iter().map(|(_, e, _)| *e).collect();
        let ses: Vec<f64> = cell.iter().map(|(_, _, s)| *s).collect();
        out.push(summarize_cell(scenario_id, method, &estimates, &ses, truth));
    }
    Ok(out)
}

/// Write the summary CSV.
pub fn write_summary_csv<W: Write>(w: &mut W, summaries: &[PerformanceSummary]) -> Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.scenario_id,
            s.method.as_str(),
            s.n_used,
            s.bias,
            s.bias_mcse,
            s.standardized_bias_pct,
            s.ese,
            s.ese_mcse,
            s.variability_ratio,
            s.coverage,
            s.coverage_mcse,
            s.mse,
            s.mse_mcse,
            s.mean_model_se
        )?;
    }
    Ok(())
}

/// Read a summary CSV written by [`write_summary_csv`].
pub fn read_summary_csv<R: BufRead>(reader: R) -> Result<Vec<PerformanceSummary>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            if line != SUMMARY_HEADER {
                return Err(Error::Parse(format!("unexpected summary header '{line}'")));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(Error::Parse(format!(
                "line {}: expected 14 fields, found {}",
                idx + 1,
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("line {}: invalid number '{s}'", idx + 1)))
        };
        out.push(PerformanceSummary {
            scenario_id: f[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: invalid scenario id", idx + 1)))?,
            method: Method::parse(f[1])?,
            n_used: f[2]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: invalid n_used", idx + 1)))?,
            bias: num(f[3])?,
            bias_mcse: num(f[4])?,
            standardized_bias_pct: num(f[5])?,
            ese: num(f[6])?,
            ese_mcse: num(f[7])?,
            variability_ratio: num(f[8])?,
            coverage: num(f[9])?,
            coverage_mcse: num(f[10])?,
            mse: num(f[11])?,
            mse_mcse: num(f[12])?,
            mean_model_se: num(f[13])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(
        scenario_id: u32,
        replicate_id: u32,
        method: Method,
        estimate: f64,
        se: f64,
    ) -> ReplicateResult {
        ReplicateResult {
            scenario_id,
            replicate_id,
            method,
            estimate: Some(estimate),
            se: Some(se),
            status: RunStatus::Ok,
            ess: None,
        }
    }

    fn failed(scenario_id: u32, replicate_id: u32, method: Method) -> ReplicateResult {
        ReplicateResult {
            scenario_id,
            replicate_id,
            method,
            estimate: None,
            se: None,
            status: RunStatus::Separation,
            ess: None,
        }
    }

    #[test]
    fn hand_computed_two_replicate_cell() {
        let rows = vec![
            row(1, 0, Method::Maic, 0.1, 1.0),
            row(1, 1, Method::Maic, -0.1, 1.0),
        ];
        let s = &summarize(&rows, 0.0).unwrap()[0];
        assert!(s.bias.abs() < 1e-15);
        assert!((s.ese - 0.1414213562373095).abs() < 1e-12);
        assert!((s.variability_ratio - 7.0710678118654755).abs() < 1e-10);
        assert!((s.coverage - 1.0).abs() < 1e-15);
        assert!((s.mse - 0.01).abs() < 1e-15);
        assert_eq!(s.n_used, 2);
    }

    #[test]
    fn model_se_equal_to_ese_gives_unit_vr() {
        let rows = vec![
            row(1, 0, Method::Stc, 0.2, 0.1),
            row(1, 1, Method::Stc, 0.0, 0.1),
            row(1, 2, Method::Stc, 0.1, 0.1),
        ];
        let s = &summarize(&rows, 0.1).unwrap()[0];
        assert!((s.ese - 0.1).abs() < 1e-12);
        assert!((s.variability_ratio - 1.0).abs() < 1e-10);
        assert!(s.bias.abs() < 1e-12);
    }

    #[test]
    fn degenerate_cell_all_equal_truth() {
        let rows = vec![
            row(2, 0, Method::Bucher, 0.5, 0.2),
            row(2, 1, Method::Bucher, 0.5, 0.3),
            row(2, 2, Method::Bucher, 0.5, 0.4),
        ];
        let s = &summarize(&rows, 0.5).unwrap()[0];
        assert_eq!(s.bias, 0.0);
        assert_eq!(s.coverage, 1.0);
        assert_eq!(s.mse, 0.0);
    }

    #[test]
    fn mcse_formula_values() {
        assert!((bias_mcse(0.2, 1000) - 0.0063245553).abs() < 1e-9);
        let c = coverage_mcse(0.95, 1000);
        assert!((c - 0.00689202).abs() < 1e-7);
        // The printed significance thresholds are the nominal rate plus or
        // minus 1.96 of these MCSEs, rounded to four decimals.
        let z = normal_critical_value(0.95);
        assert!(((0.95 - z * c) * 1e4).round() / 1e4 == COVERAGE_SIG_LOW);
        assert!(((0.95 + z * c) * 1e4).round() / 1e4 == COVERAGE_SIG_HIGH);
        assert_eq!(coverage_mcse(0.0, 1000), 0.0);
        assert_eq!(coverage_mcse(1.0, 1000), 0.0);
        assert!((ese_mcse(0.2, 1000) - 0.2 / (2.0 * 999.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mse_identity_with_chosen_divisors() {
        proptest!(|(values in proptest::collection::vec(-2.0f64..2.0, 3..60))| {
            let rows: Vec<ReplicateResult> = values
                .iter()
                .enumerate()
                .map(|(i, v)| row(1, i as u32, Method::Maic, *v, 0.5))
                .collect();
            let s = &summarize(&rows, 0.0).unwrap()[0];
            let n = values.len() as f64;
            let identity = s.bias * s.bias + s.ese * s.ese * (n - 1.0) / n;
            prop_assert!((s.mse - identity).abs() < 1e-10);
        });
    }

    #[test]
    fn summaries_invariant_to_row_order_and_failures_excluded() {
        let mut rows = vec![
            row(1, 0, Method::Maic, 0.3, 0.2),
            row(1, 1, Method::Maic, -0.2, 0.25),
            failed(1, 2, Method::Maic),
            row(1, 3, Method::Maic, 0.05, 0.22),
        ];
        let a = summarize(&rows, 0.0).unwrap();
        rows.reverse();
        let b = summarize(&rows, 0.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].n_used, 3);
    }

    #[test]
    fn too_few_usable_replicates_is_an_error() {
        let rows = vec![row(1, 0, Method::Maic, 0.3, 0.2), failed(1, 1, Method::Maic)];
        assert!(matches!(summarize(&rows, 0.0), Err(Error::Summarize(_))));
    }

    #[test]
    fn summary_csv_round_trip() {
        let rows = vec![
            row(1, 0, Method::Maic, 0.1, 1.0),
            row(1, 1, Method::Maic, -0.1, 1.0),
            row(1, 0, Method::Stc, 0.4, 0.5),
            row(1, 1, Method::Stc, 0.2, 0.5),
        ];
        let summaries = summarize(&rows, 0.0).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &summaries).unwrap();
        let parsed = read_summary_csv(buf.as_slice()).unwrap();
        assert_eq!(summaries, parsed);
    }
}
