//! `plot`: nested-loop-plot data and a static SVG for one metric.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use popadjust::metrics::{read_summary_csv, COVERAGE_SIG_HIGH, COVERAGE_SIG_LOW};
use popadjust::simengine::{build_grid, Method, Scenario};

use crate::svg::{render_nested_loop, ReferenceMarks, Series};
use crate::{CliError, CliResult, MetricArg, PlotArgs};

fn metric_name(metric: MetricArg) -> &'static str {
    match metric {
        MetricArg::Bias => "bias",
        MetricArg::Vr => "vr",
        MetricArg::Coverage => "coverage",
        MetricArg::Ese => "ese",
        MetricArg::Mse => "mse",
    }
}

pub fn execute(args: PlotArgs) -> CliResult<()> {
    let file = File::open(&args.summary)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", args.summary)))?;
    let summaries = read_summary_csv(BufReader::new(file))?;
    if summaries.is_empty() {
        return Err(CliError::Runtime("summary file has no rows".into()));
    }

    let pick = |s: &popadjust::metrics::PerformanceSummary| match args.metric {
        MetricArg::Bias => s.bias,
        MetricArg::Vr => s.variability_ratio,
        MetricArg::Coverage => s.coverage,
        MetricArg::Ese => s.ese,
        MetricArg::Mse => s.mse,
    };

    // Scenarios in grid (nested-loop) order, restricted to those present.
    let mut by_cell: BTreeMap<(u32, Method), f64> = BTreeMap::new();
    for s in &summaries {
        by_cell.insert((s.scenario_id, s.method), pick(s));
    }
    let grid: Vec<Scenario> = build_grid(None)
        .into_iter()
        .filter(|s| Method::ALL.iter().any(|m| by_cell.contains_key(&(s.id, *m))))
        .collect();
    if grid.is_empty() {
        return Err(CliError::Runtime("summary scenario ids do not match the grid".into()));
    }

    let name = metric_name(args.metric);
    let csv_path = args.out_csv.clone().unwrap_or_else(|| format!("nested_loop_{name}.csv"));
    let svg_path = args.out_svg.clone().unwrap_or_else(|| format!("nested_loop_{name}.svg"));

    let mut w = BufWriter::new(File::create(Path::new(&csv_path)).map_err(|e| {
        CliError::Runtime(format!("cannot write {csv_path}: {e}"))
    })?);
    writeln!(
        w,
        "scenario_id,n_ac,prognostic_coef,interaction_coef,correlation,ac_mean,maic,stc,bucher"
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let fmt = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".to_string());
    for s in &grid {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            s.id,
            s.n_ac,
            s.prognostic_coef,
            s.interaction_coef,
            s.correlation,
            s.ac_covariate_mean,
            fmt(by_cell.get(&(s.id, Method::Maic))),
            fmt(by_cell.get(&(s.id, Method::Stc))),
            fmt(by_cell.get(&(s.id, Method::Bucher)))
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    drop(w);

    let series: Vec<Series> = Method::ALL
        .iter()
        .map(|m| Series {
            name: m.as_str().to_string(),
            values: grid.iter().map(|s| by_cell.get(&(s.id, *m)).copied()).collect(),
        })
        .collect();
    let marks = match args.metric {
        MetricArg::Bias => ReferenceMarks { line: Some(0.0), band: None },
        MetricArg::Vr => ReferenceMarks { line: Some(1.0), band: None },
        MetricArg::Coverage => ReferenceMarks {
            line: Some(0.95),
            band: Some((COVERAGE_SIG_LOW, COVERAGE_SIG_HIGH)),
        },
        _ => ReferenceMarks { line: None, band: None },
    };
    let svg = render_nested_loop(name, &grid, &series, &marks);
    std::fs::write(Path::new(&svg_path), svg)
        .map_err(|e| CliError::Runtime(format!("cannot write {svg_path}: {e}")))?;

    println!("plot data: {csv_path}");
    println!("plot svg:  {svg_path}");
    Ok(())
}
