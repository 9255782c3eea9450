//! Hand-rolled nested-loop-plot SVG rendering.
//!
//! Top panel: metric value per scenario, one polyline per method, with
//! optional reference line/band. Bottom panel: one staircase per factor
//! showing its level across the scenario sequence.

use popadjust::simengine::Scenario;

pub struct Series {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

pub struct ReferenceMarks {
    pub line: Option<f64>,
    pub band: Option<(f64, f64)>,
}

const WIDTH: f64 = 1200.0;
const HEIGHT: f64 = 780.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 1170.0;
const CHART_TOP: f64 = 50.0;
const CHART_BOTTOM: f64 = 470.0;
const FACTORS_TOP: f64 = 510.0;
const FACTOR_ROW: f64 = 48.0;

const COLORS: [&str; 3] = ["#1b9e77", "#d95f02", "#7570b3"];

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let range = (hi - lo).max(1e-12);
    let raw_step = range / 5.0;
    let mag = 10f64.powf(raw_step.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| range / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let first = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = first;
    while t <= hi + 1e-12 {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.abs() >= 100.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn render_nested_loop(
    metric: &str,
    grid: &[Scenario],
    series: &[Series],
    marks: &ReferenceMarks,
) -> String {
    let n = grid.len().max(1);
    let x_of = |i: usize| LEFT + (RIGHT - LEFT) * (i as f64 + 0.5) / n as f64;

    // Y range over all points plus reference marks.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for v in s.values.iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if let Some(line) = marks.line {
        lo = lo.min(line);
        hi = hi.max(line);
    }
    if let Some((a, b)) = marks.band {
        lo = lo.min(a);
        hi = hi.max(b);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = (hi - lo).max(1e-9) * 0.06;
    let (lo, hi) = (lo - pad, hi + pad);
    let y_of = |v: f64| CHART_BOTTOM - (CHART_BOTTOM - CHART_TOP) * (v - lo) / (hi - lo);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{LEFT}\" y=\"28\" font-size=\"18\">{metric} across {n} scenarios (grid order)</text>\n"
    ));

    if let Some((a, b)) = marks.band {
        out.push_str(&format!(
            "<rect x=\"{LEFT}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#f0e8a0\" opacity=\"0.6\"/>\n",
            y_of(b),
            RIGHT - LEFT,
            (y_of(a) - y_of(b)).abs()
        ));
    }

    // Axes, ticks and grid lines.
    for t in nice_ticks(lo, hi) {
        let y = y_of(t);
        out.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{RIGHT}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            LEFT - 8.0,
            y + 4.0,
            fmt_tick(t)
        ));
    }
    let x_stride = (n / 12).max(1);
    for (i, s) in grid.iter().enumerate() {
        if i % x_stride == 0 {
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                x_of(i),
                CHART_BOTTOM + 16.0,
                s.id
            ));
        }
    }
    out.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{CHART_BOTTOM}\" x2=\"{RIGHT}\" y2=\"{CHART_BOTTOM}\" stroke=\"black\"/>\n\
         <line x1=\"{LEFT}\" y1=\"{CHART_TOP}\" x2=\"{LEFT}\" y2=\"{CHART_BOTTOM}\" stroke=\"black\"/>\n"
    ));

    if let Some(line) = marks.line {
        let y = y_of(line);
        out.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{RIGHT}\" y2=\"{y:.2}\" stroke=\"#555555\" \
             stroke-dasharray=\"6,4\"/>\n"
        ));
    }

    // Metric polylines, split at missing cells.
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, out: &mut String| {
            if seg.len() >= 2 {
                out.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>\n",
                    seg.join(" ")
                ));
            }
            seg.clear();
        };
        for (i, v) in s.values.iter().enumerate() {
            match v {
                Some(v) => segment.push(format!("{:.2},{:.2}", x_of(i), y_of(*v))),
                None => flush(&mut segment, &mut out),
            }
        }
        flush(&mut segment, &mut out);
        let ly = CHART_TOP + 18.0 * k as f64;
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\">{}</text>\n",
            RIGHT - 150.0,
            RIGHT - 120.0,
            RIGHT - 112.0,
            ly + 4.0,
            s.name
        ));
    }

    // Factor staircases.
    type FactorGetter = fn(&Scenario) -> f64;
    let factors: [(&str, FactorGetter); 5] = [
        ("n_ac", |s| s.n_ac as f64),
        ("prognostic", |s| s.prognostic_coef),
        ("interaction", |s| s.interaction_coef),
        ("correlation", |s| s.correlation),
        ("ac_mean", |s| s.ac_covariate_mean),
    ];
    for (row, (name, value_of)) in factors.iter().enumerate() {
        let top = FACTORS_TOP + row as f64 * FACTOR_ROW;
        let bottom = top + FACTOR_ROW - 14.0;
        let mut levels: Vec<f64> = grid.iter().map(value_of).collect();
        levels.sort_by(|a, b| a.total_cmp(b));
        levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let level_y = |v: f64| {
            let idx = levels.iter().position(|l| (l - v).abs() < 1e-12).unwrap_or(0);
            if levels.len() == 1 {
                (top + bottom) / 2.0
            } else {
                bottom - (bottom - top) * idx as f64 / (levels.len() - 1) as f64
            }
        };
        let mut points = Vec::with_capacity(2 * n);
        let half = (RIGHT - LEFT) / n as f64 / 2.0;
        for (i, s) in grid.iter().enumerate() {
            let y = level_y(value_of(s));
            points.push(format!("{:.2},{:.2}", x_of(i) - half, y));
            points.push(format!("{:.2},{:.2}", x_of(i) + half, y));
        }
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"#333333\" stroke-width=\"1.2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        let level_text: Vec<String> = levels.iter().map(|l| fmt_tick(*l)).collect();
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">{} ({})</text>\n",
            LEFT - 8.0,
            (top + bottom) / 2.0 + 4.0,
            name,
            level_text.join("/")
        ));
    }

    out.push_str("</svg>\n");
    out
}
