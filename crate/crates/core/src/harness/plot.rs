use std::collections::BTreeMap;
use std::fmt::Write;

use super::metrics::MetricsRow;
use super::HarnessError;

/// Points of the seed-averaged curve.
pub const GRID_POINTS: usize = 200;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One labelled curve: (global step, rolling success) points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Piecewise-linear value of a curve sorted by x; constant beyond its ends.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    match points {
        [] => f64::NAN,
        [p] => p.1,
        _ => {
            if x <= points[0].0 {
                return points[0].1;
            }
            let last = points[points.len() - 1];
            if x >= last.0 {
                return last.1;
            }
            let i = points.partition_point(|p| p.0 <= x);
            let (a, b) = (points[i - 1], points[i]);
            if b.0 == a.0 {
                b.1
            } else {
                a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
            }
        }
    }
}

/// Averages several curves on `grid` by linear interpolation.
pub fn average_curves(curves: &[Vec<(f64, f64)>], grid: &[f64]) -> Vec<(f64, f64)> {
    grid.iter()
        .map(|&x| {
            let sum: f64 = curves.iter().map(|c| interpolate(c, x)).sum();
            (x, sum / curves.len() as f64)
        })
        .collect()
}

/// Evenly spaced grid over the step range covered by every curve.
pub fn common_grid(curves: &[Vec<(f64, f64)>], points: usize) -> Vec<f64> {
    let lo = curves
        .iter()
        .filter_map(|c| c.first().map(|p| p.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = curves
        .iter()
        .filter_map(|c| c.last().map(|p| p.0))
        .fold(f64::INFINITY, f64::min);
    if !lo.is_finite() || !hi.is_finite() {
        return Vec::new();
    }
    if hi <= lo || points < 2 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Seed-averaged rolling-success curve of one metrics file.
pub fn series_from_rows(label: &str, rows: &[MetricsRow]) -> Result<Series, HarnessError> {
    let mut by_seed: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        by_seed
            .entry(r.seed)
            .or_default()
            .push((r.global_step as f64, r.rolling_success));
    }
    if by_seed.is_empty() {
        return Err(HarnessError::Empty(format!("no episodes for {label}")));
    }
    let curves: Vec<Vec<(f64, f64)>> = by_seed
        .into_values()
        .map(|mut c| {
            c.sort_by(|a, b| a.0.total_cmp(&b.0));
            c
        })
        .collect();
    let points = if curves.len() == 1 {
        curves[0].clone()
    } else {
        average_curves(&curves, &common_grid(&curves, GRID_POINTS))
    };
    Ok(Series {
        label: label.to_string(),
        points,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG with one line per series, y from 0 to 100 %.
pub fn render_svg(series: &[Series]) -> Result<String, HarnessError> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(HarnessError::Empty("nothing to plot".into()));
    }
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + pw * x / x_max;
    let sy = |y: f64| MARGIN_TOP + ph * (1.0 - y / 100.0);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..=4 {
        let v = 25.0 * i as f64;
        let y = sy(v);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            MARGIN_LEFT + pw
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    for i in 0..=4 {
        let v = x_max * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.0}</text>"#,
            sx(v),
            MARGIN_TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">global step</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">successful episodes (%)</text>"#,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        let lx = MARGIN_LEFT + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<g class="legend"><line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
