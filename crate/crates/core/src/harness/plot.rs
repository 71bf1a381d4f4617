//! Self-contained SVG line charts with mean ± std bands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::metrics::{aggregate_stats, AggregateStats, RunMetrics};

use super::{read_metrics_csv, write_atomic, HarnessError, Method};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 400;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One line with a symmetric band of `std` around `mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Series {
    /// Averages consecutive buckets so at most `MAX_POINTS` points remain.
    fn from_stats(name: &str, stats: &AggregateStats, pick: impl Fn(&crate::metrics::AggregatePoint) -> (f64, f64)) -> Self {
        let n = stats.points.len();
        let bucket = n.div_ceil(MAX_POINTS).max(1);
        let mut s = Series {
            name: name.to_string(),
            x: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
        };
        for chunk in stats.points.chunks(bucket) {
            let k = chunk.len() as f64;
            s.x.push(chunk.iter().map(|p| p.episode as f64).sum::<f64>() / k);
            s.mean.push(chunk.iter().map(|p| pick(p).0).sum::<f64>() / k);
            s.std.push(chunk.iter().map(|p| pick(p).1).sum::<f64>() / k);
        }
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick positions covering `[lo, hi]` at a 1-2-5 step.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() * step;
    (0..)
        .map(|i| first + i as f64 * step)
        .take_while(|t| *t <= hi + step * 1e-9)
        .collect()
}

fn label(v: f64) -> String {
    if v.abs() >= 1e5 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Renders `series` as an SVG document.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let points = || series.iter().flat_map(|s| s.x.iter().copied());
    let (mut x0, mut x1) = points().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (mut y0, mut y1) = series
        .iter()
        .flat_map(|s| s.mean.iter().zip(&s.std).flat_map(|(m, d)| [m - d, m + d]))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#eee"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#eee"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut band = String::new();
        for (x, (m, d)) in s.x.iter().zip(s.mean.iter().zip(&s.std)) {
            let _ = write!(band, "{:.1},{:.1} ", sx(*x), sy(m + d));
        }
        for (x, (m, d)) in s.x.iter().zip(s.mean.iter().zip(&s.std)).rev() {
            let _ = write!(band, "{:.1},{:.1} ", sx(*x), sy(m - d));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = s
            .x
            .iter()
            .zip(&s.mean)
            .map(|(x, m)| format!("{:.1},{:.1}", sx(*x), sy(*m)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            line.join(" ")
        );
        let ly = TOP + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            LEFT + 12.0,
            LEFT + 32.0,
            LEFT + 38.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Metrics files named by `inputs`: files as given, directories expanded to
/// the `.csv` files of their `runs/` subdirectory (or of the directory itself).
fn collect_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let dir = if input.join("runs").is_dir() { input.join("runs") } else { input.clone() };
            let entries = std::fs::read_dir(&dir).map_err(|e| HarnessError::read(&dir, e))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(HarnessError::Invalid(format!("{}: no metrics files", dir.display())));
            }
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(HarnessError::Invalid("no metrics files given".into()));
    }
    Ok(files)
}

/// Reads per-run metrics files and writes `return.svg` and `violations.svg`
/// to `out`, one series per method.
pub fn plot_metrics(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut groups: Vec<(String, Vec<RunMetrics>)> = Vec::new();
    for file in collect_files(inputs)? {
        for run in read_metrics_csv(&file)? {
            match groups.iter_mut().find(|(m, _)| *m == run.method) {
                Some((_, runs)) => runs.push(run.metrics),
                None => groups.push((run.method, vec![run.metrics])),
            }
        }
    }
    let rank = |name: &str| name.parse::<Method>().map_or(usize::MAX, |m| m as usize);
    groups.sort_by(|a, b| rank(&a.0).cmp(&rank(&b.0)).then_with(|| a.0.cmp(&b.0)));

    let mut returns = Vec::new();
    let mut violations = Vec::new();
    for (method, runs) in &groups {
        let stats = aggregate_stats(runs).map_err(|e| HarnessError::Invalid(e.to_string()))?;
        returns.push(Series::from_stats(method, &stats, |p| (p.ret.mean, p.ret.std)));
        violations.push(Series::from_stats(method, &stats, |p| (p.cum_violations.mean, p.cum_violations.std)));
    }
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let ret_path = out.join("return.svg");
    let viol_path = out.join("violations.svg");
    write_atomic(&ret_path, &line_chart("Expected return", "episode", "return", &returns))?;
    write_atomic(
        &viol_path,
        &line_chart("Cumulative safety violations", "episode", "violations", &violations),
    )?;
    Ok(vec![ret_path, viol_path])
}
