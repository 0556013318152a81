//! Experiment outcomes, run records and the CSV/SVG artifacts they point to.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "hitchin";
pub const VERSION: &str = env!("HITCHIN_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    Equals,
}

/// A named assertion inside an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: Relation::AtMost, passed: value <= limit }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: Relation::AtLeast, passed: value >= limit }
    }

    pub fn equals(name: impl Into<String>, value: f64, expected: f64) -> Self {
        Self { name: name.into(), value, limit: expected, relation: Relation::Equals, passed: value == expected }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::equals(name, f64::from(u8::from(ok)), 1.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub result: Value,
    /// Scalar columns collected by `sweep`.
    pub summary: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// Lines echoed to stdout.
    pub lines: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub started: String,
    pub finished: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub result: Value,
    pub artifacts: Vec<String>,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a uniquely named temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::from(e)
    })
}

pub fn write_csv(path: &Path, table: &Table) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
    write_atomic(path, &bytes)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static line plot; non-positive values are dropped on a log axis.
pub fn render_svg(plot: &Plot) -> String {
    let ty = |y: f64| if plot.log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = plot
        .series
        .iter()
        .map(|s| s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite() && (!plot.log_y || *y > 0.0)).map(|&(x, y)| (x, ty(y))).collect())
        .collect();
    let all: Vec<(f64, f64)> = pts.iter().flatten().copied().collect();
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |(a, b, c, d), &(x, y)| {
        (a.min(x), b.max(x), c.min(y), d.max(y))
    });
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&plot.title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let ylab = if plot.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3e}") };
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#, px(xv), HEIGHT - MARGIN + 18.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#, MARGIN - 6.0, py(yv) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(&plot.x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(&plot.y_label),
        y = HEIGHT / 2.0
    );
    for (i, (series, p)) in plot.series.iter().zip(&pts).enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !p.is_empty() {
            let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        }
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#, WIDTH - MARGIN, escape(&series.label));
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, plot: &Plot) -> CliResult<()> {
    write_atomic(path, render_svg(plot).as_bytes())
}

/// Writes tables and plots under `dir` with `prefix`, returning their paths.
pub fn write_artifacts(dir: &Path, prefix: &str, outcome: &Outcome) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for t in &outcome.tables {
        let p = dir.join(format!("{prefix}-{}.csv", t.name));
        write_csv(&p, t)?;
        paths.push(p);
    }
    for plot in &outcome.plots {
        let p = dir.join(format!("{prefix}-{}.svg", plot.name));
        write_svg(&p, plot)?;
        paths.push(p);
    }
    Ok(paths)
}

pub fn write_record(path: &Path, record: &RunRecord) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(record)?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks() {
        assert!(Check::at_most("a", 1.0, 1.0).passed);
        assert!(!Check::at_most("a", 1.0, 0.0).passed);
        assert!(!Check::at_most("nan", f64::NAN, 1.0).passed);
        assert!(Check::flag("f", true).passed && !Check::flag("f", false).passed);
    }

    #[test]
    fn svg_is_well_formed() {
        let plot = Plot {
            name: "p".into(),
            title: "a < b".into(),
            x_label: "t".into(),
            y_label: "sup".into(),
            log_y: true,
            series: vec![Series { label: "s".into(), points: vec![(1.0, 1e-3), (2.0, 1e-6), (3.0, 0.0)] }],
        };
        let svg = render_svg(&plot);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn csv_and_atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        let p = dir.path().join("nested/t.csv");
        write_csv(&p, &t).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n1,2\n");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
