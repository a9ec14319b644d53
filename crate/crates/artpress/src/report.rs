//! Report writers: per-cell CSV, per-upscaler summary CSV, JSON, telemetry
//! SVG charts and the prompt-enhancement latency table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use artpress_core::enhance::{Method, PromptPair};
use artpress_core::quality::TelemetrySample;
use serde::{Deserialize, Serialize};

use crate::bench::{BenchReport, CellStatus, MetricRow, UpscalerSummary};

pub const ROW_HEADER: [&str; 9] = [
    "upscaler",
    "image",
    "repetition",
    "seconds",
    "blurriness",
    "pixelation",
    "peak_vram_mb",
    "mean_load_pct",
    "status",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "upscaler",
    "average_run_time_minutes",
    "mean_seconds",
    "mean_blurriness",
    "mean_pixelation",
    "mean_peak_vram_mb",
    "mean_load_pct",
    "ok_cells",
    "failed_cells",
];

pub const LATENCY_HEADER: [&str; 5] = ["method", "count", "mean_seconds", "min_seconds", "max_seconds"];

pub const VRAM_COLOR: &str = "#1f77b4";
pub const LOAD_COLOR: &str = "#ff7f0e";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("nothing to report")]
    Empty,
    #[error("a chart needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Decimal rendering rounded to 6 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

fn row_record(row: &MetricRow) -> [String; 9] {
    [
        row.upscaler_id.clone(),
        row.image_id.clone(),
        row.repetition.to_string(),
        fmt_sig(row.seconds),
        opt(row.blurriness),
        opt(row.pixelation),
        opt(row.peak_vram_mb),
        opt(row.mean_load_pct),
        row.status.to_string(),
    ]
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ReportError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// One line per [`MetricRow`] under [`ROW_HEADER`].
pub fn write_csv(report: &BenchReport, path: &Path) -> Result<(), ReportError> {
    let mut w = writer(path)?;
    w.write_record(ROW_HEADER)?;
    for row in &report.rows {
        w.write_record(row_record(row))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Parses a file produced by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<MetricRow>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Option<f64> { rec.get(i).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok()) };
        rows.push(MetricRow {
            upscaler_id: rec[0].to_string(),
            image_id: rec[1].to_string(),
            repetition: rec[2].parse().unwrap_or_default(),
            seconds: num(3).unwrap_or(f64::NAN),
            blurriness: num(4),
            pixelation: num(5),
            peak_vram_mb: num(6),
            mean_load_pct: num(7),
            status: CellStatus::parse(&rec[8]),
        });
    }
    Ok(rows)
}

fn summary_record(s: &UpscalerSummary) -> [String; 9] {
    [
        s.upscaler_id.clone(),
        opt(s.mean_seconds.map(|v| v / 60.0)),
        opt(s.mean_seconds),
        opt(s.mean_blurriness),
        opt(s.mean_pixelation),
        opt(s.mean_peak_vram_mb),
        opt(s.mean_load_pct),
        s.ok_cells.to_string(),
        s.failed_cells.to_string(),
    ]
}

/// One line per upscaler: average run time in minutes first, then the other means.
pub fn write_summary_csv(report: &BenchReport, path: &Path) -> Result<(), ReportError> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for s in &report.summary {
        w.write_record(summary_record(s))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_report_json(report: &BenchReport, path: &Path) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Plot geometry shared by the chart writer and its tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartLayout {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl Default for ChartLayout {
    fn default() -> Self {
        Self {
            width: 800.0,
            height: 400.0,
            left: 70.0,
            right: 70.0,
            top: 40.0,
            bottom: 50.0,
        }
    }
}

impl ChartLayout {
    pub fn plot_width(&self) -> f64 {
        self.width - self.left - self.right
    }

    pub fn plot_height(&self) -> f64 {
        self.height - self.top - self.bottom
    }

    /// Linear map of `t` from `[t0, t1]` onto the plot's horizontal extent.
    pub fn x(&self, t: u64, t0: u64, t1: u64) -> f64 {
        let span = (t1 - t0).max(1) as f64;
        self.left + (t - t0) as f64 / span * self.plot_width()
    }

    /// Value in `[0, max]` to a y coordinate (0 at the bottom).
    pub fn y(&self, v: f64, max: f64) -> f64 {
        self.top + self.plot_height() * (1.0 - v / max)
    }
}

/// Dual-axis SVG: VRAM on the left axis in blue, GPU load on the right in orange.
pub fn render_telemetry_chart(samples: &[TelemetrySample], title: &str) -> Result<String, ReportError> {
    if samples.len() < 2 {
        return Err(ReportError::TooFewSamples(samples.len()));
    }
    let l = ChartLayout::default();
    let t0 = samples[0].t_ms;
    let t1 = samples[samples.len() - 1].t_ms;
    let vram_max = samples.iter().map(|s| s.vram_mb).fold(0.0, f64::max).max(1.0);
    let points = |f: &dyn Fn(&TelemetrySample) -> f64| {
        samples
            .iter()
            .map(|s| format!("{:.2},{:.2}", l.x(s.t_ms, t0, t1), f(s)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let vram = points(&|s| l.y(s.vram_mb, vram_max));
    let load = points(&|s| l.y(s.gpu_load_pct, 100.0));
    let (x0, x1) = (l.left, l.left + l.plot_width());
    let (y0, y1) = (l.top, l.top + l.plot_height());

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = l.width,
        h = l.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, l.width / 2.0, escape(title));
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="{VRAM_COLOR}"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x1}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="{LOAD_COLOR}"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">time (ms)</text>"#, (x0 + x1) / 2.0, l.height - 10.0);
    let _ = writeln!(svg, r#"<text x="{x0}" y="{}" text-anchor="middle">{t0}</text>"#, y1 + 16.0);
    let _ = writeln!(svg, r#"<text x="{x1}" y="{}" text-anchor="middle">{t1}</text>"#, y1 + 16.0);
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" fill="{VRAM_COLOR}" transform="rotate(-90 15 {})" text-anchor="middle">VRAM (MB)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{y0}" fill="{VRAM_COLOR}" text-anchor="end">{}</text>"#, x0 - 4.0, fmt_sig(vram_max));
    let _ = writeln!(svg, r#"<text x="{}" y="{y1}" fill="{VRAM_COLOR}" text-anchor="end">0</text>"#, x0 - 4.0);
    let rx = l.width - 15.0;
    let _ = writeln!(
        svg,
        r#"<text x="{rx}" y="{}" fill="{LOAD_COLOR}" transform="rotate(90 {rx} {})" text-anchor="middle">GPU load (%)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{y0}" fill="{LOAD_COLOR}">100</text>"#, x1 + 4.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{y1}" fill="{LOAD_COLOR}">0</text>"#, x1 + 4.0);
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="{VRAM_COLOR}" stroke-width="1.5" points="{vram}"/>"#);
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="{LOAD_COLOR}" stroke-width="1.5" points="{load}"/>"#);
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_telemetry_chart(samples: &[TelemetrySample], path: &Path, title: &str) -> Result<(), ReportError> {
    let svg = render_telemetry_chart(samples, title)?;
    std::fs::write(path, svg).map_err(io_err(path))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStat {
    pub method: Method,
    pub count: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

/// Per-method elapsed statistics, in method order.
pub fn latency_summary(pairs: &[PromptPair]) -> Vec<LatencyStat> {
    let mut groups: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.method).or_default().push(p.elapsed);
    }
    groups
        .into_iter()
        .map(|(method, v)| LatencyStat {
            method,
            count: v.len(),
            mean_seconds: v.iter().sum::<f64>() / v.len() as f64,
            min_seconds: v.iter().copied().fold(f64::INFINITY, f64::min),
            max_seconds: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

/// Seconds are written with millisecond precision, e.g. `0.128`.
pub fn write_latency_report(pairs: &[PromptPair], path: &Path) -> Result<Vec<LatencyStat>, ReportError> {
    if pairs.is_empty() {
        return Err(ReportError::Empty);
    }
    let stats = latency_summary(pairs);
    let mut w = writer(path)?;
    w.write_record(LATENCY_HEADER)?;
    for s in &stats {
        w.write_record([
            s.method.as_str().to_string(),
            s.count.to_string(),
            format!("{:.3}", s.mean_seconds),
            format!("{:.3}", s.min_seconds),
            format!("{:.3}", s.max_seconds),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(stats)
}
