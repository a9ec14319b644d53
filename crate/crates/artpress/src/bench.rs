//! Upscaler benchmark harness.
//!
//! Every (upscaler, image, repetition) cell is upscaled, timed, scored and,
//! when a sidecar telemetry file exists for it, joined with its GPU
//! summary. A failing cell is recorded with its error and left out of the
//! summaries; it never aborts the run.
//!
//! Telemetry files are matched by name:
//! `<telemetry_dir>/<upscaler_id>/<image_id>.<repetition>.jsonl`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use artpress_core::imaging::ImageBuffer;
use artpress_core::quality::{score, summarize_telemetry, TelemetrySample, DEFAULT_PERIOD};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::png_io::read_png;
use crate::report::{write_csv, write_report_json, write_summary_csv, write_telemetry_chart, ReportError};
use crate::telemetry::parse_telemetry;
use crate::upscaler::UpscalerSpec;

fn one() -> u32 {
    1
}

fn default_period() -> u32 {
    DEFAULT_PERIOD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub corpus_dir: PathBuf,
    pub upscalers: Vec<UpscalerSpec>,
    /// Overrides every upscaler's own scale when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default = "default_period")]
    pub period: u32,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/telemetry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telemetry_dir: Option<PathBuf>,
    /// Worker threads for native upscalers; defaults to the CPU count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("corpus {0} contains no PNG images")]
    EmptyCorpus(String),
    #[error("bench config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl BenchConfig {
    /// Loads a config, resolving relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: BenchConfig =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.corpus_dir = base.join(&cfg.corpus_dir);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.telemetry_dir = cfg.telemetry_dir.map(|t| base.join(t));
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.upscalers.is_empty() {
            return Err(BenchError::Config("no upscalers configured".into()));
        }
        if self.repetitions == 0 {
            return Err(BenchError::Config("repetitions must be at least 1".into()));
        }
        if self.period == 0 {
            return Err(BenchError::Config("period must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        for spec in self.effective_upscalers() {
            spec.validate().map_err(|e| BenchError::Config(e.to_string()))?;
            if !seen.insert(spec.id.clone()) {
                return Err(BenchError::Config(format!("duplicate upscaler id `{}`", spec.id)));
            }
        }
        Ok(())
    }

    /// Upscalers sorted by id with the global scale override applied.
    pub fn effective_upscalers(&self) -> Vec<UpscalerSpec> {
        let mut specs: Vec<UpscalerSpec> = self
            .upscalers
            .iter()
            .cloned()
            .map(|mut s| {
                if let Some(scale) = self.scale {
                    s.scale = scale;
                }
                s
            })
            .collect();
        specs.sort_by(|a, b| a.id.cmp(&b.id));
        specs
    }

    pub fn telemetry_root(&self) -> PathBuf {
        self.telemetry_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("telemetry"))
    }

    /// SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

impl CellStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, CellStatus::Ok)
    }

    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("failed: ") {
            Some(msg) => CellStatus::Failed(msg.to_string()),
            None if s == "ok" => CellStatus::Ok,
            None => CellStatus::Failed(s.to_string()),
        }
    }
}

impl std::fmt::Display for CellStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

impl Serialize for CellStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellStatus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(CellStatus::parse(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub upscaler_id: String,
    pub image_id: String,
    pub repetition: u32,
    pub seconds: f64,
    pub blurriness: Option<f64>,
    pub pixelation: Option<f64>,
    pub peak_vram_mb: Option<f64>,
    pub mean_load_pct: Option<f64>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpscalerSummary {
    pub upscaler_id: String,
    pub ok_cells: usize,
    pub failed_cells: usize,
    pub mean_seconds: Option<f64>,
    pub mean_blurriness: Option<f64>,
    pub mean_pixelation: Option<f64>,
    pub mean_peak_vram_mb: Option<f64>,
    pub mean_load_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<UpscalerSummary>,
    pub config_hash: String,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-upscaler means over successful rows, in upscaler id order.
pub fn summarize(rows: &[MetricRow]) -> Vec<UpscalerSummary> {
    let ids: BTreeSet<&str> = rows.iter().map(|r| r.upscaler_id.as_str()).collect();
    ids.into_iter()
        .map(|id| {
            let mine: Vec<&MetricRow> = rows.iter().filter(|r| r.upscaler_id == id).collect();
            let ok: Vec<&MetricRow> = mine.iter().copied().filter(|r| r.status.is_ok()).collect();
            UpscalerSummary {
                upscaler_id: id.to_string(),
                ok_cells: ok.len(),
                failed_cells: mine.len() - ok.len(),
                mean_seconds: mean(ok.iter().map(|r| Some(r.seconds))),
                mean_blurriness: mean(ok.iter().map(|r| r.blurriness)),
                mean_pixelation: mean(ok.iter().map(|r| r.pixelation)),
                mean_peak_vram_mb: mean(ok.iter().map(|r| r.peak_vram_mb)),
                mean_load_pct: mean(ok.iter().map(|r| r.mean_load_pct)),
            }
        })
        .collect()
}

/// PNG files of the corpus as (image id, path), sorted by id.
pub fn list_corpus(dir: &Path) -> Result<Vec<(String, PathBuf)>, BenchError> {
    let entries = std::fs::read_dir(dir).map_err(|source| BenchError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut images: Vec<(String, PathBuf)> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
        .collect();
    images.sort();
    if images.is_empty() {
        return Err(BenchError::EmptyCorpus(dir.display().to_string()));
    }
    Ok(images)
}

struct Cell<'a> {
    spec: &'a UpscalerSpec,
    image_id: &'a str,
    image: &'a Result<ImageBuffer, String>,
    repetition: u32,
}

pub fn telemetry_path(root: &Path, upscaler_id: &str, image_id: &str, repetition: u32) -> PathBuf {
    root.join(upscaler_id).join(format!("{image_id}.{repetition}.jsonl"))
}

fn run_cell(cell: &Cell<'_>, period: u32, telemetry_root: &Path) -> MetricRow {
    let mut row = MetricRow {
        upscaler_id: cell.spec.id.clone(),
        image_id: cell.image_id.to_string(),
        repetition: cell.repetition,
        seconds: 0.0,
        blurriness: None,
        pixelation: None,
        peak_vram_mb: None,
        mean_load_pct: None,
        status: CellStatus::Ok,
    };
    let image = match cell.image {
        Ok(img) => img,
        Err(e) => {
            row.status = CellStatus::Failed(format!("decode: {e}"));
            return row;
        }
    };
    let start = Instant::now();
    let result = cell.spec.upscale(image);
    row.seconds = start.elapsed().as_secs_f64();
    let output = match result {
        Ok(out) => out,
        Err(e) => {
            row.status = CellStatus::Failed(e.to_string());
            return row;
        }
    };
    match score(&output, period) {
        Ok(q) => {
            row.blurriness = Some(q.blurriness);
            row.pixelation = Some(q.pixelation);
        }
        Err(e) => {
            row.status = CellStatus::Failed(format!("metrics: {e}"));
            return row;
        }
    }
    let tpath = telemetry_path(telemetry_root, &row.upscaler_id, &row.image_id, row.repetition);
    if tpath.exists() {
        match parse_telemetry(&tpath).map_err(|e| e.to_string()).and_then(|s| {
            summarize_telemetry(&s).map_err(|e| e.to_string())
        }) {
            Ok(summary) => {
                row.peak_vram_mb = Some(summary.peak_vram_mb);
                row.mean_load_pct = Some(summary.mean_load_pct);
            }
            Err(e) => row.status = CellStatus::Failed(format!("telemetry: {e}")),
        }
    }
    row
}

/// Runs every cell and assembles the report; writes nothing.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let corpus = list_corpus(&config.corpus_dir)?;
    let images: Vec<(String, Result<ImageBuffer, String>)> = corpus
        .into_iter()
        .map(|(id, path)| (id, read_png(&path).map_err(|e| e.to_string())))
        .collect();
    let specs = config.effective_upscalers();
    let telemetry_root = config.telemetry_root();

    let mut cells = Vec::new();
    for spec in &specs {
        for (image_id, image) in &images {
            for repetition in 1..=config.repetitions {
                cells.push(Cell {
                    spec,
                    image_id,
                    image,
                    repetition,
                });
            }
        }
    }

    let slots: Vec<Mutex<Option<MetricRow>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let (native, remote): (Vec<usize>, Vec<usize>) = (0..cells.len()).partition(|&i| !cells[i].spec.is_remote());

    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, native.len().max(1));
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = native.get(k) else { break };
                let row = run_cell(&cells[i], config.period, &telemetry_root);
                *slots[i].lock().expect("slot lock") = Some(row);
            });
        }
    });
    // Remote backends run one at a time so GPU timings are not shared.
    for i in remote {
        *slots[i].lock().expect("slot lock") = Some(run_cell(&cells[i], config.period, &telemetry_root));
    }

    let rows: Vec<MetricRow> = slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every cell ran"))
        .collect();
    Ok(BenchReport {
        summary: summarize(&rows),
        rows,
        config_hash: config.hash(),
    })
}

/// Concatenated telemetry of an upscaler's successful cells, with each
/// file's clock shifted to start where the previous one ended.
pub fn upscaler_telemetry(report: &BenchReport, upscaler_id: &str, root: &Path) -> Vec<TelemetrySample> {
    let mut out: Vec<TelemetrySample> = Vec::new();
    for row in report
        .rows
        .iter()
        .filter(|r| r.upscaler_id == upscaler_id && r.status.is_ok() && r.peak_vram_mb.is_some())
    {
        let Ok(samples) = parse_telemetry(&telemetry_path(root, upscaler_id, &row.image_id, row.repetition)) else {
            continue;
        };
        let Some(first) = samples.first().map(|s| s.t_ms) else { continue };
        let offset = out.last().map_or(0, |s| s.t_ms);
        out.extend(samples.into_iter().map(|mut s| {
            s.t_ms = s.t_ms - first + offset;
            s
        }));
    }
    out
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Paths written by [`run_and_write`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchOutputs {
    pub report_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub report_json: PathBuf,
    pub charts: Vec<PathBuf>,
}

/// Runs the bench and writes `report.csv`, `summary.csv`, `report.json`
/// and `charts/<upscaler>.svg` for upscalers with telemetry.
pub fn run_and_write(config: &BenchConfig) -> Result<(BenchReport, BenchOutputs), BenchError> {
    let report = run_bench(config)?;
    let out = &config.output_dir;
    let io = |source| BenchError::Io {
        path: out.display().to_string(),
        source,
    };
    std::fs::create_dir_all(out).map_err(io)?;
    let outputs = BenchOutputs {
        report_csv: out.join("report.csv"),
        summary_csv: out.join("summary.csv"),
        report_json: out.join("report.json"),
        charts: Vec::new(),
    };
    write_csv(&report, &outputs.report_csv)?;
    write_summary_csv(&report, &outputs.summary_csv)?;
    write_report_json(&report, &outputs.report_json)?;
    let mut outputs = outputs;
    let root = config.telemetry_root();
    for s in &report.summary {
        let samples = upscaler_telemetry(&report, &s.upscaler_id, &root);
        if samples.len() >= 2 {
            let charts = out.join("charts");
            std::fs::create_dir_all(&charts).map_err(io)?;
            let path = charts.join(format!("{}.svg", file_safe(&s.upscaler_id)));
            write_telemetry_chart(&samples, &path, &s.upscaler_id)?;
            outputs.charts.push(path);
        }
    }
    Ok((report, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(up: &str, secs: f64, ok: bool) -> MetricRow {
        MetricRow {
            upscaler_id: up.into(),
            image_id: "i".into(),
            repetition: 1,
            seconds: secs,
            blurriness: Some(secs / 10.0),
            pixelation: Some(1.0),
            peak_vram_mb: None,
            mean_load_pct: None,
            status: if ok { CellStatus::Ok } else { CellStatus::Failed("boom".into()) },
        }
    }

    #[test]
    fn summary_skips_failed_rows() {
        let rows = [row("A", 1.0, true), row("A", 3.0, true), row("A", 100.0, false), row("B", 5.0, false)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].ok_cells, s[0].failed_cells), (2, 1));
        assert_eq!(s[0].mean_seconds, Some(2.0));
        assert_eq!(s[0].mean_blurriness, Some(0.2));
        assert_eq!(s[0].mean_peak_vram_mb, None);
        assert_eq!(s[1].mean_seconds, None);
    }

    #[test]
    fn status_text_round_trip() {
        for s in [CellStatus::Ok, CellStatus::Failed("HTTP 500, twice".into())] {
            assert_eq!(CellStatus::parse(&s.to_string()), s);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg: BenchConfig = serde_json::from_str(
            r#"{"corpus_dir":"c","output_dir":"o","upscalers":[{"id":"N","kind":"native_nearest"}]}"#,
        )
        .unwrap();
        assert_eq!((cfg.repetitions, cfg.period), (1, 8));
        assert!(cfg.validate().is_ok());
        cfg.upscalers.push(cfg.upscalers[0].clone());
        assert!(matches!(cfg.validate(), Err(BenchError::Config(_))));
        cfg.upscalers.pop();
        cfg.scale = Some(1.5);
        assert!(cfg.validate().is_err(), "nearest cannot take a fractional scale");
    }

    #[test]
    fn telemetry_naming() {
        assert_eq!(
            telemetry_path(Path::new("/t"), "HAT_4X", "fox", 2),
            PathBuf::from("/t/HAT_4X/fox.2.jsonl")
        );
    }
}
