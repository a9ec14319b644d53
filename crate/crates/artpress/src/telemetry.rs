//! Telemetry JSONL written by the GPU sampler sidecar.

use std::path::Path;

use artpress_core::quality::{validate_samples, QualityError, TelemetrySample};

#[derive(Debug, thiserror::Error)]
pub enum TelemetryError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: t_ms {t_ms} is earlier than the previous sample ({previous})")]
    NonMonotonicTime { line: usize, t_ms: u64, previous: u64 },
    #[error("line {line}: {field} = {value} out of range")]
    Range {
        line: usize,
        field: &'static str,
        value: f64,
    },
}

pub fn parse_telemetry(path: &Path) -> Result<Vec<TelemetrySample>, TelemetryError> {
    let contents = std::fs::read_to_string(path).map_err(|source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_telemetry_str(&contents)
}

pub fn parse_telemetry_str(contents: &str) -> Result<Vec<TelemetrySample>, TelemetryError> {
    let mut samples = Vec::new();
    let mut lines = Vec::new();
    for (idx, raw) in contents.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let sample: TelemetrySample = serde_json::from_str(raw).map_err(|e| TelemetryError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        samples.push(sample);
        lines.push(idx + 1);
    }
    validate_samples(&samples).map_err(|e| match e {
        QualityError::NonMonotonicTime { index, t_ms, previous } => TelemetryError::NonMonotonicTime {
            line: lines[index],
            t_ms,
            previous,
        },
        QualityError::Range { index, field, value } => TelemetryError::Range {
            line: lines[index],
            field,
            value,
        },
        other => TelemetryError::Parse {
            line: 0,
            message: other.to_string(),
        },
    })?;
    Ok(samples)
}

pub fn to_jsonl(samples: &[TelemetrySample]) -> String {
    samples
        .iter()
        .map(|s| serde_json::to_string(s).expect("samples serialize") + "\n")
        .collect()
}
