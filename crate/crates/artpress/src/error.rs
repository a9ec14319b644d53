//! Top-level error type and the process exit codes it maps to.

use artpress_core::enhance::EnhanceError;
use artpress_core::imaging::ImagingError;
use artpress_core::product::ProductError;
use artpress_core::quality::QualityError;

use crate::bench::BenchError;
use crate::db::DbError;
use crate::png_io::PngError;
use crate::remote::RemoteError;
use crate::report::ReportError;
use crate::telemetry::TelemetryError;
use crate::upscaler::UpscaleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitCode {
    Ok = 0,
    Failure = 1,
    Config = 2,
    Backend = 3,
    Insufficient = 4,
}

impl From<ExitCode> for std::process::ExitCode {
    fn from(code: ExitCode) -> Self {
        std::process::ExitCode::from(code as u8)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Png(#[from] PngError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Enhance(#[from] EnhanceError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Upscale(#[from] UpscaleError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn remote_code(e: &RemoteError) -> ExitCode {
    match e {
        RemoteError::InvalidRequest(_) => ExitCode::Config,
        _ => ExitCode::Backend,
    }
}

impl Error {
    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Error::Config(_)
            | Error::Db(_)
            | Error::Png(_)
            | Error::Telemetry(_)
            | Error::Imaging(_)
            | Error::Quality(_)
            | Error::Product(_) => ExitCode::Config,
            Error::Backend(_) => ExitCode::Backend,
            Error::Io { .. } | Error::Report(_) => ExitCode::Failure,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Enhance(EnhanceError::Chat(_)) => ExitCode::Backend,
            Error::Enhance(_) => ExitCode::Config,
            Error::Remote(e) | Error::Upscale(UpscaleError::Remote(e)) => remote_code(e),
            Error::Upscale(_) => ExitCode::Config,
            Error::Bench(BenchError::Io { .. } | BenchError::Report(_)) => ExitCode::Failure,
            Error::Bench(_) => ExitCode::Config,
        }
    }
}
