//! Workflow layer: manifest-driven morphometric runs, drift reports, and
//! the CI gate, glued together by the `cordmetrics` binary.

pub mod compute;
pub mod config;
pub mod report;
pub mod split;
pub mod svg;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("need at least 2 subjects to split, found {found}")]
    TooFewSubjects { found: usize },
    #[error("split ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("report {0} carries no gate verdict")]
    MissingVerdict(PathBuf),
    #[error(transparent)]
    Manifest(#[from] cordmetrics_core::manifest::ManifestError),
    #[error(transparent)]
    Drift(#[from] cordmetrics_core::drift::DriftError),
    #[error(transparent)]
    Phantom(#[from] cordmetrics_core::phantom::PhantomError),
    #[error(transparent)]
    Nifti(#[from] cordmetrics_core::nifti::NiftiError),
    #[error(transparent)]
    Geometry(#[from] cordmetrics_core::geometry::GeometryError),
}

/// RFC3339 UTC timestamp for stamped runs.
pub fn rfc3339_now() -> String {
    let now = time::OffsetDateTime::now_utc();
    now.format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_else(|_| now.unix_timestamp().to_string())
}

/// Today's UTC date (ISO-8601), used as the version registration date on
/// stamped runs.
pub fn iso_date_today() -> String {
    let now = time::OffsetDateTime::now_utc();
    format!(
        "{:04}-{:02}-{:02}",
        now.year(),
        u8::from(now.month()),
        now.day()
    )
}
