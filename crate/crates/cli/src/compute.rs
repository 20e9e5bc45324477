//! The morphometric run: manifest rows in, per-slice CSV and drift-store
//! records out.
//!
//! Rows are independent work units processed on the rayon pool; results
//! are merged back in manifest order and written by a single writer, so a
//! run's outputs are a pure function of (manifest, config, shard). A shard
//! `k/n` processes the rows whose index is congruent to k mod n.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cordmetrics_core::drift::{slice_level_key, DriftStore, ModelVersion, MorphometricRecord};
use cordmetrics_core::geometry::{write_slice_csv, BinaryMask, LevelLabels, SubjectMorphometrics};
use cordmetrics_core::manifest::{DatasetManifest, ManifestRow};
use cordmetrics_core::nifti::read_volume;
use cordmetrics_core::volume::Orientation;

use crate::config::{RunConfig, Shard};
use crate::{iso_date_today, WorkflowError};

pub const SUMMARY_SCHEMA: &str = "cordmetrics-compute-summary/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComputeSummary {
    pub schema: String,
    pub config_digest: String,
    pub shard: String,
    /// Rows this shard was responsible for.
    pub shard_rows: usize,
    pub processed: usize,
    pub failed: usize,
    pub records_appended: usize,
    /// RFC3339 timestamp, present only when the run was stamped.
    #[serde(default)]
    pub stamp: Option<String>,
}

struct RowSuccess {
    row_index: usize,
    subject: SubjectMorphometrics<f64>,
    records: Vec<MorphometricRecord>,
}

struct RowFailure {
    row_index: usize,
    row: ManifestRow,
    error: String,
}

/// Runs the full per-row pipeline (parse, reorient to RPI, binarize,
/// per-slice morphometrics, level aggregates) over the shard's manifest
/// rows, appends the records to the drift store, and writes
/// `slices.csv`, `errors.csv`, and `summary.json` under `out_dir`.
///
/// Per-row failures land in the errors CSV and do not abort the run;
/// `processed + failed` always equals the shard's row count.
pub fn run_morphometrics(
    manifest: &DatasetManifest,
    config: &RunConfig,
    shard: Shard,
    store_dir: &Path,
    out_dir: &Path,
    stamp: bool,
) -> Result<ComputeSummary, WorkflowError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let shard_rows: Vec<(usize, &ManifestRow)> = manifest
        .rows
        .iter()
        .enumerate()
        .filter(|(idx, _)| idx % shard.count == shard.index)
        .collect();
    if manifest.rows.is_empty() {
        eprintln!("warning: manifest is empty, producing empty outputs");
    }

    let outcomes: Vec<Result<RowSuccess, Box<RowFailure>>> = shard_rows
        .par_iter()
        .map(|(idx, row)| {
            process_row(manifest, row, config, *idx).map_err(|error| {
                Box::new(RowFailure {
                    row_index: *idx,
                    row: (*row).clone(),
                    error,
                })
            })
        })
        .collect();

    let mut successes = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(s) => successes.push(s),
            Err(f) => failures.push(*f),
        }
    }
    // Parallel collect preserves order, but the merge contract is manifest
    // order; keep it explicit.
    successes.sort_by_key(|s| s.row_index);
    failures.sort_by_key(|f| f.row_index);

    let slices_path = out_dir.join("slices.csv");
    let file = std::fs::File::create(&slices_path)?;
    write_slice_csv(file, successes.iter().map(|s| &s.subject))?;

    let mut errors = csv::Writer::from_path(out_dir.join("errors.csv"))?;
    errors.write_record([
        "row_index",
        "subject_id",
        "contrast",
        "version_id",
        "mask_path",
        "error",
    ])?;
    for f in &failures {
        errors.write_record([
            &f.row_index.to_string(),
            &f.row.subject_id,
            &f.row.contrast,
            &f.row.version_id,
            &f.row.mask_path,
            &f.error,
        ])?;
    }
    errors.flush()?;

    let mut records: Vec<MorphometricRecord> =
        successes.iter().flat_map(|s| s.records.clone()).collect();
    records.sort_by_key(|r| r.key());

    let store = DriftStore::open(store_dir)?;
    let appended = if records.is_empty() {
        0
    } else {
        store.append_records(&records)?
    };
    let versions: BTreeSet<&str> = records.iter().map(|r| r.version_id.as_str()).collect();
    for version_id in versions {
        let mut version = ModelVersion::new(version_id);
        if stamp {
            version.created = iso_date_today();
        }
        store.register_version(version)?;
    }

    let summary = ComputeSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        config_digest: config.digest(),
        shard: shard.to_string(),
        shard_rows: shard_rows.len(),
        processed: successes.len(),
        failed: failures.len(),
        records_appended: appended,
        stamp: stamp.then(crate::rfc3339_now),
    };
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out_dir.join("summary.json"), json + "\n")?;
    if summary.failed > 0 {
        eprintln!(
            "warning: {} of {} rows failed; see errors.csv",
            summary.failed, summary.shard_rows
        );
    }
    Ok(summary)
}

fn process_row(
    manifest: &DatasetManifest,
    row: &ManifestRow,
    config: &RunConfig,
    row_index: usize,
) -> Result<RowSuccess, String> {
    let mask_path = manifest.mask_path(row);
    let volume =
        read_volume::<f64>(&mask_path).map_err(|e| format!("{}: {e}", mask_path.display()))?;
    let mask = BinaryMask::binarize(
        &volume.reorient(Orientation::RPI),
        config.binarize_threshold,
    )
    .map_err(|e| e.to_string())?;

    let labels_path = manifest
        .labels_path(row)
        .ok_or_else(|| "labels required for level-restricted metrics".to_string())?;
    let labels = load_labels(&labels_path)?;

    let subject = SubjectMorphometrics::compute(
        &row.subject_id,
        &row.contrast,
        &row.version_id,
        &mask,
        Some(&labels),
        &config.level_set(),
        &config.metrics,
    )
    .map_err(|e| e.to_string())?;

    let mut records = Vec::new();
    for ((metric, level_key), value) in &subject.aggregates {
        records.push(MorphometricRecord {
            subject_id: row.subject_id.clone(),
            contrast: row.contrast.clone(),
            version_id: row.version_id.clone(),
            metric: *metric,
            level_key: level_key.clone(),
            value: *value,
        });
    }
    for slice in &subject.slices {
        for &metric in &config.metrics {
            if let Some(value) = slice.value(metric) {
                records.push(MorphometricRecord {
                    subject_id: row.subject_id.clone(),
                    contrast: row.contrast.clone(),
                    version_id: row.version_id.clone(),
                    metric,
                    level_key: slice_level_key(slice.slice_index),
                    value,
                });
            }
        }
    }

    Ok(RowSuccess {
        row_index,
        subject,
        records,
    })
}

/// Labels come either as a NIfTI level volume or as a per-slice CSV table
/// with `slice_index,level` columns.
fn load_labels(path: &Path) -> Result<LevelLabels<f64>, String> {
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut reader = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
        let mut table = BTreeMap::new();
        for record in reader.deserialize::<(usize, u32)>() {
            let (slice, level) = record.map_err(|e| format!("{}: {e}", path.display()))?;
            table.insert(slice, level);
        }
        Ok(LevelLabels::per_slice(table))
    } else {
        let volume = read_volume::<f64>(path).map_err(|e| format!("{}: {e}", path.display()))?;
        LevelLabels::volumetric(volume.reorient(Orientation::RPI)).map_err(|e| e.to_string())
    }
}
