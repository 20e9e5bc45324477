//! Drift report emission: comparison JSON/CSV, scaling-factor tables, SVG
//! plots, and the release-asset bundle.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use cordmetrics_core::drift::{
    compare_versions, gate, scaling_factors, write_report_csv, DriftReport, DriftStore, GateStatus,
    MorphometricRecord, RecordKey, ScalingFactorTable,
};
use cordmetrics_core::geometry::Metric;

use crate::config::RunConfig;
use crate::svg::{self, SlicePanel};
use crate::WorkflowError;

/// Everything `report` writes, with the paths of the emitted files.
#[derive(Debug)]
pub struct ReportBundle {
    pub report: DriftReport,
    pub report_json: PathBuf,
    pub report_csv: PathBuf,
    pub scaling_json: PathBuf,
    pub scaling_csv: PathBuf,
    pub plots: Vec<PathBuf>,
    pub bundle_dir: PathBuf,
}

/// Loads the store, compares the two versions, and applies the gate. The
/// returned report carries the config digest and, when stamped, a
/// timestamp.
pub fn build_report(
    store_dir: &Path,
    base: &str,
    candidate: &str,
    config: &RunConfig,
    stamp: bool,
) -> Result<(DriftReport, Vec<MorphometricRecord>), WorkflowError> {
    let store = DriftStore::open(store_dir)?;
    let records = store.load_records()?;
    let mut report = compare_versions(
        &records,
        base,
        candidate,
        &config.contrast_set(),
        &config.level_key(),
    )?;
    report.config_digest = Some(config.digest());
    if stamp {
        report.stamp = Some(crate::rfc3339_now());
    }
    report.verdict = Some(gate(&report, &config.gate)?);
    Ok((report, records))
}

/// Writes `report.json` and `report_summary.csv` under `out_dir`.
pub fn write_compare_outputs(
    report: &DriftReport,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), WorkflowError> {
    std::fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(&json_path, json + "\n")?;
    let csv_path = out_dir.join("report_summary.csv");
    let file = std::fs::File::create(&csv_path)?;
    write_report_csv(file, report)?;
    Ok((json_path, csv_path))
}

/// Scaling-factor output with the zero-valued base keys that had to be
/// screened out before the ratio computation (they are reported here, not
/// silently dropped).
#[derive(Debug, Serialize)]
pub struct ScalingOutput {
    pub base_version: String,
    pub candidate_version: String,
    pub table: ScalingFactorTable,
    pub skipped_zero_base: Vec<RecordKey>,
}

fn version_records<'a>(
    records: &'a [MorphometricRecord],
    version: &str,
    metrics: &[Metric],
) -> Vec<&'a MorphometricRecord> {
    records
        .iter()
        .filter(|r| r.version_id == version && metrics.contains(&r.metric))
        .collect()
}

/// Ratio table candidate/base over every (subject, contrast, metric,
/// level key) pair, after screening out keys whose base value is exactly
/// zero (a zero denominator has no defined scaling factor).
pub fn build_scaling(
    records: &[MorphometricRecord],
    base: &str,
    candidate: &str,
    config: &RunConfig,
) -> Result<ScalingOutput, WorkflowError> {
    let base_records = version_records(records, base, &config.metrics);
    let cand_records = version_records(records, candidate, &config.metrics);

    let mut skipped: Vec<RecordKey> = base_records
        .iter()
        .filter(|r| r.value == 0.0)
        .map(|r| r.key())
        .collect();
    skipped.sort();
    let screened: std::collections::BTreeSet<(String, String, Metric, String)> = skipped
        .iter()
        .map(|k| (k.1.clone(), k.2.clone(), k.3, k.4.clone()))
        .collect();
    let keep = |r: &MorphometricRecord| {
        !screened.contains(&(
            r.subject_id.clone(),
            r.contrast.clone(),
            r.metric,
            r.level_key.clone(),
        ))
    };
    let old: Vec<MorphometricRecord> = base_records
        .iter()
        .filter(|r| keep(r))
        .map(|r| (*r).clone())
        .collect();
    let new: Vec<MorphometricRecord> = cand_records
        .iter()
        .filter(|r| keep(r))
        .map(|r| (*r).clone())
        .collect();

    let table = scaling_factors(&new, &old)?;
    Ok(ScalingOutput {
        base_version: base.to_string(),
        candidate_version: candidate.to_string(),
        table,
        skipped_zero_base: skipped,
    })
}

/// Paired per-scan level-range CSA values (base, candidate), ordered by
/// (subject, contrast).
pub fn version_pairs(
    records: &[MorphometricRecord],
    base: &str,
    candidate: &str,
    level_key: &str,
) -> Vec<svg::VersionPoint> {
    let mut by_scan: BTreeMap<(String, String), (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in records {
        if r.metric != Metric::Area || r.level_key != level_key {
            continue;
        }
        let slot = by_scan
            .entry((r.subject_id.clone(), r.contrast.clone()))
            .or_default();
        if r.version_id == base {
            slot.0 = Some(r.value);
        } else if r.version_id == candidate {
            slot.1 = Some(r.value);
        }
    }
    by_scan
        .into_iter()
        .filter_map(|((subject_id, contrast), pair)| match pair {
            (Some(base_value), Some(candidate_value)) => Some(svg::VersionPoint {
                subject_id,
                contrast,
                base_value,
                candidate_value,
            }),
            _ => None,
        })
        .collect()
}

/// Per-slice mean of one metric across (subject, contrast) for both
/// versions, over the slices populated in both.
fn slice_panel(
    records: &[MorphometricRecord],
    base: &str,
    candidate: &str,
    metric: Metric,
) -> SlicePanel {
    let mut by_version: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records {
        if r.metric != metric {
            continue;
        }
        let Some(slice) = r
            .level_key
            .strip_prefix("slice-")
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        if r.version_id == base || r.version_id == candidate {
            by_version
                .entry(if r.version_id == base { "base" } else { "cand" })
                .or_default()
                .entry(slice)
                .or_default()
                .push(r.value);
        }
    }
    let empty = BTreeMap::new();
    let base_map = by_version.get("base").unwrap_or(&empty);
    let cand_map = by_version.get("cand").unwrap_or(&empty);
    let slice_indices: Vec<usize> = base_map
        .keys()
        .filter(|k| cand_map.contains_key(*k))
        .copied()
        .collect();
    let mean = |vals: &Vec<f64>| vals.iter().sum::<f64>() / vals.len() as f64;
    SlicePanel {
        metric_name: metric.name().to_string(),
        base_mean: slice_indices.iter().map(|k| mean(&base_map[k])).collect(),
        candidate_mean: slice_indices.iter().map(|k| mean(&cand_map[k])).collect(),
        slice_indices,
    }
}

/// Full report emission: comparison JSON/CSV, scaling-factor table, the
/// three SVG plots, and a release-asset directory bundling everything
/// plus the gate verdict.
pub fn emit_reports(
    store_dir: &Path,
    base: &str,
    candidate: &str,
    config: &RunConfig,
    out_dir: &Path,
    stamp: bool,
) -> Result<ReportBundle, WorkflowError> {
    let (report, records) = build_report(store_dir, base, candidate, config, stamp)?;
    let (report_json, report_csv) = write_compare_outputs(&report, out_dir)?;

    let scaling = build_scaling(&records, base, candidate, config)?;
    let scaling_json = out_dir.join("scaling_factors.json");
    std::fs::write(
        &scaling_json,
        serde_json::to_string_pretty(&scaling)? + "\n",
    )?;
    let scaling_csv = out_dir.join("scaling_factors.csv");
    write_scaling_csv(&scaling_csv, &scaling.table)?;

    let plots_dir = out_dir.join("plots");
    std::fs::create_dir_all(&plots_dir)?;
    let panel = slice_panel(&records, base, candidate, Metric::Area);
    let pairs = version_pairs(&records, base, candidate, &config.level_key());
    let plots = vec![
        (
            plots_dir.join("csa_std_strip.svg"),
            svg::csa_std_strip(&report),
        ),
        (
            plots_dir.join("agreement_scatter.svg"),
            svg::agreement_scatter(&report, &config.report.agreement_pair),
        ),
        (
            plots_dir.join("version_scatter.svg"),
            svg::version_scatter(&report, &pairs),
        ),
        (
            plots_dir.join("scaling_band.svg"),
            svg::scaling_band(&report, &panel, &scaling.table),
        ),
    ];
    for (path, content) in &plots {
        std::fs::write(path, content)?;
    }

    // Release-asset bundle: every output plus the bare verdict.
    let bundle_dir = out_dir.join("release_assets");
    std::fs::create_dir_all(&bundle_dir)?;
    for src in [&report_json, &report_csv, &scaling_json, &scaling_csv] {
        std::fs::copy(src, bundle_dir.join(src.file_name().unwrap()))?;
    }
    for (path, _) in &plots {
        std::fs::copy(path, bundle_dir.join(path.file_name().unwrap()))?;
    }
    let verdict = report.verdict.as_ref().expect("gate ran in build_report");
    std::fs::write(
        bundle_dir.join("verdict.json"),
        serde_json::to_string_pretty(verdict)? + "\n",
    )?;

    Ok(ReportBundle {
        report,
        report_json,
        report_csv,
        scaling_json,
        scaling_csv,
        plots: plots.into_iter().map(|(p, _)| p).collect(),
        bundle_dir,
    })
}

fn write_scaling_csv(path: &Path, table: &ScalingFactorTable) -> Result<(), WorkflowError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "metric",
        "level_key",
        "mean_ratio",
        "std_ratio",
        "n_subjects",
    ])?;
    for row in &table.rows {
        w.write_record([
            row.metric.name(),
            row.level_key.as_str(),
            &row.mean_ratio.to_string(),
            &row.std_ratio.to_string(),
            &row.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a report file and maps its verdict onto the CI exit contract:
/// 0 for PASS, 2 for FAIL (reasons on stderr), operational failures bubble
/// up as errors (exit 1 in `main`).
pub fn gate_exit_code(report_path: &Path) -> Result<u8, WorkflowError> {
    let text = std::fs::read_to_string(report_path)?;
    let report: DriftReport = serde_json::from_str(&text)?;
    let verdict = report
        .verdict
        .ok_or_else(|| WorkflowError::MissingVerdict(report_path.to_path_buf()))?;
    for note in &verdict.notes {
        eprintln!("{note}");
    }
    match verdict.status {
        GateStatus::Pass => {
            eprintln!(
                "PASS: {} -> {} within the drift envelope",
                report.base_version, report.candidate_version
            );
            Ok(0)
        }
        GateStatus::Fail => {
            for v in &verdict.violations {
                eprintln!("FAIL: {}", v.detail);
            }
            Ok(2)
        }
    }
}
