//! Morphometric drift analytics: per-version aggregation, cross-contrast
//! CSA variability, version-to-version comparison, scaling-factor tables,
//! and the release gate.
//!
//! All statistics over contrasts and subjects use the sample standard
//! deviation (n-1 divisor); the convention is stamped into every report
//! header. Analytics are pure over an immutable snapshot of the store.

pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::DriftStore;

use crate::geometry::Metric;

pub const REPORT_SCHEMA: &str = "cordmetrics-drift-report/1";
pub const STD_CONVENTION: &str = "sample (n-1)";

#[derive(Debug, Error)]
pub enum DriftError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate record key {key:?}")]
    DuplicateRecord { key: RecordKey },
    #[error("record value for subject {subject_id} metric {metric} is not finite")]
    NonFiniteValue { subject_id: String, metric: Metric },
    #[error("model version id must be non-empty")]
    EmptyVersionId,
    #[error("version {version_id} already registered with different fields")]
    VersionConflict { version_id: String },
    #[error(
        "subject {subject_id}: {found} contrast(s) with a {level_key} area record, need at least 2"
    )]
    InsufficientContrasts {
        subject_id: String,
        found: usize,
        level_key: String,
    },
    #[error("{found} subject(s) carry both contrasts, need at least 2")]
    InsufficientSubjects { found: usize },
    #[error("old record {key:?} is zero, scaling factor undefined")]
    DivisionByZeroValue { key: RecordKey },
    #[error("no overlapping record keys between the two sets")]
    NoOverlap,
    #[error("version {version_id} has no records in the store")]
    UnknownVersion { version_id: String },
    #[error("invalid gate policy: {0}")]
    InvalidPolicy(String),
}

/// A released model version tracked by the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVersion {
    pub version_id: String,
    #[serde(default)]
    pub source_url: Option<String>,
    /// ISO-8601 date. Defaults to the epoch placeholder so stores stay
    /// byte-reproducible unless a real date is stamped in.
    pub created: String,
}

impl ModelVersion {
    pub fn new(version_id: &str) -> Self {
        ModelVersion {
            version_id: version_id.to_string(),
            source_url: None,
            created: "1970-01-01".to_string(),
        }
    }
}

/// Identity of one morphometric value in the ledger:
/// (version, subject, contrast, metric, level key).
pub type RecordKey = (String, String, String, Metric, String);

/// One (subject, contrast, model version, metric, level-range) value, the
/// unit of the drift store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphometricRecord {
    pub subject_id: String,
    pub contrast: String,
    pub version_id: String,
    pub metric: Metric,
    pub level_key: String,
    pub value: f64,
}

impl MorphometricRecord {
    pub fn key(&self) -> RecordKey {
        (
            self.version_id.clone(),
            self.subject_id.clone(),
            self.contrast.clone(),
            self.metric,
            self.level_key.clone(),
        )
    }

    pub fn validate(&self) -> Result<(), DriftError> {
        if !self.value.is_finite() {
            return Err(DriftError::NonFiniteValue {
                subject_id: self.subject_id.clone(),
                metric: self.metric,
            });
        }
        Ok(())
    }
}

/// Level key for a per-slice record; zero-padded so lexicographic order
/// matches slice order.
pub fn slice_level_key(slice_index: usize) -> String {
    format!("slice-{slice_index:04}")
}

/// Sample standard deviation (n-1). Zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n as f64 - 1.0)).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pearson correlation, `None` when either side has zero variance.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Map (subject -> contrast -> area value) for one version and level key.
fn area_by_subject(
    records: &[MorphometricRecord],
    version: &str,
    level_key: &str,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in records {
        if r.version_id == version && r.metric == Metric::Area && r.level_key == level_key {
            out.entry(r.subject_id.clone())
                .or_default()
                .insert(r.contrast.clone(), r.value);
        }
    }
    out
}

/// Standard deviation of one subject's per-contrast level-range CSA.
///
/// `records` are the records of a single subject and version; contrasts
/// outside the given set are ignored and at least two must remain.
pub fn csa_std_across_contrasts(
    records: &[MorphometricRecord],
    contrasts: &BTreeSet<String>,
    level_key: &str,
) -> Result<f64, DriftError> {
    let mut values: BTreeMap<String, f64> = BTreeMap::new();
    let mut subject_id = String::new();
    for r in records {
        if r.metric == Metric::Area && r.level_key == level_key && contrasts.contains(&r.contrast) {
            values.insert(r.contrast.clone(), r.value);
            subject_id = r.subject_id.clone();
        }
    }
    if values.len() < 2 {
        return Err(DriftError::InsufficientContrasts {
            subject_id,
            found: values.len(),
            level_key: level_key.to_string(),
        });
    }
    let vals: Vec<f64> = values.values().copied().collect();
    Ok(sample_std(&vals))
}

/// One subject's paired values under two contrasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPoint {
    pub subject_id: String,
    pub value_a: f64,
    pub value_b: f64,
}

/// Agreement between two contrasts within one model version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub contrast_a: String,
    pub contrast_b: String,
    /// Mean of (a - b) over paired subjects.
    pub mean_signed_diff: f64,
    /// `None` when either contrast has zero variance across subjects.
    pub pearson_r: Option<f64>,
    pub pairs: Vec<PairPoint>,
}

/// Per-subject agreement between two contrasts for one version, pairs
/// ordered by subject id.
pub fn contrast_agreement(
    records: &[MorphometricRecord],
    version: &str,
    contrast_a: &str,
    contrast_b: &str,
    level_key: &str,
) -> Result<AgreementStats, DriftError> {
    let by_subject = area_by_subject(records, version, level_key);
    let mut pairs = Vec::new();
    for (subject, values) in &by_subject {
        if let (Some(&a), Some(&b)) = (values.get(contrast_a), values.get(contrast_b)) {
            pairs.push(PairPoint {
                subject_id: subject.clone(),
                value_a: a,
                value_b: b,
            });
        }
    }
    if pairs.len() < 2 {
        return Err(DriftError::InsufficientSubjects { found: pairs.len() });
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.value_a).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.value_b).collect();
    let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a - b).collect();
    Ok(AgreementStats {
        contrast_a: contrast_a.to_string(),
        contrast_b: contrast_b.to_string(),
        mean_signed_diff: mean(&diffs),
        pearson_r: pearson_r(&xs, &ys),
        pairs,
    })
}

/// Ratio statistics for one (metric, level key) across subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactorRow {
    pub metric: Metric,
    pub level_key: String,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub n: usize,
}

/// Per-metric, per-slice/level ratios between two record sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactorTable {
    pub rows: Vec<ScalingFactorRow>,
    /// Keys present only in the new set; reported, never silently dropped.
    pub unmatched_new: Vec<RecordKey>,
    /// Keys present only in the old set.
    pub unmatched_old: Vec<RecordKey>,
}

/// Computes new/old value ratios per (subject, contrast, metric, level key)
/// and aggregates them over subjects as unweighted mean +/- sample std per
/// (metric, level key).
pub fn scaling_factors(
    new_records: &[MorphometricRecord],
    old_records: &[MorphometricRecord],
) -> Result<ScalingFactorTable, DriftError> {
    type MatchKey = (String, String, Metric, String);
    let match_key = |r: &MorphometricRecord| -> MatchKey {
        (
            r.subject_id.clone(),
            r.contrast.clone(),
            r.metric,
            r.level_key.clone(),
        )
    };
    let old_map: BTreeMap<MatchKey, &MorphometricRecord> =
        old_records.iter().map(|r| (match_key(r), r)).collect();
    let new_map: BTreeMap<MatchKey, &MorphometricRecord> =
        new_records.iter().map(|r| (match_key(r), r)).collect();

    let mut ratios: BTreeMap<(Metric, String), Vec<f64>> = BTreeMap::new();
    let mut unmatched_new = Vec::new();
    for (key, new_rec) in &new_map {
        match old_map.get(key) {
            Some(old_rec) => {
                if old_rec.value == 0.0 {
                    return Err(DriftError::DivisionByZeroValue { key: old_rec.key() });
                }
                ratios
                    .entry((new_rec.metric, new_rec.level_key.clone()))
                    .or_default()
                    .push(new_rec.value / old_rec.value);
            }
            None => unmatched_new.push(new_rec.key()),
        }
    }
    let unmatched_old: Vec<RecordKey> = old_map
        .iter()
        .filter(|(key, _)| !new_map.contains_key(*key))
        .map(|(_, r)| r.key())
        .collect();

    if ratios.is_empty() {
        return Err(DriftError::NoOverlap);
    }
    let rows = ratios
        .into_iter()
        .map(|((metric, level_key), values)| ScalingFactorRow {
            metric,
            level_key,
            mean_ratio: mean(&values),
            std_ratio: sample_std(&values),
            n: values.len(),
        })
        .collect();
    Ok(ScalingFactorTable {
        rows,
        unmatched_new,
        unmatched_old,
    })
}

/// Per-version aggregates inside a drift report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionStats {
    /// Mean over eligible subjects of the per-subject CSA std across
    /// contrasts.
    pub mean_csa_std: f64,
    pub per_subject_csa_std: BTreeMap<String, f64>,
    /// Mean level-range CSA per contrast over subjects carrying that
    /// contrast in both compared versions.
    pub per_contrast_mean_csa: BTreeMap<String, f64>,
    pub contrast_agreement: Vec<AgreementStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDeltas {
    /// candidate mean CSA std minus base.
    pub mean_csa_std: f64,
    /// Relative change in percent; `None` when the base std is zero.
    pub mean_csa_std_rel_pct: Option<f64>,
    pub per_contrast_mean_csa: BTreeMap<String, f64>,
    /// Shift in percent of the base mean; `None` when the base mean is zero.
    pub per_contrast_shift_pct: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedSubject {
    pub subject_id: String,
    /// "version/contrast" entries the subject is missing.
    pub missing: Vec<String>,
}

/// Version-to-version drift comparison plus the gate verdict once applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub schema: String,
    pub std_convention: String,
    pub base_version: String,
    pub candidate_version: String,
    pub contrasts: Vec<String>,
    pub level_key: String,
    #[serde(default)]
    pub config_digest: Option<String>,
    #[serde(default)]
    pub stamp: Option<String>,
    pub base: VersionStats,
    pub candidate: VersionStats,
    pub deltas: DriftDeltas,
    pub excluded_subjects: Vec<ExcludedSubject>,
    pub verdict: Option<GateVerdict>,
}

/// Compares two model versions over a contrast set at one level key.
///
/// Subjects missing any contrast of the set in either version are excluded
/// from the cross-contrast STD statistic and listed in the report's
/// exclusions; per-contrast means pair subjects present in both versions
/// for that contrast.
pub fn compare_versions(
    records: &[MorphometricRecord],
    base_version: &str,
    candidate_version: &str,
    contrasts: &BTreeSet<String>,
    level_key: &str,
) -> Result<DriftReport, DriftError> {
    for version in [base_version, candidate_version] {
        if !records.iter().any(|r| r.version_id == version) {
            return Err(DriftError::UnknownVersion {
                version_id: version.to_string(),
            });
        }
    }
    let base_map = area_by_subject(records, base_version, level_key);
    let cand_map = area_by_subject(records, candidate_version, level_key);

    let all_subjects: BTreeSet<String> = base_map.keys().chain(cand_map.keys()).cloned().collect();
    let mut eligible = Vec::new();
    let mut excluded = Vec::new();
    for subject in &all_subjects {
        let mut missing = Vec::new();
        for (version, map) in [(base_version, &base_map), (candidate_version, &cand_map)] {
            for contrast in contrasts {
                let has = map
                    .get(subject)
                    .is_some_and(|values| values.contains_key(contrast));
                if !has {
                    missing.push(format!("{version}/{contrast}"));
                }
            }
        }
        if missing.is_empty() {
            eligible.push(subject.clone());
        } else {
            excluded.push(ExcludedSubject {
                subject_id: subject.clone(),
                missing,
            });
        }
    }
    if eligible.is_empty() {
        return Err(DriftError::NoOverlap);
    }

    let version_stats =
        |map: &BTreeMap<String, BTreeMap<String, f64>>, version: &str| -> VersionStats {
            let mut per_subject = BTreeMap::new();
            for subject in &eligible {
                let values: Vec<f64> = contrasts.iter().map(|c| map[subject][c]).collect();
                per_subject.insert(subject.clone(), sample_std(&values));
            }
            let stds: Vec<f64> = per_subject.values().copied().collect();

            let mut per_contrast = BTreeMap::new();
            for contrast in contrasts {
                let paired: Vec<f64> = all_subjects
                    .iter()
                    .filter(|s| {
                        base_map.get(*s).is_some_and(|v| v.contains_key(contrast))
                            && cand_map.get(*s).is_some_and(|v| v.contains_key(contrast))
                    })
                    .map(|s| map[s][contrast])
                    .collect();
                if !paired.is_empty() {
                    per_contrast.insert(contrast.clone(), mean(&paired));
                }
            }

            let mut agreement = Vec::new();
            let list: Vec<&String> = contrasts.iter().collect();
            for (ia, a) in list.iter().enumerate() {
                for b in &list[ia + 1..] {
                    if let Ok(stats) = contrast_agreement(records, version, a, b, level_key) {
                        agreement.push(stats);
                    }
                }
            }
            VersionStats {
                mean_csa_std: mean(&stds),
                per_subject_csa_std: per_subject,
                per_contrast_mean_csa: per_contrast,
                contrast_agreement: agreement,
            }
        };

    let base = version_stats(&base_map, base_version);
    let candidate = version_stats(&cand_map, candidate_version);

    let mut per_contrast_delta = BTreeMap::new();
    let mut per_contrast_shift = BTreeMap::new();
    for (contrast, &b) in &base.per_contrast_mean_csa {
        if let Some(&c) = candidate.per_contrast_mean_csa.get(contrast) {
            per_contrast_delta.insert(contrast.clone(), c - b);
            per_contrast_shift.insert(contrast.clone(), (b != 0.0).then(|| 100.0 * (c - b) / b));
        }
    }
    let std_delta = candidate.mean_csa_std - base.mean_csa_std;
    let deltas = DriftDeltas {
        mean_csa_std: std_delta,
        mean_csa_std_rel_pct: (base.mean_csa_std != 0.0)
            .then(|| 100.0 * std_delta / base.mean_csa_std),
        per_contrast_mean_csa: per_contrast_delta,
        per_contrast_shift_pct: per_contrast_shift,
    };

    Ok(DriftReport {
        schema: REPORT_SCHEMA.to_string(),
        std_convention: STD_CONVENTION.to_string(),
        base_version: base_version.to_string(),
        candidate_version: candidate_version.to_string(),
        contrasts: contrasts.iter().cloned().collect(),
        level_key: level_key.to_string(),
        config_digest: None,
        stamp: None,
        base,
        candidate,
        deltas,
        excluded_subjects: excluded,
        verdict: None,
    })
}

/// Release-gate bounds. The defaults (10% relative CSA-STD increase, 5%
/// per-contrast mean shift) are conservative and always echoed in the
/// verdict so a report never hides which envelope it was judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatePolicy {
    /// Max allowed absolute increase of mean CSA-STD, mm^2.
    #[serde(default)]
    pub max_std_increase_mm2: Option<f64>,
    /// Max allowed relative increase of mean CSA-STD, percent.
    #[serde(default)]
    pub max_std_increase_pct: Option<f64>,
    /// Max allowed per-contrast |mean CSA shift|, percent.
    pub max_contrast_shift_pct: f64,
}

impl Default for GatePolicy {
    fn default() -> Self {
        GatePolicy {
            max_std_increase_mm2: None,
            max_std_increase_pct: Some(10.0),
            max_contrast_shift_pct: 5.0,
        }
    }
}

impl GatePolicy {
    fn validate(&self) -> Result<(), DriftError> {
        if self.max_std_increase_mm2.is_none() && self.max_std_increase_pct.is_none() {
            return Err(DriftError::InvalidPolicy(
                "at least one CSA-STD increase bound (mm2 or %) is required".into(),
            ));
        }
        for (name, bound) in [
            ("max_std_increase_mm2", self.max_std_increase_mm2),
            ("max_std_increase_pct", self.max_std_increase_pct),
            ("max_contrast_shift_pct", Some(self.max_contrast_shift_pct)),
        ] {
            if let Some(b) = bound {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(DriftError::InvalidPolicy(format!(
                        "{name} must be positive and finite, got {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(b) = self.max_std_increase_mm2 {
            parts.push(format!("mean CSA-STD increase <= {b} mm^2"));
        }
        if let Some(b) = self.max_std_increase_pct {
            parts.push(format!("mean CSA-STD increase <= {b}%"));
        }
        parts.push(format!(
            "per-contrast |mean CSA shift| <= {}%",
            self.max_contrast_shift_pct
        ));
        parts.join("; ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub bound: String,
    pub observed: f64,
    pub allowed: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub status: GateStatus,
    pub policy: GatePolicy,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

/// Applies the gate policy to a drift report. PASS only when every bound
/// holds; FAIL lists each violated bound with observed vs allowed values.
pub fn gate(report: &DriftReport, policy: &GatePolicy) -> Result<GateVerdict, DriftError> {
    policy.validate()?;
    let mut violations = Vec::new();
    let delta = report.deltas.mean_csa_std;

    if let Some(bound) = policy.max_std_increase_mm2 {
        if delta > bound {
            violations.push(Violation {
                bound: "max_std_increase_mm2".into(),
                observed: delta,
                allowed: bound,
                detail: format!("mean CSA-STD increased by {delta:.6} mm^2, allowed {bound} mm^2"),
            });
        }
    }
    if let Some(bound) = policy.max_std_increase_pct {
        match report.deltas.mean_csa_std_rel_pct {
            Some(rel) if rel > bound => violations.push(Violation {
                bound: "max_std_increase_pct".into(),
                observed: rel,
                allowed: bound,
                detail: format!("mean CSA-STD increased by {rel:.4}%, allowed {bound}%"),
            }),
            None if delta > 0.0 => violations.push(Violation {
                bound: "max_std_increase_pct".into(),
                observed: delta,
                allowed: 0.0,
                detail: format!(
                    "base mean CSA-STD is zero; any increase ({delta:.6} mm^2) violates the relative bound"
                ),
            }),
            _ => {}
        }
    }
    for (contrast, shift) in &report.deltas.per_contrast_shift_pct {
        let bound = policy.max_contrast_shift_pct;
        match shift {
            Some(pct) if pct.abs() > bound => violations.push(Violation {
                bound: format!("max_contrast_shift_pct[{contrast}]"),
                observed: *pct,
                allowed: bound,
                detail: format!("{contrast} mean CSA shifted by {pct:.4}%, allowed +/-{bound}%"),
            }),
            None => {
                let abs = report.deltas.per_contrast_mean_csa[contrast];
                if abs != 0.0 {
                    violations.push(Violation {
                        bound: format!("max_contrast_shift_pct[{contrast}]"),
                        observed: abs,
                        allowed: 0.0,
                        detail: format!(
                            "{contrast} base mean CSA is zero; any shift ({abs:.6} mm^2) violates the relative bound"
                        ),
                    });
                }
            }
            _ => {}
        }
    }

    let status = if violations.is_empty() {
        GateStatus::Pass
    } else {
        GateStatus::Fail
    };
    Ok(GateVerdict {
        status,
        policy: policy.clone(),
        violations,
        notes: vec![format!("policy: {}", policy.describe())],
    })
}

/// Human-oriented CSV summary of the drift report: one row per statistic
/// with base, candidate, and delta columns.
pub fn write_report_csv<W: Write>(writer: W, report: &DriftReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["statistic", "base", "candidate", "delta"])?;
    w.write_record([
        "mean_csa_std_mm2",
        &report.base.mean_csa_std.to_string(),
        &report.candidate.mean_csa_std.to_string(),
        &report.deltas.mean_csa_std.to_string(),
    ])?;
    for (contrast, base_value) in &report.base.per_contrast_mean_csa {
        let cand = report.candidate.per_contrast_mean_csa.get(contrast);
        let delta = report.deltas.per_contrast_mean_csa.get(contrast);
        w.write_record([
            &format!("mean_csa_mm2[{contrast}]"),
            &base_value.to_string(),
            &cand.map(|v| v.to_string()).unwrap_or_default(),
            &delta.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.write_record([
        "std_convention",
        report.std_convention.as_str(),
        report.std_convention.as_str(),
        "",
    ])?;
    if let Some(v) = &report.verdict {
        let status = match v.status {
            GateStatus::Pass => "PASS",
            GateStatus::Fail => "FAIL",
        };
        w.write_record(["gate_verdict", "", status, ""])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        subject: &str,
        contrast: &str,
        version: &str,
        metric: Metric,
        level_key: &str,
        value: f64,
    ) -> MorphometricRecord {
        MorphometricRecord {
            subject_id: subject.into(),
            contrast: contrast.into(),
            version_id: version.into(),
            metric,
            level_key: level_key.into(),
            value,
        }
    }

    fn area(subject: &str, contrast: &str, version: &str, value: f64) -> MorphometricRecord {
        record(subject, contrast, version, Metric::Area, "C2-C3", value)
    }

    fn six_contrasts() -> BTreeSet<String> {
        ["T1w", "T2w", "T2star", "MTon", "GRET1w", "DWI"]
            .into_iter()
            .map(String::from)
            .collect()
    }

    #[test]
    fn std_of_identical_values_is_zero() {
        let records: Vec<_> = six_contrasts()
            .iter()
            .map(|c| area("sub-01", c, "v1.0", 71.5))
            .collect();
        let std = csa_std_across_contrasts(&records, &six_contrasts(), "C2-C3").unwrap();
        assert_eq!(std, 0.0);
    }

    #[test]
    fn two_point_std_is_diff_over_sqrt2() {
        let records = vec![
            area("sub-01", "T1w", "v1.0", 70.0),
            area("sub-01", "T2w", "v1.0", 74.0),
        ];
        let contrasts: BTreeSet<String> = ["T1w".into(), "T2w".into()].into();
        let std = csa_std_across_contrasts(&records, &contrasts, "C2-C3").unwrap();
        assert!((std - 4.0 / 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn six_value_std_matches_direct_formula() {
        let values = [68.0, 70.0, 71.0, 72.0, 74.0, 75.0];
        let contrasts = six_contrasts();
        let records: Vec<_> = contrasts
            .iter()
            .zip(values)
            .map(|(c, v)| area("sub-01", c, "v1.0", v))
            .collect();
        let std = csa_std_across_contrasts(&records, &contrasts, "C2-C3").unwrap();
        // Independent direct computation.
        let m = values.iter().sum::<f64>() / 6.0;
        let expect = (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 5.0).sqrt();
        assert!((std - expect).abs() < 1e-12);
    }

    #[test]
    fn single_contrast_is_insufficient() {
        let records = vec![area("sub-01", "T1w", "v1.0", 70.0)];
        let contrasts: BTreeSet<String> = ["T1w".into(), "T2w".into()].into();
        assert!(matches!(
            csa_std_across_contrasts(&records, &contrasts, "C2-C3"),
            Err(DriftError::InsufficientContrasts { found: 1, .. })
        ));
    }

    #[test]
    fn agreement_of_offset_contrasts() {
        let mut records = Vec::new();
        for (idx, subject) in ["sub-01", "sub-02", "sub-03"].iter().enumerate() {
            let a = 70.0 + idx as f64;
            records.push(area(subject, "T1w", "v1.0", a));
            records.push(area(subject, "T2w", "v1.0", a + 1.0));
        }
        let stats = contrast_agreement(&records, "v1.0", "T1w", "T2w", "C2-C3").unwrap();
        assert_eq!(stats.mean_signed_diff, -1.0);
        assert!((stats.pearson_r.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(stats.pairs.len(), 3);
        assert_eq!(stats.pairs[0].subject_id, "sub-01");
    }

    #[test]
    fn agreement_r_guard_on_zero_variance() {
        let records = vec![
            area("sub-01", "T1w", "v1.0", 70.0),
            area("sub-01", "T2w", "v1.0", 70.0),
            area("sub-02", "T1w", "v1.0", 70.0),
            area("sub-02", "T2w", "v1.0", 70.0),
        ];
        let stats = contrast_agreement(&records, "v1.0", "T1w", "T2w", "C2-C3").unwrap();
        assert_eq!(stats.mean_signed_diff, 0.0);
        assert_eq!(stats.pearson_r, None);
    }

    #[test]
    fn pearson_matches_direct_formula_on_random_table() {
        // Fixed pseudo-random table; oracle is the textbook formula.
        let xs: Vec<f64> = (0..10).map(|i| ((i * 37 + 11) % 17) as f64).collect();
        let ys: Vec<f64> = (0..10).map(|i| ((i * 53 + 7) % 23) as f64).collect();
        let r = pearson_r(&xs, &ys).unwrap();
        let mx = xs.iter().sum::<f64>() / 10.0;
        let my = ys.iter().sum::<f64>() / 10.0;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        assert!((r - cov / (vx * vy).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scaling_factor_identity_is_exactly_one() {
        let records = vec![
            area("sub-01", "T2w", "v1.0", 70.0),
            area("sub-02", "T2w", "v1.0", 75.0),
        ];
        let new: Vec<_> = records
            .iter()
            .cloned()
            .map(|mut r| {
                r.version_id = "v2.0".into();
                r
            })
            .collect();
        let table = scaling_factors(&new, &records).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].mean_ratio, 1.0);
        assert_eq!(table.rows[0].std_ratio, 0.0);
        assert_eq!(table.rows[0].n, 2);
        assert!(table.unmatched_new.is_empty());
    }

    #[test]
    fn scaling_factor_single_key_arithmetic() {
        let old = vec![area("sub-01", "T2w", "v1.0", 80.0)];
        let new = vec![area("sub-01", "T2w", "v2.0", 78.5)];
        let table = scaling_factors(&new, &old).unwrap();
        assert_eq!(table.rows[0].mean_ratio, 0.98125);
    }

    #[test]
    fn scaling_factor_zero_old_value_is_error() {
        let old = vec![area("sub-01", "T2w", "v1.0", 0.0)];
        let new = vec![area("sub-01", "T2w", "v2.0", 1.0)];
        assert!(matches!(
            scaling_factors(&new, &old),
            Err(DriftError::DivisionByZeroValue { .. })
        ));
    }

    #[test]
    fn scaling_factor_reports_unmatched_keys() {
        let old = vec![
            area("sub-01", "T2w", "v1.0", 80.0),
            area("sub-02", "T2w", "v1.0", 82.0),
        ];
        let new = vec![
            area("sub-01", "T2w", "v2.0", 80.0),
            area("sub-03", "T2w", "v2.0", 84.0),
        ];
        let table = scaling_factors(&new, &old).unwrap();
        assert_eq!(table.unmatched_new.len(), 1);
        assert_eq!(table.unmatched_old.len(), 1);
        assert_eq!(table.unmatched_new[0].1, "sub-03");
        assert_eq!(table.unmatched_old[0].1, "sub-02");
    }

    fn two_version_store(scale: f64) -> Vec<MorphometricRecord> {
        let contrasts = six_contrasts();
        let mut records = Vec::new();
        for (sidx, subject) in ["sub-01", "sub-02", "sub-03"].iter().enumerate() {
            for (cidx, contrast) in contrasts.iter().enumerate() {
                let value = 65.0 + sidx as f64 * 3.0 + cidx as f64 * 0.5;
                records.push(area(subject, contrast, "v1.0", value));
                records.push(area(subject, contrast, "v2.0", value * scale));
            }
        }
        records
    }

    #[test]
    fn identical_versions_have_zero_deltas_and_pass() {
        let records = two_version_store(1.0);
        let report = compare_versions(&records, "v1.0", "v2.0", &six_contrasts(), "C2-C3").unwrap();
        assert_eq!(report.deltas.mean_csa_std, 0.0);
        assert!(report
            .deltas
            .per_contrast_mean_csa
            .values()
            .all(|&d| d == 0.0));
        let verdict = gate(&report, &GatePolicy::default()).unwrap();
        assert_eq!(verdict.status, GateStatus::Pass);
        assert!(verdict.violations.is_empty());
    }

    #[test]
    fn scaled_candidate_shifts_and_fails_default_gate() {
        let records = two_version_store(1.10);
        let report = compare_versions(&records, "v1.0", "v2.0", &six_contrasts(), "C2-C3").unwrap();
        for (contrast, shift) in &report.deltas.per_contrast_shift_pct {
            let shift = shift.unwrap();
            assert!(
                (shift - 10.0).abs() < 1e-9,
                "{contrast} shifted {shift}%, expected 10%"
            );
        }
        // Homogeneity: scaling every value by k scales the std by k.
        let base_std = report.base.mean_csa_std;
        let cand_std = report.candidate.mean_csa_std;
        assert!((cand_std - base_std * 1.10).abs() < 1e-9);

        let verdict = gate(&report, &GatePolicy::default()).unwrap();
        assert_eq!(verdict.status, GateStatus::Fail);
        let contrast_violations = verdict
            .violations
            .iter()
            .filter(|v| v.bound.starts_with("max_contrast_shift_pct"))
            .count();
        assert_eq!(contrast_violations, 6);
    }

    #[test]
    fn subjects_missing_a_contrast_are_excluded_and_listed() {
        let mut records = two_version_store(1.0);
        // Drop sub-03's DWI record in the candidate version.
        records.retain(|r| {
            !(r.subject_id == "sub-03" && r.contrast == "DWI" && r.version_id == "v2.0")
        });
        let report = compare_versions(&records, "v1.0", "v2.0", &six_contrasts(), "C2-C3").unwrap();
        assert_eq!(report.excluded_subjects.len(), 1);
        assert_eq!(report.excluded_subjects[0].subject_id, "sub-03");
        assert_eq!(report.excluded_subjects[0].missing, vec!["v2.0/DWI"]);
        assert_eq!(report.base.per_subject_csa_std.len(), 2);
    }

    #[test]
    fn unknown_version_is_typed() {
        let records = two_version_store(1.0);
        assert!(matches!(
            compare_versions(&records, "v1.0", "v9.9", &six_contrasts(), "C2-C3"),
            Err(DriftError::UnknownVersion { .. })
        ));
    }

    #[test]
    fn gate_rejects_non_positive_bounds() {
        let records = two_version_store(1.0);
        let report = compare_versions(&records, "v1.0", "v2.0", &six_contrasts(), "C2-C3").unwrap();
        let policy = GatePolicy {
            max_std_increase_mm2: Some(-1.0),
            ..GatePolicy::default()
        };
        assert!(matches!(
            gate(&report, &policy),
            Err(DriftError::InvalidPolicy(_))
        ));
    }

    #[test]
    fn gate_cites_absolute_std_bound() {
        let mut report = compare_versions(
            &two_version_store(1.0),
            "v1.0",
            "v2.0",
            &six_contrasts(),
            "C2-C3",
        )
        .unwrap();
        report.deltas.mean_csa_std = 0.5;
        report.deltas.mean_csa_std_rel_pct = None;
        report.base.mean_csa_std = 0.0;
        let policy = GatePolicy {
            max_std_increase_mm2: Some(0.2),
            max_std_increase_pct: None,
            max_contrast_shift_pct: 5.0,
        };
        let verdict = gate(&report, &policy).unwrap();
        assert_eq!(verdict.status, GateStatus::Fail);
        assert_eq!(verdict.violations[0].bound, "max_std_increase_mm2");
        assert_eq!(verdict.violations[0].observed, 0.5);
        assert_eq!(verdict.violations[0].allowed, 0.2);
    }

    #[test]
    fn gate_is_monotone_in_bounds() {
        let records = two_version_store(1.04);
        let report = compare_versions(&records, "v1.0", "v2.0", &six_contrasts(), "C2-C3").unwrap();
        let tight = GatePolicy {
            max_std_increase_mm2: Some(0.001),
            max_std_increase_pct: Some(1.0),
            max_contrast_shift_pct: 2.0,
        };
        let loose = GatePolicy {
            max_std_increase_mm2: Some(10.0),
            max_std_increase_pct: Some(50.0),
            max_contrast_shift_pct: 20.0,
        };
        let v_tight = gate(&report, &tight).unwrap();
        let v_loose = gate(&report, &loose).unwrap();
        assert!(v_loose.violations.len() <= v_tight.violations.len());
        assert_eq!(v_loose.status, GateStatus::Pass);
    }

    #[test]
    fn report_serialization_is_deterministic() {
        let records = two_version_store(1.02);
        let a = compare_versions(&records, "v1.0", "v2.0", &six_contrasts(), "C2-C3").unwrap();
        let b = compare_versions(&records, "v1.0", "v2.0", &six_contrasts(), "C2-C3").unwrap();
        let ja = serde_json::to_string_pretty(&a).unwrap();
        let jb = serde_json::to_string_pretty(&b).unwrap();
        assert_eq!(ja, jb);
        let back: DriftReport = serde_json::from_str(&ja).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn report_csv_has_summary_rows() {
        let records = two_version_store(1.0);
        let mut report =
            compare_versions(&records, "v1.0", "v2.0", &six_contrasts(), "C2-C3").unwrap();
        report.verdict = Some(gate(&report, &GatePolicy::default()).unwrap());
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("statistic,base,candidate,delta\n"));
        assert!(text.contains("mean_csa_std_mm2"));
        assert!(text.contains("gate_verdict,,PASS,"));
    }
}
