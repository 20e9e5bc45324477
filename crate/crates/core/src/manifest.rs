//! Dataset manifest: the CSV table that drives morphometric runs.
//!
//! One row per (subject, contrast, model version) with mask and optional
//! label paths resolved relative to the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error reading manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(
        "duplicate manifest key (subject={subject_id}, contrast={contrast}, version={version_id})"
    )]
    DuplicateRow {
        subject_id: String,
        contrast: String,
        version_id: String,
    },
    #[error("manifest row {row} is missing required field '{field}'")]
    MissingField { row: usize, field: &'static str },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestRow {
    pub subject_id: String,
    pub contrast: String,
    pub version_id: String,
    pub mask_path: String,
    #[serde(default)]
    pub labels_path: Option<String>,
    #[serde(default)]
    pub site: Option<String>,
    #[serde(default)]
    pub pathology: Option<String>,
}

/// A loaded manifest plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn mask_path(&self, row: &ManifestRow) -> PathBuf {
        self.base_dir.join(&row.mask_path)
    }

    pub fn labels_path(&self, row: &ManifestRow) -> Option<PathBuf> {
        row.labels_path
            .as_ref()
            .filter(|p| !p.is_empty())
            .map(|p| self.base_dir.join(p))
    }

    /// Unique subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.subject_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }
}

/// Reads a manifest CSV, enforcing the (subject, contrast, version)
/// uniqueness invariant.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, rec) in reader.deserialize::<ManifestRow>().enumerate() {
        let mut row: ManifestRow = rec?;
        for (field, value) in [
            ("subject_id", &row.subject_id),
            ("contrast", &row.contrast),
            ("version_id", &row.version_id),
            ("mask_path", &row.mask_path),
        ] {
            if value.is_empty() {
                return Err(ManifestError::MissingField { row: idx, field });
            }
        }
        // Normalize empty optionals deserialized as Some("").
        for opt in [&mut row.labels_path, &mut row.site, &mut row.pathology] {
            if opt.as_deref() == Some("") {
                *opt = None;
            }
        }
        let key = (
            row.subject_id.clone(),
            row.contrast.clone(),
            row.version_id.clone(),
        );
        if !seen.insert(key) {
            return Err(ManifestError::DuplicateRow {
                subject_id: row.subject_id,
                contrast: row.contrast,
                version_id: row.version_id,
            });
        }
        rows.push(row);
    }
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(DatasetManifest { rows, base_dir })
}

/// Writes a manifest CSV with the canonical header.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "subject_id",
        "contrast",
        "version_id",
        "mask_path",
        "labels_path",
        "site",
        "pathology",
    ])?;
    for row in rows {
        w.write_record([
            row.subject_id.as_str(),
            row.contrast.as_str(),
            row.version_id.as_str(),
            row.mask_path.as_str(),
            row.labels_path.as_deref().unwrap_or(""),
            row.site.as_deref().unwrap_or(""),
            row.pathology.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(subject: &str, contrast: &str) -> ManifestRow {
        ManifestRow {
            subject_id: subject.into(),
            contrast: contrast.into(),
            version_id: "v1.0".into(),
            mask_path: format!("masks/{subject}_{contrast}.nii.gz"),
            labels_path: Some(format!("labels/{subject}.nii.gz")),
            site: None,
            pathology: None,
        }
    }

    #[test]
    fn roundtrip_preserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let rows = vec![
            row("sub-01", "T1w"),
            row("sub-01", "T2w"),
            row("sub-02", "T1w"),
        ];
        write_manifest(&path, &rows).unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.rows, rows);
        assert_eq!(m.subjects(), vec!["sub-01".to_string(), "sub-02".into()]);
        assert!(m.mask_path(&m.rows[0]).ends_with("masks/sub-01_T1w.nii.gz"));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        write_manifest(&path, &[row("sub-01", "T1w"), row("sub-01", "T1w")]).unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(ManifestError::DuplicateRow { .. })
        ));
    }
}
