//! Append-only drift store: newline-delimited JSON records plus a versions
//! manifest.
//!
//! Appends require single-writer discipline and land via atomic file
//! replacement; duplicate record keys are a hard error so a re-run can
//! never silently overwrite earlier morphometrics.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DriftError, ModelVersion, MorphometricRecord, RecordKey};

pub const RECORDS_FILE: &str = "records.ndjson";
pub const VERSIONS_FILE: &str = "versions.json";

/// Handle to a drift store directory.
#[derive(Debug, Clone)]
pub struct DriftStore {
    dir: PathBuf,
}

impl DriftStore {
    /// Opens (creating if needed) a store directory.
    pub fn open(dir: &Path) -> Result<Self, DriftError> {
        std::fs::create_dir_all(dir)?;
        Ok(DriftStore {
            dir: dir.to_path_buf(),
        })
    }

    pub fn records_path(&self) -> PathBuf {
        self.dir.join(RECORDS_FILE)
    }

    pub fn versions_path(&self) -> PathBuf {
        self.dir.join(VERSIONS_FILE)
    }

    pub fn load_records(&self) -> Result<Vec<MorphometricRecord>, DriftError> {
        let path = self.records_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let record: MorphometricRecord = serde_json::from_str(line)?;
            record.validate()?;
            records.push(record);
        }
        Ok(records)
    }

    pub fn load_versions(&self) -> Result<Vec<ModelVersion>, DriftError> {
        let path = self.versions_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Appends records, rejecting any key already present in the ledger or
    /// duplicated within the batch. The whole file is rewritten to a
    /// sibling temporary and renamed into place.
    pub fn append_records(&self, new: &[MorphometricRecord]) -> Result<usize, DriftError> {
        let existing = self.load_records()?;
        let mut keys: BTreeSet<RecordKey> = existing.iter().map(|r| r.key()).collect();
        for record in new {
            record.validate()?;
            if !keys.insert(record.key()) {
                return Err(DriftError::DuplicateRecord { key: record.key() });
            }
        }
        let mut buf = Vec::new();
        for record in existing.iter().chain(new) {
            serde_json::to_writer(&mut buf, record)?;
            buf.push(b'\n');
        }
        self.replace_atomically(&self.records_path(), &buf)?;
        Ok(new.len())
    }

    /// Registers a model version. Re-registering the identical version is a
    /// no-op; the same id with different fields is rejected.
    pub fn register_version(&self, version: ModelVersion) -> Result<(), DriftError> {
        if version.version_id.is_empty() {
            return Err(DriftError::EmptyVersionId);
        }
        let mut versions = self.load_versions()?;
        if let Some(existing) = versions.iter().find(|v| v.version_id == version.version_id) {
            if *existing == version {
                return Ok(());
            }
            return Err(DriftError::VersionConflict {
                version_id: version.version_id,
            });
        }
        versions.push(version);
        versions.sort_by(|a, b| a.version_id.cmp(&b.version_id));
        let mut buf = serde_json::to_vec_pretty(&versions)?;
        buf.push(b'\n');
        self.replace_atomically(&self.versions_path(), &buf)?;
        Ok(())
    }

    fn replace_atomically(&self, path: &Path, bytes: &[u8]) -> Result<(), DriftError> {
        let tmp = path.with_extension("tmp-append");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;

    fn record(subject: &str, value: f64) -> MorphometricRecord {
        MorphometricRecord {
            subject_id: subject.into(),
            contrast: "T2w".into(),
            version_id: "v1.0".into(),
            metric: Metric::Area,
            level_key: "C2-C3".into(),
            value,
        }
    }

    #[test]
    fn append_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let store = DriftStore::open(dir.path()).unwrap();
        store
            .append_records(&[record("sub-01", 70.0), record("sub-02", 72.5)])
            .unwrap();
        store.append_records(&[record("sub-03", 68.0)]).unwrap();
        let records = store.load_records().unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].subject_id, "sub-03");
    }

    #[test]
    fn duplicate_key_is_a_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = DriftStore::open(dir.path()).unwrap();
        store.append_records(&[record("sub-01", 70.0)]).unwrap();
        let err = store.append_records(&[record("sub-01", 71.0)]).unwrap_err();
        assert!(matches!(err, DriftError::DuplicateRecord { .. }));
        // The failed append must not have changed the ledger.
        assert_eq!(store.load_records().unwrap().len(), 1);
    }

    #[test]
    fn non_finite_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = DriftStore::open(dir.path()).unwrap();
        let err = store
            .append_records(&[record("sub-01", f64::NAN)])
            .unwrap_err();
        assert!(matches!(err, DriftError::NonFiniteValue { .. }));
    }

    #[test]
    fn version_registration_is_idempotent_but_conflicts_fail() {
        let dir = tempfile::tempdir().unwrap();
        let store = DriftStore::open(dir.path()).unwrap();
        let v = ModelVersion {
            version_id: "v1.0".into(),
            source_url: None,
            created: "1970-01-01".into(),
        };
        store.register_version(v.clone()).unwrap();
        store.register_version(v.clone()).unwrap();
        assert_eq!(store.load_versions().unwrap().len(), 1);
        let conflicting = ModelVersion {
            source_url: Some("https://example.org/v1".into()),
            ..v
        };
        assert!(matches!(
            store.register_version(conflicting),
            Err(DriftError::VersionConflict { .. })
        ));
    }
}
