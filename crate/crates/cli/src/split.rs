//! Subject-wise train/test splitting, deterministic under a seed.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::WorkflowError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Partition {
    Train,
    Test,
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Partition::Train => "TRAIN",
            Partition::Test => "TEST",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignments: BTreeMap<String, Partition>,
    pub ratio: f64,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn count(&self, partition: Partition) -> usize {
        self.assignments
            .values()
            .filter(|&&p| p == partition)
            .count()
    }
}

/// Splits subjects into TRAIN/TEST with `round(ratio * n)` subjects in
/// TEST. The split is subject-wise: every scan of a subject follows its
/// subject. Shuffling runs on a ChaCha8 stream seeded by `seed`, so the
/// assignment is a pure function of (subjects, ratio, seed).
pub fn split_subjects(
    subjects: &[String],
    ratio: f64,
    seed: u64,
) -> Result<SplitAssignment, WorkflowError> {
    let mut unique: Vec<String> = subjects.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() < 2 {
        return Err(WorkflowError::TooFewSubjects {
            found: unique.len(),
        });
    }
    if !(0.0..1.0).contains(&ratio) || ratio <= 0.0 {
        return Err(WorkflowError::BadRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = unique.clone();
    shuffled.shuffle(&mut rng);
    let n_test = (ratio * shuffled.len() as f64).round() as usize;
    let mut assignments = BTreeMap::new();
    for (idx, subject) in shuffled.into_iter().enumerate() {
        let partition = if idx < n_test {
            Partition::Test
        } else {
            Partition::Train
        };
        assignments.insert(subject, partition);
    }
    Ok(SplitAssignment {
        assignments,
        ratio,
        seed,
    })
}

/// Writes `split.csv` (subject_id, partition) and `split.json` (full
/// assignment with ratio and seed) under `out_dir`.
pub fn write_split(out_dir: &Path, split: &SplitAssignment) -> Result<(), WorkflowError> {
    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("split.csv"))?;
    w.write_record(["subject_id", "partition"])?;
    for (subject, partition) in &split.assignments {
        w.write_record([subject.as_str(), &partition.to_string()])?;
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(split)?;
    std::fs::write(out_dir.join("split.json"), json + "\n")?;
    Ok(())
}
