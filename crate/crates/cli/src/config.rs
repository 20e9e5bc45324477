//! Run configuration: levels, metrics, contrast set, gate policy, and
//! report options, loadable from TOML with overridable defaults.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cordmetrics_core::drift::GatePolicy;
use cordmetrics_core::geometry::{levels_tag, Metric};

use crate::WorkflowError;

/// The six default contrasts of the frozen evaluation set.
pub const DEFAULT_CONTRASTS: [&str; 6] = ["T1w", "T2w", "T2star", "MTon", "GRET1w", "DWI"];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Vertebral levels aggregated into the level-range statistics.
    pub levels: Vec<u32>,
    /// Metrics computed and recorded per slice and per level range.
    pub metrics: Vec<Metric>,
    /// Contrast set the drift statistics run over.
    pub contrasts: Vec<String>,
    /// Soft-mask binarization threshold.
    pub binarize_threshold: f64,
    pub gate: GatePolicy,
    pub report: ReportConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Contrast pair drawn in the agreement scatter plot.
    pub agreement_pair: [String; 2],
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            agreement_pair: ["T1w".into(), "T2w".into()],
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            levels: vec![2, 3],
            metrics: Metric::ALL.to_vec(),
            contrasts: DEFAULT_CONTRASTS.iter().map(|c| c.to_string()).collect(),
            binarize_threshold: 0.5,
            gate: GatePolicy::default(),
            report: ReportConfig::default(),
        }
    }
}

impl RunConfig {
    /// Loads a TOML config, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, WorkflowError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| WorkflowError::BadConfig(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.levels.is_empty() {
            return Err(WorkflowError::BadConfig(
                "level set must be non-empty".into(),
            ));
        }
        if self.metrics.is_empty() {
            return Err(WorkflowError::BadConfig(
                "metric list must be non-empty".into(),
            ));
        }
        if self.contrasts.is_empty() {
            return Err(WorkflowError::BadConfig(
                "contrast set must be non-empty".into(),
            ));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(WorkflowError::BadConfig(format!(
                "binarize_threshold {} outside (0, 1)",
                self.binarize_threshold
            )));
        }
        Ok(())
    }

    pub fn level_set(&self) -> BTreeSet<u32> {
        self.levels.iter().copied().collect()
    }

    /// Canonical tag the level aggregates are keyed under (e.g. "C2-C3").
    pub fn level_key(&self) -> String {
        levels_tag(&self.level_set())
    }

    pub fn contrast_set(&self) -> BTreeSet<String> {
        self.contrasts.iter().cloned().collect()
    }

    /// Digest of the effective analytic configuration. Deliberately covers
    /// only analysis-relevant fields (not output paths or timestamps) so
    /// identical analyses stamp identical digests.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Shard selector `k/n`: this run processes manifest rows whose index is
/// congruent to `k` modulo `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shard {
    pub index: usize,
    pub count: usize,
}

impl Default for Shard {
    fn default() -> Self {
        Shard { index: 0, count: 1 }
    }
}

impl std::fmt::Display for Shard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.index, self.count)
    }
}

impl std::str::FromStr for Shard {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (k, n) = s
            .split_once('/')
            .ok_or_else(|| format!("shard '{s}' is not of the form k/n"))?;
        let index: usize = k.parse().map_err(|_| format!("bad shard index '{k}'"))?;
        let count: usize = n.parse().map_err(|_| format!("bad shard count '{n}'"))?;
        if count == 0 || index >= count {
            return Err(format!("shard {index}/{count} requires 0 <= k < n"));
        }
        Ok(Shard { index, count })
    }
}
