//! One module per pipeline command. Each writes fixed-name artifacts under
//! the output directory plus a `<command>.manifest.json`.

pub mod ack;
pub mod augment;
pub mod baseline;
pub mod discover;
pub mod eval;
pub mod existing;
pub mod index;
pub mod ingest;
pub mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use dallm_core::augment::{DiscoveryRecord, PatientFailure, PromptLogEntry};
use dallm_core::dataset::{FeatureDescriptor, ValueMap};

use crate::error::CliError;

pub const CORPUS: &str = "corpus";
pub const INDEX: &str = "index.json";
pub const ACK: &str = "ack.json";
pub const FEATURES: &str = "features.json";
pub const AUGMENTED: &str = "augmented.csv";
pub const AUGMENTED_ABLATION: &str = "augmented_ablation.csv";
pub const PROMPT_LOG: &str = "prompt_log.jsonl";
pub const PROMPT_LOG_ABLATION: &str = "prompt_log_ablation.jsonl";
pub const BASELINE: &str = "baseline_values.json";
pub const EXISTING: &str = "existing_values.json";
pub const EXISTING_LOG: &str = "existing_prompt_log.jsonl";
pub const EVAL: &str = "eval.json";

pub const BASELINE_GENERATOR: &str = "Gaussian (baseline)";

/// Output of `discover`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesArtifact {
    /// Number of discovered features.
    pub m: usize,
    pub discovered: Vec<FeatureDescriptor>,
    pub records: Vec<DiscoveryRecord>,
    /// Discovered list after expert curation, when a curation file is set.
    pub curated: Option<Vec<FeatureDescriptor>>,
}

impl FeaturesArtifact {
    /// Features values are generated for: the discovered list followed by
    /// curated names it lacks.
    pub fn generation_schema(&self) -> Vec<FeatureDescriptor> {
        let mut out = self.discovered.clone();
        for d in self.curated.iter().flatten() {
            if !out.iter().any(|o| o.name == d.name) {
                out.push(d.clone());
            }
        }
        out
    }
}

/// Generated vitals from `baseline` or `existing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuesArtifact {
    pub generator: String,
    pub features: Vec<String>,
    pub values: ValueMap,
    #[serde(default)]
    pub skipped: Vec<String>,
    #[serde(default)]
    pub coverage: BTreeMap<String, f64>,
    #[serde(default)]
    pub failures: Vec<PatientFailure>,
    #[serde(default)]
    pub unparsed: usize,
}

/// One JSON object per line.
pub fn prompt_log_bytes(log: &[PromptLogEntry]) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    for entry in log {
        serde_json::to_writer(&mut out, entry)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn read_prompt_log(bytes: &[u8]) -> Result<Vec<PromptLogEntry>, CliError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::Failed(e.to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(CliError::from))
        .collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}
