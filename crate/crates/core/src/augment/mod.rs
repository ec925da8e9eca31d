//! Pipeline orchestration: expert knowledge, feature discovery, per-patient
//! value generation, and the Gaussian baseline.

mod ack;
mod baseline;
mod curation;
mod discover;
mod generate;

use thiserror::Error;

use crate::dataset::{DatasetError, Lesion};
use crate::kstore::KstoreError;
use crate::llm::LlmError;
use crate::prompts::PromptError;

pub use ack::{build_ack, AckConfig, AckMeta, AugmentedClinicalKnowledge};
pub use baseline::{gaussian_baseline, BaselineOutcome};
pub use curation::{apply_expert_curation, load_curation, CurationEntry};
pub use discover::{discover_features, Discovery, DiscoveryRecord};
pub use generate::{
    generate_existing_values, generate_values, GenerateConfig, GenerationOutcome, PatientFailure, PromptLogEntry,
    DEFAULT_FAILURE_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("index has no chunks for lesion `{0}`")]
    EmptyPartition(Lesion),
    #[error("{context}: {source}")]
    Llm {
        context: String,
        #[source]
        source: LlmError,
    },
    #[error("{context}: {source}")]
    Prompt {
        context: String,
        #[source]
        source: PromptError,
    },
    #[error(transparent)]
    Kstore(#[from] KstoreError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("no features discovered")]
    NoFeatures,
    #[error("curation entry {index}: {message}")]
    Curation { index: usize, message: String },
    #[error("{failed} of {total} patients failed, above the {threshold} failure-rate threshold")]
    FailureRate {
        failed: usize,
        total: usize,
        threshold: f64,
        outcome: Box<GenerationOutcome>,
    },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AugmentError {
    /// True when the failure came from the completion backend or cache.
    pub fn is_backend(&self) -> bool {
        matches!(self, AugmentError::Llm { .. })
    }
}

pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, AugmentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| AugmentError::Pool(e.to_string()))
}
