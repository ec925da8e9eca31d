use thiserror::Error;

use dallm_core::augment::AugmentError;
use dallm_core::dataset::DatasetError;
use dallm_core::ingest::IngestError;
use dallm_core::kstore::KstoreError;
use dallm_core::llm::LlmError;
use dallm_core::prompts::PromptError;
use dallm_eval::EvalError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING_ARTIFACT: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;
pub const EXIT_FAILURE_RATE: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing upstream artifact {path}; run `dallm {producer}` first")]
    MissingArtifact { path: String, producer: &'static str },
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("failure rate exceeded: {0}")]
    FailureRate(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::MissingArtifact { .. } => EXIT_MISSING_ARTIFACT,
            CliError::Backend(_) => EXIT_BACKEND,
            CliError::FailureRate(_) => EXIT_FAILURE_RATE,
            CliError::Failed(_) => EXIT_OTHER,
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Backend(other.to_string()),
        }
    }
}

impl From<KstoreError> for CliError {
    fn from(e: KstoreError) -> Self {
        match e {
            KstoreError::Embedding { .. } => CliError::Backend(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Network(_) | IngestError::Http { .. } => CliError::Backend(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::FailureRate { .. } => CliError::FailureRate(e.to_string()),
            AugmentError::Kstore(k) => k.into(),
            e if e.is_backend() => CliError::Backend(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}
