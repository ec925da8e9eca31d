//! Versioned TOML pipeline configuration plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dallm_core::dataset::Lesion;
use dallm_core::ingest::{Scope, SourceKind};
use dallm_core::kstore::ChunkConfig;
use dallm_core::llm::{CacheMode, GenerationConfig, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use dallm_eval::ClassifierSpec;

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub chunking: ChunkConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    pub llm: LlmConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Read documents from `corpus_dir` instead of the web.
    pub offline: bool,
    pub scope: Scope,
    pub sources: Vec<SourceKind>,
    /// Fixture corpus laid out as `<dir>/<lesion>/<file>`.
    pub corpus_dir: Option<String>,
    pub lesions: Vec<Lesion>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            offline: true,
            scope: Scope::TopOne,
            sources: vec![SourceKind::Fixture],
            corpus_dir: None,
            lesions: Lesion::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    /// Evidence chunks per expert question and per patient.
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    LocalHash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub model: Option<String>,
    /// Base URL of an OpenAI-compatible API; the key comes from
    /// `DALLM_EMBED_API_KEY`.
    pub endpoint: Option<String>,
    pub dimension: Option<usize>,
    pub timeout_secs: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::LocalHash,
            model: None,
            endpoint: None,
            dimension: None,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: BackendKind,
    /// Mock script for the scripted backend.
    #[serde(default)]
    pub script: Option<String>,
    /// Overrides `DALLM_LLM_ENDPOINT` for the HTTP backend.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_cache_mode")]
    pub cache_mode: CacheMode,
    /// Defaults to `<output_dir>/cache/llm`.
    #[serde(default)]
    pub cache_dir: Option<String>,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_model() -> String {
    "scripted".into()
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

fn default_cache_mode() -> CacheMode {
    CacheMode::StrictReplay
}

fn default_max_concurrent() -> usize {
    4
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub ablation: bool,
    /// Largest tolerated fraction of patients whose generation failed.
    pub failure_threshold: f64,
    pub workers: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            ablation: false,
            failure_threshold: dallm_core::augment::DEFAULT_FAILURE_THRESHOLD,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub test_fraction: f64,
    pub cv_folds: Option<usize>,
    pub lesions: Vec<Lesion>,
    /// Classifier hyperparameters; DT, RF and GBT defaults when absent.
    pub specs: Option<Vec<ClassifierSpec>>,
    /// Whether `run` includes the existing-vitals experiment.
    pub existing_values: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            test_fraction: 0.2,
            cv_folds: None,
            lesions: Lesion::ALL.to_vec(),
            specs: None,
            existing_values: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: String,
    #[serde(default)]
    pub curation: Option<String>,
    /// Discovery exemplars; the bundled set when absent.
    #[serde(default)]
    pub shots: Option<String>,
    /// Directory of template overrides.
    #[serde(default)]
    pub templates: Option<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_output_dir() -> String {
    "out".into()
}

/// Flags that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub ablation: bool,
    pub offline: bool,
    pub seed: Option<u64>,
    pub cache_mode: Option<CacheMode>,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub sources: Option<Vec<SourceKind>>,
    pub scope: Option<Scope>,
    pub corpus_dir: Option<PathBuf>,
}

/// A validated config with its paths resolved.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: PipelineConfig,
    /// Directory holding the config file; relative paths start here.
    pub base_dir: PathBuf,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub corpus_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<PipelineConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        self.chunking.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.retrieval.k == 0 {
            return bad("retrieval.k must be at least 1".into());
        }
        self.generation()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.llm.max_concurrent == 0 {
            return bad("llm.max_concurrent must be at least 1".into());
        }
        if self.llm.backend == BackendKind::Scripted && self.llm.script.is_none() {
            return bad("llm.script is required for the scripted backend".into());
        }
        if self.source.lesions.is_empty() {
            return bad("source.lesions is empty".into());
        }
        if self.source.sources.is_empty() {
            return bad("source.sources is empty".into());
        }
        if (self.source.offline || self.source.sources.contains(&SourceKind::Fixture))
            && self.source.corpus_dir.is_none()
        {
            return bad("source.corpus_dir is required for offline or fixture ingestion".into());
        }
        if self.embedder.kind == EmbedderKind::Remote {
            if self.source.offline {
                return bad("offline runs cannot use the remote embedder".into());
            }
            if self.embedder.endpoint.is_none() || self.embedder.model.is_none() || self.embedder.dimension.is_none() {
                return bad("remote embedder needs endpoint, model and dimension".into());
            }
        }
        if self.source.offline
            && self.llm.backend == BackendKind::Http
            && self.llm.cache_mode != CacheMode::StrictReplay
        {
            return bad("offline runs can use the HTTP backend only in strict-replay mode".into());
        }
        let t = self.augment.failure_threshold;
        if !(0.0..=1.0).contains(&t) {
            return bad(format!("augment.failure_threshold {t} outside [0, 1]"));
        }
        if self.augment.workers == 0 {
            return bad("augment.workers must be at least 1".into());
        }
        let f = self.eval.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return bad(format!("eval.test_fraction {f} outside (0, 1)"));
        }
        if matches!(self.eval.cv_folds, Some(k) if k < 2) {
            return bad("eval.cv_folds must be at least 2".into());
        }
        if self.eval.lesions.is_empty() {
            return bad("eval.lesions is empty".into());
        }
        for spec in self.eval.specs.iter().flatten() {
            spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            temperature: self.llm.temperature,
            max_tokens: self.llm.max_tokens,
            model: self.llm.model.clone(),
            seed: Some(self.seed),
        }
    }

    pub fn classifier_specs(&self) -> Vec<ClassifierSpec> {
        self.eval
            .specs
            .clone()
            .unwrap_or_else(|| ClassifierSpec::defaults(self.seed))
    }

    /// sha256 over the canonical JSON form, leaving out knobs that change
    /// scheduling or file locations but not results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.augment.workers = 0;
        c.llm.max_concurrent = 0;
        c.llm.cache_mode = CacheMode::StrictReplay;
        c.llm.cache_dir = None;
        c.paths.output_dir = String::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

impl Settings {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = PipelineConfig::parse(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base_dir = if base_dir.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            base_dir
        };

        if overrides.ablation {
            config.augment.ablation = true;
        }
        if overrides.offline {
            config.source.offline = true;
        }
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(mode) = overrides.cache_mode {
            config.llm.cache_mode = mode;
        }
        if let Some(w) = overrides.workers {
            config.augment.workers = w;
        }
        if let Some(s) = &overrides.sources {
            config.source.sources = s.clone();
        }
        if let Some(s) = overrides.scope {
            config.source.scope = s;
        }
        if config.source.offline {
            config.source.sources = vec![SourceKind::Fixture];
        }
        let corpus_dir = match &overrides.corpus_dir {
            Some(p) => {
                config.source.corpus_dir = Some(p.display().to_string());
                Some(p.clone())
            }
            None => config.source.corpus_dir.as_ref().map(|p| base_dir.join(p)),
        };
        config.validate()?;

        let output_dir = overrides
            .output_dir
            .clone()
            .unwrap_or_else(|| base_dir.join(&config.paths.output_dir));
        let cache_dir = match (&overrides.cache_dir, &config.llm.cache_dir) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => base_dir.join(p),
            (None, None) => output_dir.join("cache").join("llm"),
        };
        Ok(Settings {
            config,
            base_dir,
            output_dir,
            cache_dir,
            corpus_dir,
        })
    }

    /// Resolves a path from the config file against its directory.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    pub fn workers(&self) -> usize {
        self.config.augment.workers
    }
}
