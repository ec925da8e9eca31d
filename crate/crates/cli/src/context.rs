//! Shared wiring for commands: resolved settings, inputs, backends and
//! manifest bookkeeping.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use dallm_core::dataset::{load_dataset, DataFormat, Dataset};
use dallm_core::kstore::{Embedder, LocalHashEmbedder, RemoteEmbedder, VectorIndex};
use dallm_core::llm::{
    CacheMode, CacheStatus, CompletionBackend, GenerationConfig, HttpBackend, LlmClient, LlmError, ReplayCache,
    ScriptedBackend, API_KEY_ENV, ENDPOINT_ENV,
};
use dallm_core::prompts::TemplateSet;

use crate::config::{BackendKind, EmbedderKind, Settings};
use crate::error::CliError;
use crate::manifest::{hash_path, to_pretty_json, write_atomic, FileHash, Manifest};

pub const EMBED_API_KEY_ENV: &str = "DALLM_EMBED_API_KEY";

/// Stand-in for an HTTP backend during strict replay, where every
/// completion must come from the cache and no credentials are read.
struct ReplayOnly {
    descriptor: String,
}

impl CompletionBackend for ReplayOnly {
    fn descriptor(&self) -> String {
        self.descriptor.clone()
    }

    fn status(&self) -> CacheStatus {
        CacheStatus::Live
    }

    fn generate(&self, _: &str, _: &GenerationConfig, fingerprint: &str) -> Result<String, LlmError> {
        Err(LlmError::NotConfigured(format!(
            "strict replay never calls the backend (fingerprint {fingerprint})"
        )))
    }
}

pub struct Context {
    pub settings: Settings,
}

impl Context {
    pub fn new(settings: Settings) -> Context {
        Context { settings }
    }

    pub fn manifest(&self, command: &str) -> Manifest {
        let c = &self.settings.config;
        Manifest::new(command, c.hash(), c.seed)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.settings.out(name)
    }

    /// A file named by the config; absence is a config error.
    pub fn config_input(&self, m: &mut Manifest, key: &str, path: &Path) -> Result<(), CliError> {
        if !path.exists() {
            return Err(CliError::Config(format!("{key} not found: {}", path.display())));
        }
        m.inputs.push(FileHash {
            path: format!("config:{key}"),
            sha256: hash_path(path)?,
        });
        Ok(())
    }

    /// An artifact produced by an earlier command.
    pub fn artifact_input(&self, m: &mut Manifest, name: &str, producer: &'static str) -> Result<PathBuf, CliError> {
        let path = self.out(name);
        if !path.exists() {
            return Err(CliError::MissingArtifact {
                path: name.to_owned(),
                producer,
            });
        }
        m.inputs.push(FileHash {
            path: name.to_owned(),
            sha256: hash_path(&path)?,
        });
        Ok(path)
    }

    pub fn record_output(&self, m: &mut Manifest, name: &str) -> Result<(), CliError> {
        m.outputs.push(FileHash {
            path: name.to_owned(),
            sha256: hash_path(&self.out(name))?,
        });
        Ok(())
    }

    pub fn write_output(&self, m: &mut Manifest, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.out(name), bytes)?;
        self.record_output(m, name)
    }

    pub fn finish(&self, m: &Manifest) -> Result<(), CliError> {
        write_atomic(&self.out(&Manifest::file_name(&m.command)), &to_pretty_json(m)?)
    }

    pub fn dataset(&self, m: &mut Manifest) -> Result<Dataset, CliError> {
        let path = self.settings.resolve(&self.settings.config.paths.dataset);
        self.config_input(m, "dataset", &path)?;
        let outcome = load_dataset(&path, DataFormat::from_path(&path))?;
        if outcome.warning_count() > 0 {
            let msg = format!("dataset: {} unparseable cells left missing", outcome.warning_count());
            log::warn!("{msg}");
            m.warnings.push(msg);
        }
        Ok(outcome.dataset)
    }

    pub fn templates(&self, m: &mut Manifest) -> Result<TemplateSet, CliError> {
        let set = match &self.settings.config.paths.templates {
            Some(dir) => {
                let dir = self.settings.resolve(dir);
                self.config_input(m, "templates", &dir)?;
                TemplateSet::load_dir(&dir).map_err(|e| CliError::Config(format!("templates: {e}")))?
            }
            None => TemplateSet::builtin(),
        };
        m.stat("template_version", set.version());
        Ok(set)
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>, CliError> {
        let e = &self.settings.config.embedder;
        match e.kind {
            EmbedderKind::LocalHash => Ok(Box::new(LocalHashEmbedder::new())),
            EmbedderKind::Remote => {
                let key = std::env::var(EMBED_API_KEY_ENV).ok().filter(|k| !k.is_empty());
                let remote = RemoteEmbedder::new(
                    e.endpoint.as_deref().expect("validated"),
                    key,
                    e.model.as_deref().expect("validated"),
                    e.dimension.expect("validated"),
                    Duration::from_secs(e.timeout_secs),
                )?;
                Ok(Box::new(remote))
            }
        }
    }

    /// Loads the index and checks it was built by the configured embedder.
    pub fn index(&self, m: &mut Manifest, embedder: &dyn Embedder) -> Result<VectorIndex, CliError> {
        let path = self.artifact_input(m, "index.json", "index")?;
        let index = VectorIndex::load(&path)?;
        if index.descriptor() != &embedder.descriptor() {
            return Err(CliError::Config(format!(
                "index was built with embedder {:?}, config selects {:?}",
                index.descriptor(),
                embedder.descriptor()
            )));
        }
        Ok(index)
    }

    pub fn client(&self, m: &mut Manifest) -> Result<LlmClient, CliError> {
        let llm = &self.settings.config.llm;
        let mode = llm.cache_mode;
        let backend: Arc<dyn CompletionBackend> = match llm.backend {
            BackendKind::Scripted => {
                let path = self.settings.resolve(llm.script.as_deref().expect("validated"));
                self.config_input(m, "script", &path)?;
                let backend = ScriptedBackend::load(&path)
                    .map_err(|e| CliError::Config(format!("mock script {}: {e}", path.display())))?;
                Arc::new(backend)
            }
            BackendKind::Http => {
                let endpoint = llm.endpoint.clone().or_else(|| std::env::var(ENDPOINT_ENV).ok());
                if mode == CacheMode::StrictReplay {
                    let endpoint = endpoint.unwrap_or_else(|| "unconfigured".into());
                    Arc::new(ReplayOnly {
                        descriptor: format!("http:{}", endpoint.trim_end_matches('/')),
                    })
                } else {
                    let endpoint = endpoint.ok_or_else(|| {
                        CliError::Config(format!("HTTP backend needs llm.endpoint or {ENDPOINT_ENV}"))
                    })?;
                    let key = std::env::var(API_KEY_ENV)
                        .ok()
                        .filter(|k| !k.is_empty())
                        .ok_or_else(|| {
                            CliError::Config(format!("{mode} mode with the HTTP backend needs {API_KEY_ENV}"))
                        })?;
                    Arc::new(HttpBackend::new(
                        &endpoint,
                        Some(key),
                        Duration::from_secs(llm.timeout_secs),
                    )?)
                }
            }
        };
        let cache = match mode {
            CacheMode::Live => None,
            _ => Some(ReplayCache::open(&self.settings.cache_dir)?),
        };
        m.backend = Some(backend.descriptor());
        m.cache_mode = Some(mode.to_string());
        Ok(LlmClient::new(backend, cache, mode, llm.max_concurrent)?)
    }

    pub fn generation(&self) -> GenerationConfig {
        self.settings.config.generation()
    }
}
