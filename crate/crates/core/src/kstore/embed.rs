use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KstoreError;
use crate::retry::{Attempt, RetryPolicy};

pub const LOCAL_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderDescriptor {
    /// `local-hash` or `remote`.
    pub kind: String,
    pub model: String,
    pub dimension: usize,
}

pub trait Embedder: Send + Sync {
    fn descriptor(&self) -> EmbedderDescriptor;

    fn embed(&self, text: &str) -> Result<Vec<f32>, KstoreError>;
}

/// Lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hash bucket of a (lowercased) token in a `dimension`-wide vector.
pub fn token_bucket(token: &str, dimension: usize) -> usize {
    let digest = Sha256::digest(token.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(head) % dimension as u64) as usize
}

/// Hashed bag of words with `1 + ln(tf)` weights, L2-normalized.
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    dimension: usize,
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        LocalHashEmbedder {
            dimension: LOCAL_DIMENSION,
        }
    }
}

impl LocalHashEmbedder {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Embedder for LocalHashEmbedder {
    fn descriptor(&self) -> EmbedderDescriptor {
        EmbedderDescriptor {
            kind: "local-hash".into(),
            model: "sha256-bow-sublinear".into(),
            dimension: self.dimension,
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, KstoreError> {
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokenize(text) {
            *tf.entry(token).or_default() += 1;
        }
        if tf.is_empty() {
            return Err(KstoreError::EmptyText);
        }
        let mut acc = vec![0.0f64; self.dimension];
        for (token, count) in &tf {
            acc[token_bucket(token, self.dimension)] += 1.0 + f64::from(*count).ln();
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(acc.into_iter().map(|x| (x / norm) as f32).collect())
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    dimension: usize,
    retry: RetryPolicy,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f32>,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        model: &str,
        dimension: usize,
        timeout: Duration,
    ) -> Result<Self, KstoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| KstoreError::Embedding {
                retryable: false,
                message: e.to_string(),
            })?;
        Ok(RemoteEmbedder {
            client,
            endpoint: endpoint.trim_end_matches('/').to_owned(),
            api_key,
            model: model.to_owned(),
            dimension,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn attempt(&self, text: &str) -> Result<Vec<f32>, Attempt<KstoreError>> {
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.endpoint))
            .json(&EmbeddingRequest {
                model: &self.model,
                input: text,
            });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            Attempt::Retry(KstoreError::Embedding {
                retryable: true,
                message: e.to_string(),
            })
        })?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            let err = KstoreError::Embedding {
                retryable,
                message: format!("http {status}"),
            };
            return Err(if retryable {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let body: EmbeddingResponse = resp.json().map_err(|e| {
            Attempt::Fatal(KstoreError::Embedding {
                retryable: false,
                message: format!("bad response: {e}"),
            })
        })?;
        let vector = body.data.into_iter().next().map(|d| d.embedding).ok_or_else(|| {
            Attempt::Fatal(KstoreError::Embedding {
                retryable: false,
                message: "response contained no embedding".into(),
            })
        })?;
        if vector.len() != self.dimension {
            return Err(Attempt::Fatal(KstoreError::DimensionMismatch {
                expected: self.dimension,
                got: vector.len(),
            }));
        }
        Ok(vector)
    }
}

impl Embedder for RemoteEmbedder {
    fn descriptor(&self) -> EmbedderDescriptor {
        EmbedderDescriptor {
            kind: "remote".into(),
            model: self.model.clone(),
            dimension: self.dimension,
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, KstoreError> {
        if text.trim().is_empty() {
            return Err(KstoreError::EmptyText);
        }
        self.retry.run(|_| self.attempt(text))
    }
}
