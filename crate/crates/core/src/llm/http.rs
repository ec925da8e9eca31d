use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CacheStatus, CompletionBackend, GenerationConfig, LlmError};
use crate::retry::{Attempt, RetryPolicy};

/// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
pub const ENDPOINT_ENV: &str = "DALLM_LLM_ENDPOINT";
pub const API_KEY_ENV: &str = "DALLM_LLM_API_KEY";

/// Chat-completions client; local open-weight servers speaking the same
/// shape attach here too.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::NotConfigured(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: endpoint.trim_end_matches('/').to_owned(),
            api_key,
            retry: RetryPolicy::default(),
        })
    }

    /// Reads the endpoint and key from the environment.
    pub fn from_env(timeout: Duration) -> Result<Self, LlmError> {
        let endpoint =
            std::env::var(ENDPOINT_ENV).map_err(|_| LlmError::NotConfigured(format!("{ENDPOINT_ENV} is not set")))?;
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(&endpoint, key, timeout)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn attempt(&self, prompt: &str, config: &GenerationConfig) -> Result<String, Attempt<LlmError>> {
        let body = ChatRequest {
            model: &config.model,
            messages: [Message {
                role: "user",
                content: prompt,
            }],
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            seed: config.seed,
        };
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.endpoint))
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            Attempt::Retry(LlmError::Remote {
                retryable: true,
                message: e.to_string(),
            })
        })?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            let detail = resp.text().unwrap_or_default();
            let err = LlmError::Remote {
                retryable,
                message: format!("http {status}: {}", detail.chars().take(200).collect::<String>()),
            };
            return Err(if retryable {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| {
            Attempt::Fatal(LlmError::Remote {
                retryable: false,
                message: format!("unexpected response shape: {e}"),
            })
        })?;
        interpret(parsed, config.max_tokens).map_err(Attempt::Fatal)
    }
}

fn interpret(resp: ChatResponse, max_tokens: u32) -> Result<String, LlmError> {
    let choice = resp.choices.into_iter().next().ok_or_else(|| LlmError::Remote {
        retryable: false,
        message: "response had no choices".into(),
    })?;
    if choice.finish_reason.as_deref() == Some("length") {
        return Err(LlmError::TokenLimitExceeded { max_tokens });
    }
    Ok(choice.message.content.unwrap_or_default())
}

impl CompletionBackend for HttpBackend {
    fn descriptor(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn status(&self) -> CacheStatus {
        CacheStatus::Live
    }

    fn generate(&self, prompt: &str, config: &GenerationConfig, _fingerprint: &str) -> Result<String, LlmError> {
        self.retry.run(|_| self.attempt(prompt, config))
    }
}
