//! Model transport: a chat-completion-style request/response interface
//! with a scripted offline mode for tests and an HTTP mode for live runs.

use super::LlmError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;

/// A single completion request. `logprobs` asks for the top token
/// log-probabilities of the first generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    /// Token -> log-probability for the first generated token, when
    /// requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<HashMap<String, f64>>,
}

/// Key identifying an exchange: model, temperature, and prompt hashed
/// together. Recorded-exchange files are keyed by this.
pub fn exchange_key(req: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(req.model.as_bytes());
    hasher.update([0x1f]);
    hasher.update(format!("{:.4}", req.temperature).as_bytes());
    hasher.update([0x1f]);
    hasher.update(req.prompt.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub trait Transport {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError>;
}

impl Transport for Box<dyn Transport> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        (**self).complete(req)
    }
}

/// One line of a recorded-exchange file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub key: String,
    pub response: CompletionResponse,
}

/// Replays recorded exchanges deterministically; unknown prompts are an
/// error naming the missing key.
#[derive(Debug, Clone, Default)]
pub struct ScriptedTransport {
    exchanges: HashMap<String, CompletionResponse>,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load a JSON-lines file of key/response pairs.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let content = std::fs::read_to_string(path)?;
        let mut exchanges = HashMap::new();
        for (lineno, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordedExchange = serde_json::from_str(line).map_err(|e| {
                LlmError::Ingestion(format!(
                    "{}:{}: malformed recorded exchange: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            exchanges.insert(rec.key, rec.response);
        }
        Ok(ScriptedTransport { exchanges })
    }

    /// Record the response to replay for `req`.
    pub fn insert(&mut self, req: &CompletionRequest, response: CompletionResponse) {
        self.exchanges.insert(exchange_key(req), response);
    }

    pub fn insert_text(&mut self, req: &CompletionRequest, text: &str) {
        self.insert(
            req,
            CompletionResponse {
                text: text.to_string(),
                top_logprobs: None,
            },
        );
    }

    /// Record first-token log-probabilities (e.g. digit ratings).
    pub fn insert_logprobs(&mut self, req: &CompletionRequest, pairs: &[(&str, f64)]) {
        self.insert(
            req,
            CompletionResponse {
                text: String::new(),
                top_logprobs: Some(pairs.iter().map(|(t, lp)| (t.to_string(), *lp)).collect()),
            },
        );
    }

    pub fn to_jsonl(&self) -> String {
        let mut keys: Vec<&String> = self.exchanges.keys().collect();
        keys.sort();
        keys.iter()
            .map(|k| {
                serde_json::to_string(&RecordedExchange {
                    key: (*k).clone(),
                    response: self.exchanges[*k].clone(),
                })
                .expect("serializable exchange")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Transport for ScriptedTransport {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let key = exchange_key(req);
        self.exchanges
            .get(&key)
            .cloned()
            .ok_or_else(|| LlmError::Transport(format!("no recorded exchange for key {key}")))
    }
}

/// Live HTTP transport against a completion endpoint. Credentials come
/// from the environment variable named in the config.
#[cfg(feature = "live")]
pub mod live {
    use super::*;

    #[derive(Debug, Clone)]
    pub struct LiveConfig {
        /// Full URL of the completions endpoint.
        pub endpoint: String,
        /// Name of the environment variable holding the API key.
        pub api_key_env: String,
        pub max_retries: u32,
    }

    impl Default for LiveConfig {
        fn default() -> Self {
            LiveConfig {
                endpoint: "https://api.openai.com/v1/completions".to_string(),
                api_key_env: "REPSLATE_API_KEY".to_string(),
                max_retries: 2,
            }
        }
    }

    pub struct LiveTransport {
        config: LiveConfig,
        client: reqwest::blocking::Client,
    }

    impl LiveTransport {
        pub fn new(config: LiveConfig) -> Result<Self, LlmError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(120))
                .build()
                .map_err(|e| LlmError::Transport(e.to_string()))?;
            Ok(LiveTransport { config, client })
        }

        fn api_key(&self) -> Result<String, LlmError> {
            std::env::var(&self.config.api_key_env).map_err(|_| {
                LlmError::Transport(format!(
                    "environment variable {} is not set",
                    self.config.api_key_env
                ))
            })
        }
    }

    impl Transport for LiveTransport {
        fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
            let key = self.api_key()?;
            let body = serde_json::json!({
                "model": req.model,
                "prompt": req.prompt,
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
                "logprobs": req.logprobs,
            });
            let mut last_err = None;
            for _ in 0..=self.config.max_retries {
                let resp = self
                    .client
                    .post(&self.config.endpoint)
                    .bearer_auth(&key)
                    .json(&body)
                    .send();
                match resp {
                    Ok(resp) if resp.status().is_success() => {
                        let value: serde_json::Value = resp
                            .json()
                            .map_err(|e| LlmError::Transport(e.to_string()))?;
                        return parse_completion(&value);
                    }
                    Ok(resp) => {
                        last_err = Some(LlmError::Transport(format!(
                            "endpoint returned status {}",
                            resp.status()
                        )));
                    }
                    Err(e) => last_err = Some(LlmError::Transport(e.to_string())),
                }
            }
            Err(last_err.unwrap_or_else(|| LlmError::Transport("no attempts made".into())))
        }
    }

    fn parse_completion(value: &serde_json::Value) -> Result<CompletionResponse, LlmError> {
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| LlmError::Transport("response has no choices".into()))?;
        let text = choice
            .get("text")
            .and_then(|t| t.as_str())
            .unwrap_or_default()
            .to_string();
        let top_logprobs = choice
            .get("logprobs")
            .and_then(|lp| lp.get("top_logprobs"))
            .and_then(|tl| tl.get(0))
            .and_then(|first| first.as_object())
            .map(|map| {
                map.iter()
                    .filter_map(|(k, v)| v.as_f64().map(|f| (k.clone(), f)))
                    .collect()
            });
        Ok(CompletionResponse { text, top_logprobs })
    }
}
