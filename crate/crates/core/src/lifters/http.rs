//! JSON-over-HTTP adapter for an LLM inference endpoint.
//!
//! Request body: `{"prompt": str, "temperature": num, "max_tokens": int}`.
//! Response body: `{"completion": str}`. The completion is used verbatim as
//! the lifted source.

use std::env;
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Health, LiftRequest, LiftResult};
use crate::toolchain::TargetLanguage;

pub const DEFAULT_PROMPT: &str = "Disassemble this x86-64 assembly to LLVM-IR:\n\n<code>{assembly}</code>";

fn default_prompt() -> String {
    DEFAULT_PROMPT.to_string()
}
fn default_temperature() -> f64 {
    1.0
}
fn default_max_tokens() -> u32 {
    8192
}
fn default_retries() -> u32 {
    3
}
fn default_language() -> TargetLanguage {
    TargetLanguage::LlvmIr
}
fn default_auth_header() -> String {
    "Authorization".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpLlmConfig {
    pub endpoint: String,
    /// Must contain `{assembly}`.
    #[serde(default = "default_prompt")]
    pub prompt_template: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Environment variable holding the bearer token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    /// Transport-level retries (connection failures, 429 and 5xx).
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_language")]
    pub output_language: TargetLanguage,
}

impl HttpLlmConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpLlmConfig {
            endpoint: endpoint.into(),
            prompt_template: default_prompt(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            auth_env: None,
            auth_header: default_auth_header(),
            max_retries: default_retries(),
            output_language: default_language(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.endpoint.starts_with("http://") && !self.endpoint.starts_with("https://") {
            return Err("endpoint: must be an http(s) URL".into());
        }
        if !self.prompt_template.contains("{assembly}") {
            return Err("prompt_template: must contain {assembly}".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err("temperature: must be a non-negative number".into());
        }
        Ok(())
    }

    pub fn render_prompt(&self, assembly: &str) -> String {
        self.prompt_template.replace("{assembly}", assembly)
    }
}

#[derive(Debug, Serialize)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
pub struct CompletionResponse {
    pub completion: String,
}

enum Failure {
    /// Worth retrying.
    Transport(String),
    Fatal(String),
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn request_once(agent: &ureq::Agent, cfg: &HttpLlmConfig, body: &CompletionRequest<'_>) -> Result<String, Failure> {
    let mut req = agent.post(&cfg.endpoint);
    if let Some(var) = &cfg.auth_env {
        match env::var(var) {
            Ok(token) => req = req.header(cfg.auth_header.as_str(), &format!("Bearer {token}")),
            Err(_) => return Err(Failure::Fatal(format!("auth variable {var} is not set"))),
        }
    }
    let mut resp = req.send_json(body).map_err(|e| Failure::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Err(Failure::Transport(format!("endpoint returned HTTP {status}")));
    }
    if !(200..300).contains(&status) {
        return Err(Failure::Fatal(format!("endpoint returned HTTP {status}")));
    }
    resp.body_mut()
        .read_json::<CompletionResponse>()
        .map(|r| r.completion)
        .map_err(|e| Failure::Fatal(format!("malformed response: {e}")))
}

fn complete(cfg: &HttpLlmConfig, timeout: Duration, body: &CompletionRequest<'_>) -> Result<String, String> {
    let agent = agent(timeout);
    let mut attempt = 0;
    loop {
        match request_once(&agent, cfg, body) {
            Ok(text) => return Ok(text),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Transport(e)) if attempt < cfg.max_retries => {
                attempt += 1;
                warn!("{}: {e}; retry {attempt}/{}", cfg.endpoint, cfg.max_retries);
                thread::sleep(Duration::from_millis(100 << attempt.min(6)));
            }
            Err(Failure::Transport(e)) => return Err(format!("{e} (after {attempt} retries)")),
        }
    }
}

pub fn lift(cfg: &HttpLlmConfig, timeout: Duration, request: &LiftRequest) -> LiftResult {
    let prompt = cfg.render_prompt(&request.original_assembly);
    let body = CompletionRequest {
        prompt: &prompt,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    };
    match complete(cfg, timeout, &body) {
        Ok(text) => LiftResult::lifted(text, cfg.output_language),
        Err(e) => LiftResult::error(e),
    }
}

/// Sends a one-token request; any successful, well-formed reply is healthy.
pub fn health_check(cfg: &HttpLlmConfig, timeout: Duration) -> Health {
    let body = CompletionRequest {
        prompt: "ping",
        temperature: cfg.temperature,
        max_tokens: 1,
    };
    let probe = HttpLlmConfig {
        max_retries: 0,
        ..cfg.clone()
    };
    match complete(&probe, timeout.min(Duration::from_secs(30)), &body) {
        Ok(_) => Health::Ok,
        Err(e) => Health::Unavailable(e),
    }
}
