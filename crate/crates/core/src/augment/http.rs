//! Paraphrase provider that talks to a text-generation service.
//!
//! Wire protocol: `POST {endpoint}/paraphrase` with JSON body
//! `{"prompt": string, "temperature": number, "seed": integer}`, answered by
//! `{"text": string}`. A bearer token is sent when configured.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ParaphraseProvider, ParaphraseRequest};
use crate::error::ProviderError;

pub const URL_ENV: &str = "CONFIT_PROVIDER_URL";
pub const TOKEN_ENV: &str = "CONFIT_PROVIDER_TOKEN";

/// Bounded retries with exponential backoff: attempt `i` (0-based) that
/// fails waits `base_delay * 2^i` before the next one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

#[derive(Serialize)]
struct Payload<'a> {
    prompt: &'a str,
    temperature: f64,
    seed: u64,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
}

pub struct HttpProvider {
    url: String,
    token: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(
        endpoint: &str,
        token: Option<String>,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            url: format!("{}/paraphrase", endpoint.trim_end_matches('/')),
            token: token.filter(|t| !t.is_empty()),
            retry,
            agent,
        }
    }

    /// Endpoint from `CONFIT_PROVIDER_URL` unless given, token from
    /// `CONFIT_PROVIDER_TOKEN`.
    pub fn from_env(endpoint: Option<&str>) -> Result<Self, ProviderError> {
        let endpoint = match endpoint {
            Some(e) => e.to_string(),
            None => std::env::var(URL_ENV).map_err(|_| {
                ProviderError::Config(format!("no provider URL given and {URL_ENV} is unset"))
            })?,
        };
        let token = std::env::var(TOKEN_ENV).ok();
        Ok(Self::new(
            &endpoint,
            token,
            RetryPolicy::default(),
            Duration::from_secs(60),
        ))
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &Payload<'_>) -> Result<String, Attempt> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Attempt::Retry(format!("HTTP status {status}")));
        }
        let reply: Reply = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(ProviderError::Malformed(e.to_string())))?;
        let text = reply.text.trim();
        if text.is_empty() {
            return Err(Attempt::Fatal(ProviderError::EmptyResponse));
        }
        Ok(text.to_string())
    }
}

enum Attempt {
    Retry(String),
    Fatal(ProviderError),
}

impl ParaphraseProvider for HttpProvider {
    fn paraphrase(&self, req: &ParaphraseRequest) -> Result<String, ProviderError> {
        let prompt = req.prompt();
        let body = Payload {
            prompt: &prompt,
            temperature: req.temperature,
            seed: req.seed,
        };
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if attempt >= self.retry.max_retries {
                        return Err(ProviderError::Exhausted {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    let wait = self.retry.delay(attempt);
                    log::warn!("paraphrase request failed ({message}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }
}
