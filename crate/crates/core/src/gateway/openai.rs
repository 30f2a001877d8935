//! Client for servers speaking the OpenAI chat-completions wire format.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatGateway, ChatRequest, ChatResponse, GatewayError, Message, TokenLogprob};

/// Delays slept before each retry; one initial attempt plus one retry per
/// delay.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: vec![Duration::from_millis(500), Duration::from_secs(1), Duration::from_secs(2)],
        }
    }
}

impl RetryPolicy {
    pub fn max_attempts(&self) -> u32 {
        self.delays.len() as u32 + 1
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    logprobs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_logprobs: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Option<Vec<WireTokenLogprob>>,
}

#[derive(Deserialize)]
struct WireTokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<WireTop>,
}

#[derive(Deserialize)]
struct WireTop {
    token: String,
    logprob: f64,
}

pub struct OpenAiGateway {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    logprobs: bool,
    retry: RetryPolicy,
    http: reqwest::blocking::Client,
}

impl OpenAiGateway {
    /// `base_url` is the server root; requests go to
    /// `{base_url}/v1/chat/completions`.
    pub fn new(id: impl Into<String>, base_url: &str, model: impl Into<String>, api_key: Option<String>) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("HTTP client builds");
        OpenAiGateway {
            id: id.into(),
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            model: model.into(),
            api_key,
            logprobs: true,
            retry: RetryPolicy::default(),
            http,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Declares whether the server returns token log-probabilities.
    pub fn with_logprobs(mut self, supported: bool) -> Self {
        self.logprobs = supported;
        self
    }

    fn attempt(&self, body: &WireRequest<'_>) -> Result<ChatResponse, Attempt> {
        let mut call = self.http.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP status {}", status.as_u16())));
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(GatewayError::HttpStatus {
                code: status.as_u16(),
                body,
            }));
        }
        let wire: WireResponse = resp
            .json()
            .map_err(|e| Attempt::Fatal(GatewayError::Decode(e.to_string())))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Attempt::Fatal(GatewayError::Decode("response has no choices".into())))?;
        let token_logprobs = choice
            .logprobs
            .and_then(|l| l.content)
            .and_then(|tokens| tokens.into_iter().next())
            .map(|first| {
                if first.top_logprobs.is_empty() {
                    vec![TokenLogprob {
                        token: first.token,
                        logprob: first.logprob,
                    }]
                } else {
                    first
                        .top_logprobs
                        .into_iter()
                        .map(|t| TokenLogprob {
                            token: t.token,
                            logprob: t.logprob,
                        })
                        .collect()
                }
            });
        Ok(ChatResponse {
            content: choice.message.content.unwrap_or_default(),
            token_logprobs,
            provenance: self.id.clone(),
        })
    }
}

enum Attempt {
    Retry(String),
    Fatal(GatewayError),
}

impl ChatGateway for OpenAiGateway {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let want = req.want_logprobs && self.logprobs;
        let body = WireRequest {
            model: &self.model,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            logprobs: want,
            top_logprobs: want.then_some(5),
        };
        let mut last = String::new();
        for attempt in 0..self.retry.max_attempts() {
            if attempt > 0 {
                let delay = self.retry.delays[attempt as usize - 1];
                log::warn!("{}: retrying in {:?} after: {}", self.id, delay, last);
                std::thread::sleep(delay);
            }
            match self.attempt(&body) {
                Ok(resp) => return Ok(resp),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(GatewayError::Transport {
            attempts: self.retry.max_attempts(),
            message: last,
        })
    }

    fn supports_logprobs(&self) -> bool {
        self.logprobs
    }
}
