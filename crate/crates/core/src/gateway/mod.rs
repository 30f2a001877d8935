//! Chat-completion backends.
//!
//! [`ChatGateway`] is the one seam between the guide and any language model.
//! Three implementations ship here: [`OpenAiGateway`] for OpenAI-compatible
//! HTTP servers, [`ScriptedGateway`] for deterministic tests, and
//! [`ReplayGateway`] which answers from a recorded [`Transcript`].

mod openai;
mod record;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use openai::{OpenAiGateway, RetryPolicy};
pub use record::{Exchange, RecordingGateway, ReplayGateway, Transcript};
pub use scripted::{Matcher, ScriptEntry, ScriptMode, ScriptedGateway};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_logprobs: bool,
}

impl ChatRequest {
    /// Checks the request invariants: non-empty, ends with a user turn,
    /// non-negative temperature.
    pub fn new(messages: Vec<Message>, temperature: f64, max_tokens: u32) -> Result<Self, GatewayError> {
        let req = ChatRequest {
            messages,
            temperature,
            max_tokens,
            want_logprobs: false,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_logprobs(mut self, want: bool) -> Self {
        self.want_logprobs = want;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.last() {
            None => Err(GatewayError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::User => Err(GatewayError::InvalidRequest("last message must come from the user".into())),
            _ if self.temperature.is_nan() || self.temperature < 0.0 => Err(GatewayError::InvalidRequest(format!(
                "temperature {} is not a non-negative number",
                self.temperature
            ))),
            _ => Ok(()),
        }
    }

    /// All message contents joined by newlines; what script matchers see.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    /// Alternatives for the first generated token, when the backend exposes
    /// them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogprob>>,
    /// Identifier of the backend that produced this completion.
    pub provenance: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP status {code}: {body}")]
    HttpStatus { code: u16, body: String },
    #[error("script exhausted: no scripted response left for request {excerpt:?}")]
    ScriptExhausted { excerpt: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed backend response: {0}")]
    Decode(String),
    #[error("could not parse a 0-10 rating from {0:?}")]
    UnparseableRating(String),
}

/// A chat-completion backend. Implementations are shareable across threads.
pub trait ChatGateway: Send + Sync {
    /// Backend identifier, copied into every response's provenance.
    fn id(&self) -> &str;

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// Whether the backend can return first-token log-probabilities.
    fn supports_logprobs(&self) -> bool {
        true
    }
}

impl<G: ChatGateway + ?Sized> ChatGateway for Arc<G> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(req)
    }

    fn supports_logprobs(&self) -> bool {
        (**self).supports_logprobs()
    }
}

/// A gateway together with the decoding settings used for every request
/// sent through it.
#[derive(Clone)]
pub struct Model {
    gateway: Arc<dyn ChatGateway>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("gateway", &self.gateway.id())
            .field("temperature", &self.temperature)
            .field("max_tokens", &self.max_tokens)
            .finish()
    }
}

pub const RATING_REASK: &str = "On a scale from 0 (certainly not) to 10 (certainly), how confident are you that the answer is yes? Reply with a single integer between 0 and 10.";
const RATING_REASK_STRICT: &str = "Reply with one integer between 0 and 10 and nothing else.";

impl Model {
    pub fn new(gateway: Arc<dyn ChatGateway>, temperature: f64, max_tokens: u32) -> Self {
        Model {
            gateway,
            temperature,
            max_tokens,
        }
    }

    pub fn gateway(&self) -> &Arc<dyn ChatGateway> {
        &self.gateway
    }

    pub fn id(&self) -> &str {
        self.gateway.id()
    }

    pub fn request(&self, messages: Vec<Message>) -> Result<ChatRequest, GatewayError> {
        ChatRequest::new(messages, self.temperature, self.max_tokens)
    }

    pub fn complete(&self, messages: Vec<Message>) -> Result<ChatResponse, GatewayError> {
        let req = self.request(messages)?;
        self.gateway.complete(&req)
    }

    /// Single-turn convenience wrapper.
    pub fn ask(&self, prompt: &str) -> Result<ChatResponse, GatewayError> {
        self.complete(vec![Message::user(prompt)])
    }

    /// Probability that the answer to a yes/no question is affirmative.
    pub fn yes_probability(&self, question: &str) -> Result<f64, GatewayError> {
        let messages = vec![Message::user(question)];
        yes_probability(self.gateway.as_ref(), &self.request(messages)?)
    }
}

/// Probability in `[0, 1]` that the model answers `req` affirmatively.
///
/// Uses first-token log-probabilities when the backend returns yes/no
/// variants among them. Otherwise asks for a 0-10 rating (with one stricter
/// re-ask) and maps it to `rating / 10`.
pub fn yes_probability(gateway: &dyn ChatGateway, req: &ChatRequest) -> Result<f64, GatewayError> {
    let mut messages = req.messages.clone();
    if gateway.supports_logprobs() {
        let probe = req.clone().with_logprobs(true);
        let resp = gateway.complete(&probe)?;
        if let Some(p) = resp.token_logprobs.as_deref().and_then(yes_mass) {
            return Ok(p);
        }
        messages.push(Message::assistant(resp.content));
        messages.push(Message::user(RATING_REASK));
    } else {
        let last = messages.last_mut().expect("validated request");
        last.content = format!("{}\n\n{}", last.content, RATING_REASK);
    }

    let mut rating_req = ChatRequest {
        messages,
        want_logprobs: false,
        ..req.clone()
    };
    let first = gateway.complete(&rating_req)?;
    if let Some(r) = parse_rating(&first.content) {
        return Ok(r);
    }
    rating_req.messages.push(Message::assistant(first.content));
    rating_req.messages.push(Message::user(RATING_REASK_STRICT));
    let second = gateway.complete(&rating_req)?;
    parse_rating(&second.content).ok_or(GatewayError::UnparseableRating(second.content))
}

/// Normalised probability mass of "yes" among yes/no token variants.
pub fn yes_mass(alternatives: &[TokenLogprob]) -> Option<f64> {
    let mut yes = 0.0;
    let mut no = 0.0;
    for alt in alternatives {
        let token = alt.token.trim().trim_end_matches(['.', ',', '!']).to_lowercase();
        match token.as_str() {
            "yes" => yes += alt.logprob.exp(),
            "no" => no += alt.logprob.exp(),
            _ => {}
        }
    }
    let total = yes + no;
    (total > 0.0 && total.is_finite()).then(|| (yes / total).clamp(0.0, 1.0))
}

/// First integer in `text` that lies in `0..=10`, divided by ten.
pub fn parse_rating(text: &str) -> Option<f64> {
    static NUMBER: std::sync::LazyLock<regex::Regex> =
        std::sync::LazyLock::new(|| regex::Regex::new(r"\d+").expect("valid regex"));
    NUMBER
        .find_iter(text)
        .filter_map(|m| m.as_str().parse::<u32>().ok())
        .find(|&n| n <= 10)
        .map(|n| f64::from(n) / 10.0)
}
