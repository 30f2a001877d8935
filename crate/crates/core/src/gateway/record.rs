use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatGateway, ChatRequest, ChatResponse, GatewayError};

/// One request/response pair as seen by a gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    /// Logical channel, e.g. "client" or "expert".
    pub channel: String,
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ChatResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Shared, append-only log of every exchange in a session.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    inner: Arc<Mutex<Vec<Exchange>>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, exchange: Exchange) {
        self.inner.lock().expect("transcript lock").push(exchange);
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.inner.lock().expect("transcript lock").clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("transcript lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forwards to an inner gateway and records every exchange.
pub struct RecordingGateway<G> {
    inner: G,
    channel: String,
    transcript: Transcript,
}

impl<G: ChatGateway> RecordingGateway<G> {
    pub fn new(inner: G, channel: impl Into<String>, transcript: Transcript) -> Self {
        RecordingGateway {
            inner,
            channel: channel.into(),
            transcript,
        }
    }
}

impl<G: ChatGateway> ChatGateway for RecordingGateway<G> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let result = self.inner.complete(req);
        self.transcript.push(Exchange {
            channel: self.channel.clone(),
            request: req.clone(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
        });
        result
    }

    fn supports_logprobs(&self) -> bool {
        self.inner.supports_logprobs()
    }
}

fn request_key(req: &ChatRequest) -> String {
    serde_json::to_string(req).expect("request serializes")
}

/// Answers requests from recorded exchanges, looked up by exact request.
///
/// Identical requests recorded several times are answered in recording
/// order, so replay does not depend on the order in which concurrent
/// requests arrive.
pub struct ReplayGateway {
    id: String,
    supports_logprobs: bool,
    answers: Mutex<HashMap<String, VecDeque<Result<ChatResponse, String>>>>,
}

impl ReplayGateway {
    pub fn new(id: impl Into<String>, exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        let mut answers: HashMap<String, VecDeque<_>> = HashMap::new();
        let mut supports_logprobs = false;
        for ex in exchanges {
            supports_logprobs |= ex.request.want_logprobs;
            let outcome = match (ex.response, ex.error) {
                (Some(r), _) => Ok(r),
                (None, e) => Err(e.unwrap_or_else(|| "recorded failure".into())),
            };
            answers.entry(request_key(&ex.request)).or_default().push_back(outcome);
        }
        ReplayGateway {
            id: id.into(),
            supports_logprobs,
            answers: Mutex::new(answers),
        }
    }

    /// Replays the exchanges of one channel of a recorded session.
    pub fn for_channel(id: impl Into<String>, exchanges: &[Exchange], channel: &str) -> Self {
        Self::new(id, exchanges.iter().filter(|e| e.channel == channel).cloned())
    }
}

impl ChatGateway for ReplayGateway {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut answers = self.answers.lock().expect("replay lock");
        let next = answers.get_mut(&request_key(req)).and_then(VecDeque::pop_front);
        match next {
            Some(Ok(resp)) => Ok(resp),
            Some(Err(message)) => Err(GatewayError::Transport { attempts: 0, message }),
            None => Err(GatewayError::ScriptExhausted {
                excerpt: req
                    .messages
                    .last()
                    .map(|m| m.content.chars().take(120).collect())
                    .unwrap_or_default(),
            }),
        }
    }

    fn supports_logprobs(&self) -> bool {
        self.supports_logprobs
    }
}
