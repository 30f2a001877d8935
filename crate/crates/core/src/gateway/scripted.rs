use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatGateway, ChatRequest, ChatResponse, GatewayError, TokenLogprob};

/// Which requests a script entry answers.
///
/// Serialized as the string `"any"` or as `{"contains": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    Any,
    Contains(String),
}

impl Matcher {
    pub fn matches(&self, req: &ChatRequest) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Contains(needle) => req.messages.iter().any(|m| m.content.contains(needle.as_str())),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatcherRepr {
    Keyword(String),
    Contains { contains: String },
}

impl Serialize for Matcher {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Matcher::Any => MatcherRepr::Keyword("any".into()),
            Matcher::Contains(c) => MatcherRepr::Contains { contains: c.clone() },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matcher {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match MatcherRepr::deserialize(d)? {
            MatcherRepr::Keyword(k) if k == "any" || k == "*" => Ok(Matcher::Any),
            MatcherRepr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "unknown matcher {k:?}; expected \"any\" or {{\"contains\": ...}}"
            ))),
            MatcherRepr::Contains { contains } => Ok(Matcher::Contains(contains)),
        }
    }
}

/// One scripted completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<TokenLogprob>>,
    /// Repeating entries are never used up.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl ScriptEntry {
    pub fn any(response: impl Into<String>) -> Self {
        ScriptEntry {
            matcher: Matcher::Any,
            response: response.into(),
            logprobs: None,
            repeat: false,
        }
    }

    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry {
            matcher: Matcher::Contains(needle.into()),
            ..Self::any(response)
        }
    }

    pub fn with_logprobs(mut self, logprobs: Vec<TokenLogprob>) -> Self {
        self.logprobs = Some(logprobs);
        self
    }

    /// A yes/no answer whose first-token alternatives put probability `p`
    /// on "Yes".
    pub fn with_yes_probability(self, p: f64) -> Self {
        self.with_logprobs(vec![
            TokenLogprob {
                token: "Yes".into(),
                logprob: p.ln(),
            },
            TokenLogprob {
                token: "No".into(),
                logprob: (1.0 - p).ln(),
            },
        ])
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptMode {
    /// Each request takes the first unused entry whose matcher accepts it.
    #[default]
    Match,
    /// Entries are consumed strictly in order; a request that the next entry
    /// does not match is an error.
    Exact,
}

struct ScriptState {
    used: Vec<bool>,
    cursor: usize,
}

/// Deterministic test backend answering from an ordered script.
pub struct ScriptedGateway {
    id: String,
    mode: ScriptMode,
    entries: Vec<ScriptEntry>,
    state: Mutex<ScriptState>,
}

impl ScriptedGateway {
    pub fn new(id: impl Into<String>, mode: ScriptMode, entries: Vec<ScriptEntry>) -> Self {
        let used = vec![false; entries.len()];
        ScriptedGateway {
            id: id.into(),
            mode,
            entries,
            state: Mutex::new(ScriptState { used, cursor: 0 }),
        }
    }

    /// Loads a JSON array of script entries.
    pub fn from_file(id: impl Into<String>, mode: ScriptMode, path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(id, mode, entries))
    }

    /// Number of non-repeating entries not yet used.
    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("script lock");
        self.entries
            .iter()
            .zip(&state.used)
            .filter(|(e, used)| !e.repeat && !**used)
            .count()
    }

    fn respond(&self, entry: &ScriptEntry) -> ChatResponse {
        ChatResponse {
            content: entry.response.clone(),
            token_logprobs: entry.logprobs.clone(),
            provenance: self.id.clone(),
        }
    }
}

fn excerpt(req: &ChatRequest) -> String {
    let text = req.messages.last().map(|m| m.content.as_str()).unwrap_or_default();
    text.chars().take(120).collect()
}

impl ChatGateway for ScriptedGateway {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let mut state = self.state.lock().expect("script lock");
        match self.mode {
            ScriptMode::Exact => {
                let Some(entry) = self.entries.get(state.cursor) else {
                    return Err(GatewayError::ScriptExhausted { excerpt: excerpt(req) });
                };
                if !entry.matcher.matches(req) {
                    return Err(GatewayError::ScriptExhausted { excerpt: excerpt(req) });
                }
                if !entry.repeat {
                    let i = state.cursor;
                    state.used[i] = true;
                    state.cursor += 1;
                }
                Ok(self.respond(entry))
            }
            ScriptMode::Match => {
                let found = self
                    .entries
                    .iter()
                    .enumerate()
                    .find(|(i, e)| (e.repeat || !state.used[*i]) && e.matcher.matches(req));
                let Some((i, entry)) = found else {
                    return Err(GatewayError::ScriptExhausted { excerpt: excerpt(req) });
                };
                if !entry.repeat {
                    state.used[i] = true;
                }
                Ok(self.respond(entry))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new(vec![Message::user(text)], 0.0, 10).unwrap()
    }

    #[test]
    fn wildcard() {
        let g = ScriptedGateway::new("s", ScriptMode::Match, vec![ScriptEntry::any("ok")]);
        let r = g.complete(&req("anything")).unwrap();
        assert_eq!(r.content, "ok");
        assert_eq!(r.provenance, "s");
    }

    #[test]
    fn exact_replay_exhausts() {
        let g = ScriptedGateway::new("s", ScriptMode::Exact, vec![ScriptEntry::any("a"), ScriptEntry::any("b")]);
        assert_eq!(g.complete(&req("1")).unwrap().content, "a");
        assert_eq!(g.complete(&req("2")).unwrap().content, "b");
        assert!(matches!(g.complete(&req("3")), Err(GatewayError::ScriptExhausted { .. })));
    }

    #[test]
    fn exact_replay_mismatch() {
        let g = ScriptedGateway::new("s", ScriptMode::Exact, vec![ScriptEntry::contains("alpha", "a")]);
        assert!(matches!(g.complete(&req("beta")), Err(GatewayError::ScriptExhausted { .. })));
    }

    #[test]
    fn match_mode_prefers_first_unused_and_keeps_repeats() {
        let g = ScriptedGateway::new(
            "s",
            ScriptMode::Match,
            vec![
                ScriptEntry::contains("x", "first x"),
                ScriptEntry::contains("x", "second x"),
                ScriptEntry::any("fallback").repeating(),
            ],
        );
        assert_eq!(g.complete(&req("x")).unwrap().content, "first x");
        assert_eq!(g.complete(&req("y")).unwrap().content, "fallback");
        assert_eq!(g.complete(&req("x")).unwrap().content, "second x");
        assert_eq!(g.complete(&req("x")).unwrap().content, "fallback");
        assert_eq!(g.remaining(), 0);
    }

    #[test]
    fn script_file_schema() {
        let json = r#"[
            {"match": "any", "response": "ok"},
            {"match": {"contains": "weather"}, "response": "Yes",
             "logprobs": [{"token": "Yes", "logprob": -0.1}]}
        ]"#;
        let entries: Vec<ScriptEntry> = serde_json::from_str(json).unwrap();
        assert_eq!(entries[0].matcher, Matcher::Any);
        assert_eq!(entries[1].matcher, Matcher::Contains("weather".into()));
        assert_eq!(entries[1].logprobs.as_ref().unwrap()[0].logprob, -0.1);
        let back = serde_json::to_string(&entries).unwrap();
        assert_eq!(serde_json::from_str::<Vec<ScriptEntry>>(&back).unwrap(), entries);
        assert!(serde_json::from_str::<Vec<ScriptEntry>>(r#"[{"match": "all", "response": "x"}]"#).is_err());
    }

    #[test]
    fn scripted_backend_is_pure() {
        let script = vec![
            ScriptEntry::contains("a", "1"),
            ScriptEntry::any("2"),
            ScriptEntry::any("3").repeating(),
        ];
        let run = || {
            let g = ScriptedGateway::new("s", ScriptMode::Match, script.clone());
            ["b", "a", "c", "a"]
                .iter()
                .map(|t| g.complete(&req(t)).unwrap().content)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
