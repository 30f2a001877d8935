//! Building recorded client/expert models from configuration or from a
//! recorded transcript, and writing run artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use guided_reasoning::export::{render_dot, render_json, render_svg};
use guided_reasoning::gateway::{
    ChatGateway, Exchange, Model, OpenAiGateway, RecordingGateway, ReplayGateway, ScriptedGateway, Transcript,
};
use guided_reasoning::guide::{GuideConfig, GuideKind, GuideSession};
use guided_reasoning::prompts::{PromptTemplates, TemplateError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, Endpoint, CLIENT_KEY_VAR, EXPERT_KEY_VAR};

pub const CLIENT: &str = "client";
pub const EXPERT: &str = "expert";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("cannot load script {path}: {source}")]
    Script {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot load templates: {0}")]
    Templates(#[from] TemplateError),
}

fn gateway(name: &str, e: &Endpoint, key_var: &str) -> Result<Arc<dyn ChatGateway>, BackendError> {
    if let Some(path) = &e.script {
        let g = ScriptedGateway::from_file(name, e.script_mode, path).map_err(|source| BackendError::Script {
            path: path.clone(),
            source,
        })?;
        return Ok(Arc::new(g));
    }
    let base = e.base_url.as_deref().unwrap_or_default();
    let model = e.model.clone().unwrap_or_default();
    let key = std::env::var(key_var).ok().filter(|k| !k.is_empty());
    let mut g = OpenAiGateway::new(name, base, model, key);
    if let Some(lp) = e.logprobs {
        g = g.with_logprobs(lp);
    }
    Ok(Arc::new(g))
}

/// Fresh, unrecorded client and expert models for one session.
pub fn connect(cfg: &Config) -> Result<(Model, Model), BackendError> {
    let client = Model::new(
        gateway(CLIENT, &cfg.client, CLIENT_KEY_VAR)?,
        cfg.client_temperature(),
        cfg.client.max_tokens(),
    );
    let expert = Model::new(
        gateway(EXPERT, &cfg.expert, EXPERT_KEY_VAR)?,
        cfg.expert_temperature(),
        cfg.expert.max_tokens(),
    );
    Ok((client, expert))
}

/// `model` with every exchange logged to `transcript` under `channel`.
pub fn record(model: &Model, channel: &str, transcript: &Transcript) -> Model {
    let rec = RecordingGateway::new(model.gateway().clone(), channel, transcript.clone());
    Model::new(Arc::new(rec), model.temperature, model.max_tokens)
}

pub fn templates(cfg: &Config) -> Result<PromptTemplates, BackendError> {
    match &cfg.templates {
        Some(dir) => Ok(PromptTemplates::load_dir(dir)?),
        None => Ok(PromptTemplates::builtin()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl From<&Model> for ModelSettings {
    fn from(m: &Model) -> Self {
        ModelSettings {
            temperature: m.temperature,
            max_tokens: m.max_tokens,
        }
    }
}

/// Everything needed to re-run a session without a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub client: ModelSettings,
    pub expert: ModelSettings,
    pub guide: GuideConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
}

/// The transcript.json document of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptFile {
    pub problem: String,
    pub guide: GuideKind,
    pub settings: Settings,
    pub exchanges: Vec<Exchange>,
}

impl TranscriptFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid transcript {}: {e}", path.display()))
    }

    /// Unrecorded models answering from the recorded exchanges.
    pub fn replay_models(&self) -> (Model, Model) {
        let model = |channel: &str, s: ModelSettings| {
            Model::new(
                Arc::new(ReplayGateway::for_channel(channel, &self.exchanges, channel)),
                s.temperature,
                s.max_tokens,
            )
        };
        (model(CLIENT, self.settings.client), model(EXPERT, self.settings.expert))
    }

    pub fn templates(&self) -> Result<PromptTemplates, BackendError> {
        match &self.settings.templates {
            Some(dir) => Ok(PromptTemplates::load_dir(dir)?),
            None => Ok(PromptTemplates::builtin()),
        }
    }
}

pub const ANSWER_FILE: &str = "answer.txt";
pub const PROTOCOL_FILE: &str = "protocol.txt";
pub const SVG_FILE: &str = "map.svg";
pub const DOT_FILE: &str = "map.dot";
pub const JSON_FILE: &str = "map.json";
pub const TRANSCRIPT_FILE: &str = "transcript.json";

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Writes the artifacts of a finished session into `dir` and returns the
/// paths written. Map files are skipped when the session has no map.
pub fn write_artifacts(dir: &Path, session: &GuideSession, transcript: &TranscriptFile) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, String)> = Vec::new();
    if let Some(answer) = &session.answer {
        files.push((ANSWER_FILE, with_newline(answer.clone())));
    }
    files.push((PROTOCOL_FILE, with_newline(session.protocol_text())));
    if let Some(map) = &session.map {
        files.push((SVG_FILE, render_svg(map)));
        files.push((DOT_FILE, render_dot(map)));
        files.push((JSON_FILE, with_newline(render_json(map))));
    }
    let json = serde_json::to_string_pretty(transcript).map_err(std::io::Error::other)?;
    files.push((TRANSCRIPT_FILE, with_newline(json)));
    let mut written = Vec::new();
    for (name, text) in files {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use guided_reasoning::gateway::{ScriptEntry, ScriptMode};

    #[test]
    fn recorded_exchanges_replay() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("c.json");
        std::fs::write(
            &script,
            serde_json::to_string(&vec![ScriptEntry::contains("hi", "hello")]).unwrap(),
        )
        .unwrap();
        let cfg = Config {
            client: Endpoint {
                script: Some(script.clone()),
                script_mode: ScriptMode::Exact,
                ..Endpoint::default()
            },
            expert: Endpoint {
                script: Some(script),
                ..Endpoint::default()
            },
            ..Config::default()
        };
        let (client, expert) = connect(&cfg).unwrap();
        assert_eq!(client.temperature, 0.6);
        assert_eq!(expert.temperature, 0.0);
        let t = Transcript::new();
        let client = record(&client, CLIENT, &t);
        assert_eq!(client.ask("hi there").unwrap().content, "hello");
        let file = TranscriptFile {
            problem: "p".into(),
            guide: GuideKind::ProsCons,
            settings: Settings {
                client: (&client).into(),
                expert: (&expert).into(),
                guide: cfg.guide_config(),
                templates: None,
            },
            exchanges: t.exchanges(),
        };
        let (replayed, _) = file.replay_models();
        let r = replayed.ask("hi there").unwrap();
        assert_eq!(r.content, "hello");
        assert_eq!(r.provenance, CLIENT);
        assert!(replayed.ask("hi there").is_err());
    }

    #[test]
    fn missing_script_is_reported() {
        let cfg = Config {
            client: Endpoint {
                script: Some("/nonexistent/script.json".into()),
                ..Endpoint::default()
            },
            ..Config::default()
        };
        assert!(matches!(connect(&cfg), Err(BackendError::Script { .. })));
    }
}
