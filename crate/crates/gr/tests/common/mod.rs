#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use gr::service::{AppState, BackendFactory};
use gr::store::SessionStore;
use gr_testkit::{klinefelter, mercedes, scripted_model, write_script};
use guided_reasoning::gateway::{ScriptEntry, ScriptMode};
use guided_reasoning::guide::{GuideConfig, GuideKind};
use guided_reasoning::prompts::PromptTemplates;

pub const MERCEDES_FOLLOWUP: &str = "And what was your reasoning behind this?";
pub const MERCEDES_EXPLANATION: &str =
    "I weighed the pros and cons: the costs of owning a Mercedes outweigh its reliability, so I judged buying one rather implausible.";

/// Mercedes client script followed by the answer to [`MERCEDES_FOLLOWUP`].
pub fn mercedes_client_script() -> Vec<ScriptEntry> {
    let mut s = mercedes::client_script(&PromptTemplates::builtin());
    s.push(ScriptEntry::contains(MERCEDES_FOLLOWUP, MERCEDES_EXPLANATION));
    s
}

/// Writes problem, scripts and a TOML config for a scripted Mercedes run
/// into `dir`; returns (problem file, config file).
pub fn mercedes_files(dir: &Path) -> (PathBuf, PathBuf) {
    let t = PromptTemplates::builtin();
    write_script(&dir.join("client.json"), &mercedes::client_script(&t)).unwrap();
    write_script(&dir.join("expert.json"), &mercedes::expert_script(&t)).unwrap();
    let problem = dir.join("problem.txt");
    std::fs::write(&problem, mercedes::PROBLEM).unwrap();
    let config = dir.join("gr.toml");
    std::fs::write(
        &config,
        "parallelism = 4\n\n[client]\nscript = \"client.json\"\nscript_mode = \"exact\"\n\n[expert]\nscript = \"expert.json\"\n",
    )
    .unwrap();
    (problem, config)
}

/// Writes the inconsistent two-formulation case; returns (problem, config).
pub fn klinefelter_files(dir: &Path) -> (PathBuf, PathBuf) {
    let t = PromptTemplates::builtin();
    write_script(&dir.join("client.json"), &klinefelter::client_script(&t)).unwrap();
    write_script(&dir.join("expert.json"), &klinefelter::expert_script(&t)).unwrap();
    let problem = dir.join("problem.txt");
    std::fs::write(&problem, klinefelter::PROBLEM).unwrap();
    let config = dir.join("gr.json");
    std::fs::write(
        &config,
        r#"{"client": {"script": "client.json"}, "expert": {"script": "expert.json"}, "suspension": {"n_paraphrases": 2}}"#,
    )
    .unwrap();
    (problem, config)
}

/// Backends answering the Mercedes problem with the pros/cons guide and
/// the Klinefelter problem with the suspension guide.
pub fn scripted_factory() -> BackendFactory {
    Arc::new(|kind| {
        Ok(match kind {
            GuideKind::ProsCons => {
                let (_, expert) = mercedes::models();
                (
                    scripted_model("client", ScriptMode::Exact, mercedes_client_script(), 0.6),
                    expert,
                )
            }
            GuideKind::Suspension => klinefelter::models(),
        })
    })
}

pub fn scripted_state(store: Option<SessionStore>) -> AppState {
    let cfg = GuideConfig {
        n_paraphrases: 2,
        ..GuideConfig::default()
    };
    AppState::new(scripted_factory(), PromptTemplates::builtin(), cfg, store).unwrap()
}

/// Serves `state` on an ephemeral port; returns the base URL.
pub async fn start(state: AppState) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum_serve(listener, state).await });
    format!("http://{addr}")
}

async fn axum_serve(listener: tokio::net::TcpListener, state: AppState) {
    gr::service::serve(listener, state).await.unwrap();
}

/// Parses the `data:` payloads of an SSE body.
pub fn sse_events(body: &str) -> Vec<serde_json::Value> {
    body.lines()
        .filter_map(|l| l.strip_prefix("data:"))
        .map(|d| serde_json::from_str(d.trim()).unwrap())
        .collect()
}

/// SSE `id:` fields of a body.
pub fn sse_ids(body: &str) -> Vec<u64> {
    body.lines()
        .filter_map(|l| l.strip_prefix("id:"))
        .map(|d| d.trim().parse().unwrap())
        .collect()
}
