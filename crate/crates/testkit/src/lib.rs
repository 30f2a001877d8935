//! Fixtures, scripted backends and independent oracles shared by the
//! integration and acceptance tests.

pub mod klinefelter;
pub mod mercedes;
pub mod oracle;
pub mod seven_claims;

use std::sync::Arc;

use guided_reasoning::gateway::{Model, ScriptEntry, ScriptMode, ScriptedGateway};

/// A scripted model with the given backend id.
pub fn scripted_model(id: &str, mode: ScriptMode, entries: Vec<ScriptEntry>, temperature: f64) -> Model {
    Model::new(Arc::new(ScriptedGateway::new(id, mode, entries)), temperature, 1024)
}

/// Collapses every whitespace run to a single space.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Writes `entries` as a JSON script file.
pub fn write_script(path: &std::path::Path, entries: &[ScriptEntry]) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(entries).map_err(std::io::Error::other)?;
    std::fs::write(path, json)
}
