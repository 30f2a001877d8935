//! File-per-session persistence of finished sessions.

use std::path::{Path, PathBuf};

use guided_reasoning::gateway::Exchange;
use guided_reasoning::guide::GuideSession;
use serde::{Deserialize, Serialize};

use crate::service::StepEvent;

/// Everything the service keeps about a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSession {
    pub session: GuideSession,
    pub events: Vec<StepEvent>,
    pub exchanges: Vec<Exchange>,
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Writes the document atomically via a temporary file.
    pub fn save(&self, stored: &StoredSession) -> std::io::Result<()> {
        let json = serde_json::to_vec_pretty(stored).map_err(std::io::Error::other)?;
        let target = self.path(&stored.session.id);
        let tmp = target.with_extension("json.tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(tmp, target)
    }

    /// Loads every readable session document, skipping and logging the rest.
    pub fn load_all(&self) -> std::io::Result<Vec<StoredSession>> {
        let mut out = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let parsed = std::fs::read(&p)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<StoredSession>(&b).map_err(|e| e.to_string()));
            match parsed {
                Ok(s) => out.push(s),
                Err(e) => log::warn!("skipping session file {}: {e}", p.display()),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use guided_reasoning::guide::GuideKind;
    use guided_reasoning::protocol::Stage;

    #[test]
    fn save_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path().join("sessions")).unwrap();
        let session = GuideSession::new("abc", GuideKind::Suspension, "Why?").unwrap();
        let stored = StoredSession {
            events: vec![StepEvent {
                session_id: "abc".into(),
                seq: 1,
                stage: Stage::Paraphrase,
                payload: serde_json::json!({"paraphrases": []}),
            }],
            session,
            exchanges: Vec::new(),
        };
        store.save(&stored).unwrap();
        std::fs::write(store.dir().join("junk.json"), "{").unwrap();
        let loaded = store.load_all().unwrap();
        assert_eq!(loaded, vec![stored]);
    }
}
