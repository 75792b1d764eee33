use std::collections::HashMap;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use super::SessionState;
use crate::canonical::to_canonical_string;
use crate::error::{Error, Result};

/// Where sessions live between requests.
pub trait SessionStore: Send + Sync {
    fn load(&self, id: &str) -> Result<SessionState>;
    fn save(&self, state: &SessionState) -> Result<()>;
    fn list(&self) -> Result<Vec<String>>;
}

/// Canonical JSON text of a session, as written to disk.
pub fn session_to_json(state: &SessionState) -> Result<String> {
    to_canonical_string(state).map_err(|e| Error::parse("session", e))
}

pub fn session_from_json(text: &str, context: &str) -> Result<SessionState> {
    serde_json::from_str(text).map_err(|e| Error::parse(context, e))
}

/// Session ids are UUIDs; anything else cannot name a file we wrote.
fn is_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

/// One `<id>.json` file per session. Writes go to a temporary file that is
/// renamed over the old one, so readers never see a partial session.
#[derive(Debug, Clone)]
pub struct FileSessionStore {
    dir: PathBuf,
}

impl FileSessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(FileSessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }
}

impl SessionStore for FileSessionStore {
    fn load(&self, id: &str) -> Result<SessionState> {
        if !is_session_id(id) {
            return Err(Error::NotFound(id.to_string()));
        }
        let path = self.path_for(id);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::NotFound(id.to_string())),
            Err(e) => return Err(Error::io(&path, e)),
        };
        session_from_json(&text, &path.display().to_string())
    }

    fn save(&self, state: &SessionState) -> Result<()> {
        if !is_session_id(&state.id) {
            return Err(Error::parse("session", format!("invalid session id {:?}", state.id)));
        }
        let text = session_to_json(state)?;
        let path = self.path_for(&state.id);
        let tmp = self.dir.join(format!(".{}.json.tmp", state.id));
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn list(&self) -> Result<Vec<String>> {
        let entries = std::fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".json")
                    .filter(|id| is_session_id(id))
                    .map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}

/// In-process store holding the same JSON text a file store would write.
#[derive(Debug, Default)]
pub struct MemorySessionStore {
    sessions: Mutex<HashMap<String, String>>,
}

impl MemorySessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// The stored text for `id`, byte for byte.
    pub fn raw(&self, id: &str) -> Option<String> {
        self.sessions.lock().get(id).cloned()
    }
}

impl SessionStore for MemorySessionStore {
    fn load(&self, id: &str) -> Result<SessionState> {
        let text = self.raw(id).ok_or_else(|| Error::NotFound(id.to_string()))?;
        session_from_json(&text, id)
    }

    fn save(&self, state: &SessionState) -> Result<()> {
        let text = session_to_json(state)?;
        self.sessions.lock().insert(state.id.clone(), text);
        Ok(())
    }

    fn list(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = self.sessions.lock().keys().cloned().collect();
        ids.sort();
        Ok(ids)
    }
}
