use std::sync::atomic::{AtomicBool, Ordering};

use sde_core::pipeline::{FileSessionStore, SessionState, SessionStore};
use sde_core::{Error, Result};

/// A file store whose saves can be made to fail, for stages that never
/// call a backend.
pub struct FlakyStore {
    pub inner: FileSessionStore,
    pub fail_saves: AtomicBool,
}

impl FlakyStore {
    pub fn new(inner: FileSessionStore) -> Self {
        FlakyStore {
            inner,
            fail_saves: AtomicBool::new(false),
        }
    }

    pub fn set_failing(&self, on: bool) {
        self.fail_saves.store(on, Ordering::SeqCst);
    }
}

impl SessionStore for FlakyStore {
    fn load(&self, id: &str) -> Result<SessionState> {
        self.inner.load(id)
    }

    fn save(&self, state: &SessionState) -> Result<()> {
        if self.fail_saves.load(Ordering::SeqCst) {
            return Err(Error::Io {
                path: self.inner.path_for(&state.id),
                source: std::io::Error::other("injected write failure"),
            });
        }
        self.inner.save(state)
    }

    fn list(&self) -> Result<Vec<String>> {
        self.inner.list()
    }
}
