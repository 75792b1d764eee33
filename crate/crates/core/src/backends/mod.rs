//! Text and image model clients.
//!
//! Live clients speak the OpenAI-compatible chat-completions and
//! image-generation wire shapes over blocking HTTP. Stub clients answer
//! offline and deterministically, which is what every test uses.

mod live;
mod retry;
pub(crate) mod structured;
mod stub;

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_model::{CompositionTemplate, SceneGraph};

pub use live::{LiveImageBackend, LiveImageClient, LiveTextClient};
pub use retry::{AttemptError, RetryPolicy};
pub use structured::{complete_structured, extract_json};
pub use stub::{FailingImageBackend, FailingTextClient, StubImageBackend, StubImageClient, StubTextClient};

/// What a text request is for. Live clients only send `system`/`user`; the
/// stub uses the task to synthesize an answer when nothing is scripted.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum TextTask {
    #[default]
    Free,
    Theme {
        labels: Vec<String>,
        fallback: String,
    },
    SuggestStyle {
        options: Vec<String>,
    },
    Describe {
        label: String,
        theme: String,
    },
    Expand {
        parent: String,
        max_children: usize,
    },
    Fuse {
        current: String,
        previous: String,
    },
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    Free,
    Theme,
    SuggestStyle,
    Describe,
    Expand,
    Fuse,
    Judge,
}

impl TextTask {
    pub fn kind(&self) -> TaskKind {
        match self {
            TextTask::Free => TaskKind::Free,
            TextTask::Theme { .. } => TaskKind::Theme,
            TextTask::SuggestStyle { .. } => TaskKind::SuggestStyle,
            TextTask::Describe { .. } => TaskKind::Describe,
            TextTask::Expand { .. } => TaskKind::Expand,
            TextTask::Fuse { .. } => TaskKind::Fuse,
            TextTask::Judge => TaskKind::Judge,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextRequest {
    pub system: String,
    pub user: String,
    pub seed: u64,
    pub task: TextTask,
}

impl TextRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>, seed: u64, task: TextTask) -> Self {
        TextRequest {
            system: system.into(),
            user: user.into(),
            seed,
            task,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextResponse {
    pub text: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub prompt: String,
    pub width_px: u32,
    pub height_px: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image_ref: String,
    pub latency_ms: u64,
}

/// Failure talking to a model service, after retries.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("backend error after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
pub struct BackendError {
    pub status: Option<u16>,
    pub attempts: u32,
    pub message: String,
}

impl BackendError {
    pub fn new(status: Option<u16>, attempts: u32, message: impl Into<String>) -> Self {
        BackendError {
            status,
            attempts,
            message: message.into(),
        }
    }
}

pub trait TextClient: Send + Sync {
    fn complete(&self, request: &TextRequest) -> std::result::Result<TextResponse, BackendError>;
}

pub trait ImageClient: Send + Sync {
    fn generate(&self, request: &ImageRequest) -> Result<ImageResult>;
}

/// Builds an image client for one generation. Stubs render the scene they
/// are given; live backends ignore it and only use the prompt.
pub trait ImageBackend: Send + Sync {
    fn client_for(&self, scene: &SceneGraph, template: &CompositionTemplate, out_dir: &Path) -> Box<dyn ImageClient>;
}

pub fn text_complete(client: &dyn TextClient, request: &TextRequest) -> Result<TextResponse> {
    Ok(client.complete(request)?)
}

pub fn image_generate(client: &dyn ImageClient, request: &ImageRequest) -> Result<ImageResult> {
    if request.prompt.trim().is_empty() {
        return Err(Error::EmptyPrompt);
    }
    client.generate(request)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Text,
    Image,
}

/// Connection settings. `api_key_ref` names an environment variable; the
/// key itself is read at request time and never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub api_key_ref: String,
    pub model_name: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub temperature: f64,
}

impl BackendConfig {
    pub fn new(endpoint_url: &str, api_key_ref: &str, model_name: &str) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.trim_end_matches('/').to_string(),
            api_key_ref: api_key_ref.to_string(),
            model_name: model_name.to_string(),
            timeout_s: 60.0,
            max_retries: 2,
            temperature: 0.0,
        }
    }

    /// Reads `SDE_{TEXT,IMAGE}_API_URL`, `..._MODEL`; the key variable is
    /// `SDE_{TEXT,IMAGE}_API_KEY`.
    pub fn from_env(kind: BackendKind) -> Result<Self> {
        let prefix = match kind {
            BackendKind::Text => "SDE_TEXT",
            BackendKind::Image => "SDE_IMAGE",
        };
        let url_var = format!("{prefix}_API_URL");
        let url = std::env::var(&url_var).map_err(|_| Error::parse("environment", format!("{url_var} is not set")))?;
        let default_model = match kind {
            BackendKind::Text => "gpt-4o-mini",
            BackendKind::Image => "dall-e-3",
        };
        let model = std::env::var(format!("{prefix}_MODEL")).unwrap_or_else(|_| default_model.into());
        Ok(BackendConfig::new(&url, &format!("{prefix}_API_KEY"), &model))
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err(Error::parse("backend config", "timeout_s must be positive"));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy::new(self.max_retries)
    }

    pub(crate) fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_ref).ok().filter(|k| !k.is_empty())
    }
}
