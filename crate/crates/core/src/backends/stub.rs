use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use super::*;
use crate::canonical::sha256_hex;
use crate::prompt_compiler::render_debug_svg;

/// Offline text client. Scripted replies are looked up by the exact user
/// message, then by its SHA-256 hex, then by task kind; anything left is
/// synthesized deterministically from the request task.
#[derive(Debug, Clone, Default)]
pub struct StubTextClient {
    script: BTreeMap<String, String>,
    by_task: BTreeMap<TaskKind, String>,
}

impl StubTextClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script(script: BTreeMap<String, String>) -> Self {
        StubTextClient {
            script,
            by_task: BTreeMap::new(),
        }
    }

    pub fn script(mut self, key: impl Into<String>, reply: impl Into<String>) -> Self {
        self.script.insert(key.into(), reply.into());
        self
    }

    /// Fixed reply for every unscripted request of one kind.
    pub fn reply_for(mut self, kind: TaskKind, reply: impl Into<String>) -> Self {
        self.by_task.insert(kind, reply.into());
        self
    }

    pub fn request_key(request: &TextRequest) -> String {
        sha256_hex(&request.user)
    }

    fn synthesize(request: &TextRequest) -> String {
        match &request.task {
            TextTask::Free => format!("stub reply {}", &Self::request_key(request)[..12]),
            TextTask::Theme { fallback, .. } => fallback.clone(),
            TextTask::SuggestStyle { options } => {
                let pick = if options.is_empty() {
                    String::new()
                } else {
                    let h = Self::request_key(request);
                    let idx = u64::from_str_radix(&h[..8], 16).unwrap_or(0) as usize % options.len();
                    options[idx].clone()
                };
                json!({ "style": pick }).to_string()
            }
            TextTask::Describe { label, .. } => format!("a depiction of {label}"),
            TextTask::Expand { parent, max_children } => {
                let children: Vec<_> = (1..=*max_children)
                    .map(|i| {
                        json!({
                            "name": format!("part-{i}"),
                            "position": format!("cell {i}"),
                            "description": format!("detail {i} of {parent}"),
                        })
                    })
                    .collect();
                json!({ "children": children }).to_string()
            }
            TextTask::Fuse { current, .. } => current.clone(),
            TextTask::Judge => json!({
                "theme_conformity": 50,
                "artistic_quality": 50,
                "understandability": 50,
            })
            .to_string(),
        }
    }
}

impl TextClient for StubTextClient {
    fn complete(&self, request: &TextRequest) -> std::result::Result<TextResponse, BackendError> {
        let text = self
            .script
            .get(&request.user)
            .or_else(|| self.script.get(&Self::request_key(request)))
            .or_else(|| self.by_task.get(&request.task.kind()))
            .cloned()
            .unwrap_or_else(|| Self::synthesize(request));
        Ok(TextResponse { text, latency_ms: 0 })
    }
}

/// Wraps a client and fails every request of the selected kinds (all kinds
/// when the set is empty). Used to inject backend faults.
#[derive(Clone)]
pub struct FailingTextClient {
    inner: Arc<dyn TextClient>,
    fail_on: BTreeSet<TaskKind>,
    status: Option<u16>,
}

impl FailingTextClient {
    pub fn new(inner: Arc<dyn TextClient>, fail_on: impl IntoIterator<Item = TaskKind>) -> Self {
        FailingTextClient {
            inner,
            fail_on: fail_on.into_iter().collect(),
            status: Some(503),
        }
    }

    pub fn always() -> Self {
        Self::new(Arc::new(StubTextClient::new()), [])
    }
}

impl TextClient for FailingTextClient {
    fn complete(&self, request: &TextRequest) -> std::result::Result<TextResponse, BackendError> {
        if self.fail_on.is_empty() || self.fail_on.contains(&request.task.kind()) {
            return Err(BackendError::new(self.status, 1, "injected failure"));
        }
        self.inner.complete(request)
    }
}

/// Writes the debug SVG of the scene it was built with.
#[derive(Debug, Clone)]
pub struct StubImageClient {
    scene: SceneGraph,
    template: CompositionTemplate,
    out_dir: PathBuf,
}

impl StubImageClient {
    pub const FILE_NAME: &'static str = "image.svg";

    pub fn new(scene: SceneGraph, template: CompositionTemplate, out_dir: impl Into<PathBuf>) -> Self {
        StubImageClient {
            scene,
            template,
            out_dir: out_dir.into(),
        }
    }
}

impl ImageClient for StubImageClient {
    fn generate(&self, request: &ImageRequest) -> Result<ImageResult> {
        if request.prompt.trim().is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let svg = render_debug_svg(&self.scene, &self.template)?;
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join(Self::FILE_NAME);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        Ok(ImageResult {
            image_ref: path.to_string_lossy().into_owned(),
            latency_ms: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StubImageBackend;

impl ImageBackend for StubImageBackend {
    fn client_for(&self, scene: &SceneGraph, template: &CompositionTemplate, out_dir: &Path) -> Box<dyn ImageClient> {
        Box::new(StubImageClient::new(scene.clone(), template.clone(), out_dir))
    }
}

/// Image backend whose clients always fail with a 503.
#[derive(Debug, Clone, Copy, Default)]
pub struct FailingImageBackend;

struct FailingImageClient;

impl ImageClient for FailingImageClient {
    fn generate(&self, _: &ImageRequest) -> Result<ImageResult> {
        Err(BackendError::new(Some(503), 1, "injected failure").into())
    }
}

impl ImageBackend for FailingImageBackend {
    fn client_for(&self, _: &SceneGraph, _: &CompositionTemplate, _: &Path) -> Box<dyn ImageClient> {
        Box::new(FailingImageClient)
    }
}
