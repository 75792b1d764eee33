//! The six-stage session state machine: input, creativity (style), theme,
//! composition, detailing, generate; plus the edit-and-regenerate loop and
//! session persistence.

mod edits;
mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::backends::{
    complete_structured, image_generate, structured::parse_json, BackendConfig, BackendKind, ImageBackend,
    ImageRequest, LiveImageBackend, LiveTextClient, StubImageBackend, StubTextClient, TextClient, TextRequest,
    TextTask,
};
use crate::composition::{builtin_templates, select_composition};
use crate::detailing::{
    apply_lighting, expand_recursive, fuse_history, populate_scene, ExpansionConfig, ExpansionTarget,
};
use crate::error::{Error, Result};
use crate::prompt_compiler::{compile_prompt_with, render_debug_svg, scene_hash, serialize_scene, PromptOptions};
use crate::scene_model::{
    detailset_to_scene, scene_to_detailset, validate_scene_with_budget, Canvas, CompositionTemplate, DetailSet,
    LightingSpec, SceneGraph, StyleSpec, ThemeConcept,
};
use crate::theme_extraction::{cluster, default_k, derive_theme, extract_keywords, ExtractionConfig, Linkage};

pub use edits::{apply_edits, is_buried, tombstones, EditField, SceneEdit};
pub use store::{session_from_json, session_to_json, FileSessionStore, MemorySessionStore, SessionStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Input,
    Creativity,
    Theme,
    Composition,
    Detailing,
    Generate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Input,
        Stage::Creativity,
        Stage::Theme,
        Stage::Composition,
        Stage::Detailing,
        Stage::Generate,
    ];

    /// The stage `advance` runs next. Generate repeats itself.
    pub fn next(self) -> Stage {
        match self {
            Stage::Input => Stage::Creativity,
            Stage::Creativity => Stage::Theme,
            Stage::Theme => Stage::Composition,
            Stage::Composition => Stage::Detailing,
            Stage::Detailing | Stage::Generate => Stage::Generate,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Creativity => "creativity",
            Stage::Theme => "theme",
            Stage::Composition => "composition",
            Stage::Detailing => "detailing",
            Stage::Generate => "generate",
        }
    }
}

/// The styles offered at the creativity stage.
pub const NAMED_STYLES: [&str; 8] = [
    "flat-infographic",
    "isometric-3d",
    "line-art",
    "minimalist-vector",
    "oil-painting",
    "pencil-sketch",
    "photorealistic",
    "watercolor",
];

pub fn named_style(name: &str) -> Option<StyleSpec> {
    let (mods, level): (&[&str], u8) = match name {
        "flat-infographic" => (&["clean lines", "flat colors"], 6),
        "isometric-3d" => (&["isometric projection", "soft shadows"], 5),
        "line-art" => (&["monochrome", "thin strokes"], 7),
        "minimalist-vector" => (&["geometric shapes", "limited palette"], 8),
        "oil-painting" => (&["rich texture", "visible brushstrokes"], 3),
        "pencil-sketch" => (&["cross-hatching", "graphite"], 6),
        "photorealistic" => (&["high detail", "natural light"], 0),
        "watercolor" => (&["paper texture", "soft edges"], 4),
        _ => return None,
    };
    Some(StyleSpec::new(name, mods, level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u64,
    pub scene_snapshot: SceneGraph,
    pub compiled_prompt: String,
    pub scene_hash: String,
    #[serde(default)]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub user_edits: Vec<SceneEdit>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub input_text: String,
    pub seed: u64,
    #[serde(default)]
    pub style: Option<StyleSpec>,
    pub stage: Stage,
    #[serde(default)]
    pub theme: Option<String>,
    #[serde(default)]
    pub concepts: Vec<ThemeConcept>,
    #[serde(default)]
    pub template_id: Option<String>,
    #[serde(default)]
    pub current_scene: Option<SceneGraph>,
    #[serde(default)]
    pub iterations: Vec<IterationRecord>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl SessionState {
    /// Canonical text equality, the notion of equality persistence keeps.
    pub fn canonical_eq(&self, other: &SessionState) -> bool {
        match (session_to_json(self), session_to_json(other)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        }
    }

    pub fn latest(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }
}

/// Options for the stage being entered; fields a stage does not use are
/// ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvanceParams {
    pub style: Option<StyleSpec>,
    pub style_name: Option<String>,
    pub template_id: Option<String>,
    pub linkage: Option<Linkage>,
    pub k: Option<usize>,
    pub expansion: Option<ExpansionConfig>,
    pub lighting: Option<LightingSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewSession {
    pub input_text: String,
    pub style: Option<StyleSpec>,
    pub style_name: Option<String>,
    pub seed: Option<u64>,
}

impl NewSession {
    pub fn new(input_text: impl Into<String>, seed: u64) -> Self {
        NewSession {
            input_text: input_text.into(),
            seed: Some(seed),
            ..Default::default()
        }
    }
}

#[derive(Clone)]
pub struct Backends {
    pub text: Arc<dyn TextClient>,
    pub image: Arc<dyn ImageBackend>,
}

impl Backends {
    pub fn new(text: Arc<dyn TextClient>, image: Arc<dyn ImageBackend>) -> Self {
        Backends { text, image }
    }

    /// Offline, deterministic backends.
    pub fn stub() -> Self {
        Backends::new(Arc::new(StubTextClient::new()), Arc::new(StubImageBackend))
    }

    /// OpenAI-compatible backends configured from `SDE_TEXT_*` and
    /// `SDE_IMAGE_*` environment variables.
    pub fn live_from_env() -> Result<Self> {
        let text = LiveTextClient::new(BackendConfig::from_env(BackendKind::Text)?)?;
        let image = LiveImageBackend::new(BackendConfig::from_env(BackendKind::Image)?)?;
        Ok(Backends::new(Arc::new(text), Arc::new(image)))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Run artifacts go to `<runs_dir>/<session-id>/iter-<n>/`.
    pub runs_dir: PathBuf,
    pub templates: Vec<CompositionTemplate>,
    pub canvas: Canvas,
    pub extraction: ExtractionConfig,
    pub linkage: Linkage,
    pub expansion: ExpansionConfig,
    pub lighting: LightingSpec,
    /// Let the text backend rewrite content that changed between
    /// iterations. Off by default: the rule-based merge is deterministic.
    pub fuse_with_backend: bool,
    pub prompt: PromptOptions,
    pub default_seed: u64,
}

impl PipelineConfig {
    pub fn new(runs_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            runs_dir: runs_dir.into(),
            templates: builtin_templates(),
            canvas: Canvas::default(),
            extraction: ExtractionConfig::default(),
            linkage: Linkage::default(),
            expansion: ExpansionConfig::default(),
            lighting: LightingSpec::default(),
            fuse_with_backend: false,
            prompt: PromptOptions::default(),
            default_seed: 0,
        }
    }
}

/// Result of a one-shot run.
#[derive(Debug, Clone, PartialEq)]
pub struct Creation {
    pub session_id: String,
    pub scene: SceneGraph,
    pub prompt: String,
    pub image_ref: Option<String>,
}

pub(crate) const STYLE_SYSTEM: &str = "You pick an illustration style for a text. \
Reply with JSON only: {\"style\": <one of the offered names>}.";

/// Runs sessions against a store. Writes to one session are serialized by
/// an in-process lock; distinct sessions proceed concurrently.
pub struct Pipeline {
    store: Arc<dyn SessionStore>,
    backends: Backends,
    config: PipelineConfig,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Pipeline {
    pub fn new(store: Arc<dyn SessionStore>, backends: Backends, config: PipelineConfig) -> Self {
        Pipeline {
            store,
            backends,
            config,
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &dyn SessionStore {
        self.store.as_ref()
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn templates(&self) -> &[CompositionTemplate] {
        &self.config.templates
    }

    pub fn template(&self, id: &str) -> Result<CompositionTemplate> {
        self.config
            .templates
            .iter()
            .find(|t| t.id == id)
            .cloned()
            .ok_or_else(|| Error::template("unknown-template", format!("no template with id {id:?}")))
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().entry(id.to_string()).or_default().clone()
    }

    pub fn load(&self, id: &str) -> Result<SessionState> {
        self.store.load(id)
    }

    pub fn save(&self, state: &SessionState) -> Result<()> {
        self.store.save(state)
    }

    pub fn create_session(&self, input_text: &str) -> Result<SessionState> {
        self.create(NewSession {
            input_text: input_text.to_string(),
            ..Default::default()
        })
    }

    pub fn create(&self, request: NewSession) -> Result<SessionState> {
        let input = request.input_text.trim();
        if input.is_empty() {
            return Err(Error::EmptyInput);
        }
        let style = match (request.style, request.style_name) {
            (Some(s), _) => Some(s),
            (None, Some(name)) => {
                Some(named_style(&name).ok_or_else(|| Error::InvalidEdit(format!("unknown style {name:?}")))?)
            }
            (None, None) => None,
        };
        let now = Utc::now();
        let state = normalize(SessionState {
            id: uuid::Uuid::new_v4().to_string(),
            input_text: input.to_string(),
            seed: request.seed.unwrap_or(self.config.default_seed),
            style,
            stage: Stage::Input,
            theme: None,
            concepts: Vec::new(),
            template_id: None,
            current_scene: None,
            iterations: Vec::new(),
            created_at: now,
            updated_at: now,
        })?;
        self.store.save(&state)?;
        Ok(state)
    }

    /// Runs the next stage and persists the result. On any error the stored
    /// session is left as it was.
    pub fn advance(&self, id: &str, params: &AdvanceParams) -> Result<SessionState> {
        let lock = self.lock_for(id);
        let _guard = lock.lock();
        let state = self.store.load(id)?;
        let next = self.advance_state(&state, params)?;
        self.store.save(&next)?;
        Ok(next)
    }

    /// The state after running the next stage; nothing is persisted.
    pub fn advance_state(&self, state: &SessionState, params: &AdvanceParams) -> Result<SessionState> {
        let mut s = state.clone();
        let stage = state.stage.next();
        tracing::debug!(session = %s.id, stage = stage.name(), "advancing");
        match stage {
            Stage::Input => unreachable!("no stage leads back to input"),
            Stage::Creativity => self.run_creativity(&mut s, params)?,
            Stage::Theme => self.run_theme(&mut s, params)?,
            Stage::Composition => self.run_composition(&mut s, params)?,
            Stage::Detailing => self.run_detailing(&mut s, params)?,
            Stage::Generate => self.run_generate(&mut s, Vec::new())?,
        }
        s.stage = stage;
        s.updated_at = Utc::now();
        normalize(s)
    }

    fn run_creativity(&self, s: &mut SessionState, params: &AdvanceParams) -> Result<()> {
        if let Some(style) = &params.style {
            s.style = Some(style.clone());
        } else if let Some(name) = &params.style_name {
            s.style = Some(named_style(name).ok_or_else(|| Error::InvalidEdit(format!("unknown style {name:?}")))?);
        } else if s.style.is_none() {
            let options: Vec<String> = NAMED_STYLES.iter().map(|n| n.to_string()).collect();
            let user = format!(
                "Text:\n{}\n\nChoose the best illustration style from: {}.",
                s.input_text,
                options.join(", ")
            );
            let request = TextRequest::new(STYLE_SYSTEM, user, s.seed, TextTask::SuggestStyle { options });
            #[derive(Deserialize)]
            struct Pick {
                style: String,
            }
            let (name, _) = complete_structured(self.backends.text.as_ref(), &request, |text| {
                let p: Pick = parse_json(text)?;
                let name = p.style.trim().to_lowercase();
                if NAMED_STYLES.contains(&name.as_str()) {
                    Ok(name)
                } else {
                    Err(format!("{:?} is not an offered style", p.style))
                }
            })?;
            s.style = named_style(&name);
        }
        if let Some(style) = &mut s.style {
            style.canonicalize();
        }
        Ok(())
    }

    fn run_theme(&self, s: &mut SessionState, params: &AdvanceParams) -> Result<()> {
        let keywords = extract_keywords(&s.input_text, &self.config.extraction)?;
        let k = params.k.unwrap_or_else(|| default_k(keywords.len()));
        let linkage = params.linkage.unwrap_or(self.config.linkage);
        let clustering = cluster(&keywords, linkage, k)?;
        let groups = clustering.groups(&keywords);
        let (theme, concepts) = derive_theme(&groups, &s.input_text, Some(self.backends.text.as_ref()), s.seed)?;
        s.theme = Some(theme);
        s.concepts = concepts;
        Ok(())
    }

    fn run_composition(&self, s: &mut SessionState, params: &AdvanceParams) -> Result<()> {
        let template = match &params.template_id {
            Some(id) => self.template(id)?,
            None => select_composition(&s.concepts, &self.config.templates)?,
        };
        s.template_id = Some(template.id);
        Ok(())
    }

    fn run_detailing(&self, s: &mut SessionState, params: &AdvanceParams) -> Result<()> {
        let template = self.template(s.template_id.as_deref().unwrap_or_default())?;
        let style = s.style.clone().ok_or_else(|| missing(s, "style"))?;
        let theme = s.theme.clone().ok_or_else(|| missing(s, "theme"))?;
        let text = self.backends.text.as_ref();
        let mut scene = populate_scene(&theme, &s.concepts, &template, &style, Some(text), s.seed)?;
        scene.canvas = self.config.canvas.clone();
        let expansion = params.expansion.unwrap_or(self.config.expansion);
        let scene = expand_recursive(&scene, &ExpansionTarget::AllRoots, &expansion, text)?;
        let lighting = params.lighting.clone().unwrap_or_else(|| self.config.lighting.clone());
        let scene = apply_lighting(&scene, &lighting);
        check(
            &scene,
            &template,
            expansion.element_budget.max(self.config.expansion.element_budget),
        )?;
        s.current_scene = Some(scene);
        Ok(())
    }

    fn run_generate(&self, s: &mut SessionState, user_edits: Vec<SceneEdit>) -> Result<()> {
        let scene = s.current_scene.clone().ok_or_else(|| missing(s, "scene"))?;
        let template = self.template(&scene.template_id)?;
        let prompt = compile_prompt_with(&scene, &template, &self.config.prompt)?;
        let hash = scene_hash(&scene)?;
        let index = s.iterations.len() as u64;
        let dir = self.config.runs_dir.join(&s.id).join(format!("iter-{index}"));
        let client = self.backends.image.client_for(&scene, &template, &dir);
        let image = image_generate(
            client.as_ref(),
            &ImageRequest {
                prompt: prompt.clone(),
                width_px: scene.canvas.width_px,
                height_px: scene.canvas.height_px,
                seed: scene.seed,
            },
        )?;
        let write = |name: &str, text: &str| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write("prompt.txt", &prompt)?;
        write("scene.json", &serialize_scene(&scene)?)?;
        s.iterations.push(IterationRecord {
            index,
            scene_snapshot: scene,
            compiled_prompt: prompt,
            scene_hash: hash,
            image_ref: Some(image.image_ref),
            user_edits,
            timestamp: Utc::now(),
        });
        Ok(())
    }

    /// Applies `edits` to the current scene, fuses it with every earlier
    /// iteration, optionally re-expands, and generates a new iteration.
    pub fn iterate(&self, id: &str, edits: &[SceneEdit], expand: Option<&ExpansionConfig>) -> Result<SessionState> {
        let lock = self.lock_for(id);
        let _guard = lock.lock();
        let state = self.store.load(id)?;
        let next = self.iterate_state(&state, edits, expand)?;
        self.store.save(&next)?;
        Ok(next)
    }

    pub fn iterate_state(
        &self,
        state: &SessionState,
        edits: &[SceneEdit],
        expand: Option<&ExpansionConfig>,
    ) -> Result<SessionState> {
        if state.iterations.is_empty() {
            return Err(Error::StageOrderViolation {
                stage: state.stage.name().to_string(),
                action: "iterate before the first generation".to_string(),
            });
        }
        let mut s = state.clone();
        let current = s.current_scene.clone().ok_or_else(|| missing(&s, "scene"))?;
        let template = self.template(&current.template_id)?;

        let working = apply_edits(&scene_to_detailset(&current)?, edits)?;
        let history: Vec<DetailSet> = s
            .iterations
            .iter()
            .map(|r| scene_to_detailset(&r.scene_snapshot))
            .collect::<Result<_>>()?;
        let backend = self.config.fuse_with_backend.then(|| self.backends.text.as_ref());
        let mut fused = fuse_history(&history, &working, backend)?;
        let dead = tombstones(s.iterations.iter().flat_map(|r| r.user_edits.iter()).chain(edits));
        fused
            .entries
            .retain(|path, _| working.get(path).is_some() || !is_buried(path, &dead));

        let mut scene = detailset_to_scene(&fused, &current)?;
        if let Some(cfg) = expand {
            scene = expand_recursive(&scene, &ExpansionTarget::AllRoots, cfg, self.backends.text.as_ref())?;
        }
        let budget = [
            self.config.expansion.element_budget,
            expand.map_or(0, |c| c.element_budget),
            current.element_count(),
        ];
        check(&scene, &template, budget.into_iter().max().unwrap_or_default())?;
        if serialize_scene(&scene)? != serialize_scene(&current)? {
            scene.iteration_index = current.iteration_index + 1;
        }
        s.current_scene = Some(scene);
        self.run_generate(&mut s, edits.to_vec())?;
        s.stage = Stage::Generate;
        s.updated_at = Utc::now();
        normalize(s)
    }

    /// All six stages in one call: a new session advanced to its first
    /// generation, with `template_id` honored at the composition stage.
    pub fn art_image_creation(&self, text: &str, template_id: Option<&str>, seed: u64) -> Result<Creation> {
        if let Some(id) = template_id {
            self.template(id)?;
        }
        let params = AdvanceParams {
            template_id: template_id.map(str::to_string),
            ..Default::default()
        };
        let mut state = self.create(NewSession::new(text, seed))?;
        while state.iterations.is_empty() {
            state = self.advance(&state.id, &params)?;
        }
        let record = state.iterations.last().expect("one iteration");
        Ok(Creation {
            session_id: state.id.clone(),
            scene: record.scene_snapshot.clone(),
            prompt: record.compiled_prompt.clone(),
            image_ref: record.image_ref.clone(),
        })
    }

    fn record<'a>(&self, state: &'a SessionState, n: usize) -> Result<&'a IterationRecord> {
        state
            .iterations
            .get(n)
            .ok_or_else(|| Error::PathNotFound(format!("iterations/{n}")))
    }

    pub fn iteration_svg(&self, id: &str, n: usize) -> Result<String> {
        let state = self.store.load(id)?;
        let record = self.record(&state, n)?;
        render_debug_svg(
            &record.scene_snapshot,
            &self.template(&record.scene_snapshot.template_id)?,
        )
    }

    pub fn iteration_prompt(&self, id: &str, n: usize) -> Result<String> {
        let state = self.store.load(id)?;
        Ok(self.record(&state, n)?.compiled_prompt.clone())
    }
}

fn missing(s: &SessionState, what: &str) -> Error {
    Error::StageOrderViolation {
        stage: s.stage.name().to_string(),
        action: format!("continue without a {what}"),
    }
}

fn check(scene: &SceneGraph, template: &CompositionTemplate, budget: usize) -> Result<()> {
    let violations = validate_scene_with_budget(scene, template, budget);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidScene(violations))
    }
}

/// Round-trips through the persisted form so that in-memory and stored
/// states are identical, numbers included.
fn normalize(state: SessionState) -> Result<SessionState> {
    let mut s = session_from_json(&session_to_json(&state)?, "session")?;
    if let Some(scene) = &mut s.current_scene {
        scene.canonicalize();
    }
    Ok(s)
}
