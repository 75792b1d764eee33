//! Filling the scene: one root per concept, recursive expansion into
//! sub-elements, fusion of details across iterations, and lighting.

use serde::{Deserialize, Serialize};

use crate::backends::structured::parse_json;
use crate::backends::{complete_structured, TextClient, TextRequest, TextTask};
use crate::composition::assign_regions_ordered;
use crate::error::{Error, Result};
use crate::palette::color_for;
use crate::scene_model::{
    validate_structure, validate_template, ColorSpec, CompositionTemplate, DetailRecord, DetailSet, LightingSpec,
    SceneElement, SceneGraph, StyleSpec, ThemeConcept,
};

/// Margin kept between a region and the root element placed in it.
pub const REGION_MARGIN: f64 = 0.1;
/// Margin kept between a grid cell and the child placed in it.
pub const CELL_MARGIN: f64 = 0.05;
pub const DEFAULT_CONTRAST: f64 = 0.5;
/// Contrast gained per unit of shadow strength.
pub const SHADOW_CONTRAST_GAIN: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    pub max_depth: usize,
    pub max_children: usize,
    pub element_budget: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            max_depth: 2,
            max_children: 4,
            element_budget: crate::scene_model::DEFAULT_ELEMENT_BUDGET,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_children == 0 || self.element_budget == 0 {
            return Err(Error::parse(
                "expansion config",
                "max_children and element_budget must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpansionTarget {
    AllRoots,
    Path(String),
}

pub(crate) const DESCRIBE_SYSTEM: &str = "You write one-sentence visual descriptions of elements in an illustration. \
Reply with the sentence only.";

pub(crate) const EXPAND_SYSTEM: &str = "You break an element of an illustration into visible sub-elements. \
Reply with JSON only: {\"children\": [{\"name\": ..., \"position\": ..., \"description\": ...}]}.";

pub(crate) const FUSE_SYSTEM: &str = "You merge two descriptions of the same illustration element into one. \
Keep what the newer one says and add compatible detail from the older one. Reply with the description only.";

pub fn fallback_description(label: &str) -> String {
    format!("a depiction of {label}")
}

/// One root element per concept, placed in its assigned region.
///
/// Roots are numbered `e1, e2, ...` in concept rank order. Content comes
/// from `backend` when given, otherwise [`fallback_description`]; colors
/// come from the fixed palette keyed on `(seed, label)`.
pub fn populate_scene(
    theme: &str,
    concepts: &[ThemeConcept],
    template: &CompositionTemplate,
    style: &StyleSpec,
    backend: Option<&dyn TextClient>,
    seed: u64,
) -> Result<SceneGraph> {
    if let Some(v) = validate_template(template).into_iter().next() {
        return Err(Error::InvalidTemplate {
            rule: v.rule,
            detail: v.detail,
        });
    }
    let mut scene = SceneGraph::empty(&template.id, style.clone());
    scene.theme = theme.to_string();
    scene.theme_concepts = concepts.to_vec();
    scene.seed = seed;

    for (i, (concept, region_id)) in assign_regions_ordered(concepts, template).into_iter().enumerate() {
        let region = template.region(&region_id).expect("assigned region exists");
        let content = match backend {
            None => fallback_description(&concept.label),
            Some(client) => {
                let user = format!(
                    "Theme: {theme}\nElement: {}\nRelated keywords: {}\nDescribe how this element looks in the illustration.",
                    concept.label,
                    concept.keywords.join(", ")
                );
                let task = TextTask::Describe {
                    label: concept.label.clone(),
                    theme: theme.to_string(),
                };
                let reply = client.complete(&TextRequest::new(DESCRIBE_SYSTEM, user, seed, task))?;
                let text = reply.text.trim();
                if text.is_empty() {
                    fallback_description(&concept.label)
                } else {
                    text.to_string()
                }
            }
        };
        let id = format!("e{}", i + 1);
        let mut root = SceneElement::leaf(None, &id, region.bbox.inset(REGION_MARGIN), &content);
        root.region_id = Some(region_id.clone());
        root.color = Some(ColorSpec::solid(color_for(seed, &concept.label), DEFAULT_CONTRAST));
        root.z_order = i as i64;
        scene.elements.push(root);
    }
    scene.canonicalize();
    Ok(scene)
}

#[derive(Debug, Clone, Deserialize)]
struct ProposedChild {
    name: String,
    #[serde(default)]
    position: String,
    description: String,
}

#[derive(Debug, Clone, Deserialize)]
struct Proposal {
    children: Vec<ProposedChild>,
}

/// Lowercase, dash-separated id for a proposed child name.
pub fn slugify(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        "part".to_string()
    } else {
        out
    }
}

struct Expander<'a> {
    backend: &'a dyn TextClient,
    config: ExpansionConfig,
    theme: String,
    seed: u64,
    count: usize,
}

impl Expander<'_> {
    fn full(&self) -> bool {
        self.count >= self.config.element_budget
    }

    fn propose(&self, element: &SceneElement) -> Result<Vec<ProposedChild>> {
        let n = self.config.max_children;
        let user = format!(
            "Theme: {}\nElement: {}\nList at most {n} visible sub-elements of this element, each with a short name, \
             a position hint inside the element, and a one-sentence description.",
            self.theme, element.content
        );
        let task = TextTask::Expand {
            parent: element.content.clone(),
            max_children: n,
        };
        let request = TextRequest::new(EXPAND_SYSTEM, user, self.seed, task);
        let (proposal, _) = complete_structured(self.backend, &request, |text| {
            let p: Proposal = parse_json(text)?;
            if p.children.iter().any(|c| c.description.trim().is_empty()) {
                return Err("a child has an empty description".to_string());
            }
            Ok(p)
        })?;
        let mut children = proposal.children;
        children.truncate(n);
        Ok(children)
    }

    fn expand(&mut self, element: &mut SceneElement, depth_left: usize) -> Result<()> {
        if depth_left == 0 || self.full() {
            return Ok(());
        }
        if element.children.is_empty() {
            let proposed = self.propose(element)?;
            let n = proposed.len();
            if n == 0 {
                return Ok(());
            }
            let cols = (n as f64).sqrt().ceil() as usize;
            let rows = n.div_ceil(cols);
            for (i, child) in proposed.into_iter().enumerate() {
                if self.full() {
                    break;
                }
                let mut id = slugify(&child.name);
                if element.children.iter().any(|c| c.id == id) {
                    let base = id.clone();
                    let mut k = 2;
                    while element.children.iter().any(|c| c.id == id) {
                        id = format!("{base}-{k}");
                        k += 1;
                    }
                }
                tracing::trace!(position = %child.position, "placing child {id} in grid cell {i}");
                let bbox = element.bbox.grid_cell(cols, rows, i).inset(CELL_MARGIN);
                let mut e = SceneElement::leaf(Some(&element.path), &id, bbox, child.description.trim());
                e.z_order = i as i64;
                element.children.push(e);
                self.count += 1;
                let last = element.children.len() - 1;
                self.expand(&mut element.children[last], depth_left - 1)?;
            }
        } else {
            for child in &mut element.children {
                self.expand(child, depth_left - 1)?;
            }
        }
        Ok(())
    }
}

/// Expands the target element(s) depth-first, up to `max_depth` levels
/// below each target.
///
/// Childless elements ask the backend for sub-elements, which are laid out
/// row-major on a grid of `ceil(sqrt(n))` columns inside the parent.
/// Elements that already have children are not re-asked; the walk descends
/// into the existing children instead. Elements are added in pre-order and
/// adding stops as soon as the scene holds `element_budget` elements.
pub fn expand_recursive(
    scene: &SceneGraph,
    target: &ExpansionTarget,
    config: &ExpansionConfig,
    backend: &dyn TextClient,
) -> Result<SceneGraph> {
    config.validate()?;
    let violations = validate_structure(scene, usize::MAX);
    if !violations.is_empty() {
        return Err(Error::InvalidScene(violations));
    }
    let mut out = scene.clone().canonical();
    let mut expander = Expander {
        backend,
        config: *config,
        theme: out.theme.clone(),
        seed: out.seed,
        count: out.element_count(),
    };
    match target {
        ExpansionTarget::AllRoots => {
            for root in &mut out.elements {
                expander.expand(root, config.max_depth)?;
            }
        }
        ExpansionTarget::Path(path) => {
            let element = out.find_mut(path).ok_or(Error::PathNotFound(path.clone()))?;
            expander.expand(element, config.max_depth)?;
        }
    }
    out.canonicalize();
    Ok(out)
}

fn pick<T: Clone>(
    current: Option<&DetailRecord>,
    history: &[&DetailRecord],
    field: impl Fn(&DetailRecord) -> &Option<T>,
) -> Option<T> {
    current
        .and_then(|r| field(r).clone())
        .or_else(|| history.iter().rev().find_map(|r| field(r).clone()))
}

/// Merges `current` with earlier iterations, field by field.
///
/// The result has every path seen anywhere. For each field, the current
/// value wins when present; otherwise the latest history entry that has the
/// field supplies it. With a backend, content that differs from the latest
/// historical content is rewritten into one merged description.
pub fn fuse_history(history: &[DetailSet], current: &DetailSet, backend: Option<&dyn TextClient>) -> Result<DetailSet> {
    let mut paths: std::collections::BTreeSet<&str> = current.paths().collect();
    for h in history {
        paths.extend(h.paths());
    }
    let mut out = DetailSet::new();
    for path in paths {
        let cur = current.get(path);
        let past: Vec<&DetailRecord> = history.iter().filter_map(|h| h.get(path)).collect();
        let mut record = DetailRecord {
            content: pick(cur, &past, |r| &r.content),
            bbox: pick(cur, &past, |r| &r.bbox),
            style: pick(cur, &past, |r| &r.style),
            color: pick(cur, &past, |r| &r.color),
            z_order: pick(cur, &past, |r| &r.z_order),
            region_id: pick(cur, &past, |r| &r.region_id),
        };
        if let (Some(client), Some(now)) = (backend, cur.and_then(|r| r.content.as_ref())) {
            if let Some(before) = past.iter().rev().find_map(|r| r.content.as_ref()) {
                if before != now {
                    let user =
                        format!("Newer description: {now}\nOlder description: {before}\nWrite the merged description.");
                    let task = TextTask::Fuse {
                        current: now.clone(),
                        previous: before.clone(),
                    };
                    let reply = client.complete(&TextRequest::new(FUSE_SYSTEM, user, 0, task))?;
                    let merged = reply.text.trim();
                    if !merged.is_empty() {
                        record.content = Some(merged.to_string());
                    }
                }
            }
        }
        out.insert(path, record);
    }
    Ok(out)
}

/// Replaces the lighting and raises every explicit color's contrast by
/// `0.3 * shadow_strength`, clamped to `[0, 1]`. Inheriting elements pick
/// up the change through their ancestor.
pub fn apply_lighting(scene: &SceneGraph, lighting: &LightingSpec) -> SceneGraph {
    fn go(elements: &mut [SceneElement], gain: f64) {
        for e in elements {
            if let Some(c) = &mut e.color {
                c.contrast = (c.contrast + gain).clamp(0.0, 1.0);
            }
            go(&mut e.children, gain);
        }
    }
    let mut out = scene.clone();
    out.lighting = lighting.clone();
    go(&mut out.elements, SHADOW_CONTRAST_GAIN * lighting.shadow_strength);
    out
}
