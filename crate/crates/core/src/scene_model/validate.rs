use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::*;

/// A broken invariant, located by element path (empty for scene-level rules).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub rule: String,
    pub detail: String,
}

impl Violation {
    pub fn new(path: &str, rule: &str, detail: impl Into<String>) -> Self {
        Violation {
            path: path.to_string(),
            rule: rule.to_string(),
            detail: detail.into(),
        }
    }
}

/// Checks every scene and element invariant against `template` with the
/// default element budget. An empty result means the scene is valid.
pub fn validate_scene(scene: &SceneGraph, template: &CompositionTemplate) -> Vec<Violation> {
    validate_scene_with_budget(scene, template, DEFAULT_ELEMENT_BUDGET)
}

pub fn validate_scene_with_budget(
    scene: &SceneGraph,
    template: &CompositionTemplate,
    element_budget: usize,
) -> Vec<Violation> {
    let mut out = validate_structure(scene, element_budget);
    if scene.template_id != template.id {
        out.push(Violation::new(
            "",
            "template-mismatch",
            format!("scene uses {:?}, checked against {:?}", scene.template_id, template.id),
        ));
    }
    for (_, e) in scene.walk() {
        if let Some(r) = &e.region_id {
            if template.region(r).is_none() {
                out.push(Violation::new(
                    &e.path,
                    "unknown-region",
                    format!("region {r:?} not in template {:?}", template.id),
                ));
            }
        }
    }
    out
}

/// The template-independent subset of [`validate_scene`].
pub fn validate_structure(scene: &SceneGraph, element_budget: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    check_canvas(&scene.canvas, &mut out);
    check_style("", &scene.style, &mut out);
    if !(0.0..=1.0).contains(&scene.lighting.shadow_strength) {
        out.push(Violation::new(
            "",
            "shadow-out-of-range",
            format!("shadow_strength {}", scene.lighting.shadow_strength),
        ));
    }
    check_concepts(&scene.theme_concepts, &mut out);

    let mut seen = HashSet::new();
    for e in &scene.elements {
        check_element(e, None, &mut seen, &mut out);
    }
    let count = scene.element_count();
    if count > element_budget {
        out.push(Violation::new(
            "",
            "budget-exceeded",
            format!("{count} elements, budget {element_budget}"),
        ));
    }
    out
}

/// Template invariants; the first violated rule name is returned.
pub fn validate_template(t: &CompositionTemplate) -> Vec<Violation> {
    let mut out = Vec::new();
    if t.id.is_empty() {
        out.push(Violation::new("", "empty-id", "template id is empty"));
    }
    let mut ids = HashSet::new();
    for r in &t.regions {
        if !ids.insert(r.id.as_str()) {
            out.push(Violation::new(&r.id, "duplicate-region-id", "region id repeated"));
        }
        if !r.bbox.is_normalized() {
            out.push(Violation::new(&r.id, "bbox-out-of-range", format!("{:?}", r.bbox)));
        }
        if !(0.0..=1.0).contains(&r.salience) {
            out.push(Violation::new(
                &r.id,
                "salience-out-of-range",
                format!("salience {}", r.salience),
            ));
        }
    }
    if t.focal_count() == 0 {
        out.push(Violation::new("", "needs-focal", "no region has role focal"));
    }
    let cov = t.coverage();
    if cov < 0.9 {
        out.push(Violation::new(
            "",
            "coverage",
            format!("regions cover {:.2}% of the canvas, need 90%", cov * 100.0),
        ));
    }
    out
}

fn check_canvas(c: &Canvas, out: &mut Vec<Violation>) {
    if c.width_px < MIN_CANVAS_PX || c.height_px < MIN_CANVAS_PX {
        out.push(Violation::new(
            "",
            "canvas-too-small",
            format!("{}x{}", c.width_px, c.height_px),
        ));
    }
    if let Some(label) = &c.aspect_label {
        let actual = c.width_px as f64 / c.height_px.max(1) as f64;
        match Canvas::parse_aspect(label) {
            Some(r) if ((r - actual) / actual).abs() <= 0.01 => {}
            _ => out.push(Violation::new(
                "",
                "aspect-mismatch",
                format!("label {label:?} vs {}x{}", c.width_px, c.height_px),
            )),
        }
    }
}

fn check_style(path: &str, s: &StyleSpec, out: &mut Vec<Violation>) {
    if !s.is_canonical() {
        out.push(Violation::new(
            path,
            "modifiers-not-canonical",
            "modifiers must be sorted and unique",
        ));
    }
    if s.abstraction_level > StyleSpec::MAX_ABSTRACTION {
        out.push(Violation::new(
            path,
            "abstraction-out-of-range",
            format!("abstraction_level {}", s.abstraction_level),
        ));
    }
}

fn check_color(path: &str, c: &ColorSpec, out: &mut Vec<Violation>) {
    for h in std::iter::once(&c.primary_hex).chain(c.palette.iter()) {
        if !is_canonical_hex(h) {
            out.push(Violation::new(path, "invalid-hex", format!("{h:?}")));
        }
    }
    if c.palette.len() > ColorSpec::MAX_PALETTE {
        out.push(Violation::new(
            path,
            "palette-too-long",
            format!("{} colors", c.palette.len()),
        ));
    }
    if !(0.0..=1.0).contains(&c.contrast) {
        out.push(Violation::new(
            path,
            "contrast-out-of-range",
            format!("contrast {}", c.contrast),
        ));
    }
}

fn check_concepts(concepts: &[ThemeConcept], out: &mut Vec<Violation>) {
    if concepts.is_empty() {
        return;
    }
    for c in concepts {
        if c.keywords.is_empty() {
            out.push(Violation::new("", "concept-keywords-empty", c.label.clone()));
        }
        if !(c.weight > 0.0 && c.weight <= 1.0) {
            out.push(Violation::new(
                "",
                "concept-weight-out-of-range",
                format!("{} has weight {}", c.label, c.weight),
            ));
        }
    }
    let sum: f64 = concepts.iter().map(|c| c.weight).sum();
    // 1e-6 on computed weights, plus the rounding of each serialized weight
    let tolerance = 1e-6 + concepts.len() as f64 * 0.5e-6;
    if (sum - 1.0).abs() > tolerance {
        out.push(Violation::new(
            "",
            "concept-weights-sum",
            format!("weights sum to {sum}"),
        ));
    }
}

fn check_element<'a>(
    e: &'a SceneElement,
    parent: Option<&SceneElement>,
    seen: &mut HashSet<&'a str>,
    out: &mut Vec<Violation>,
) {
    let path = e.path.as_str();
    if !is_valid_id(&e.id) {
        out.push(Violation::new(path, "invalid-id", format!("{:?}", e.id)));
    }
    let expected = join_path(parent.map(|p| p.path.as_str()), &e.id);
    if e.path != expected {
        out.push(Violation::new(path, "path-mismatch", format!("expected {expected:?}")));
    }
    if !seen.insert(path) {
        out.push(Violation::new(path, "duplicate-path", "path used twice"));
    }
    if e.content.trim().is_empty() {
        out.push(Violation::new(path, "empty-content", "content is blank"));
    }
    if !e.bbox.is_normalized() {
        out.push(Violation::new(path, "bbox-out-of-range", format!("{:?}", e.bbox)));
    } else if let Some(p) = parent {
        if !p.bbox.contains(&e.bbox, BBOX_EPSILON) {
            out.push(Violation::new(
                path,
                "bbox-not-contained",
                format!("{:?} outside parent {:?}", e.bbox, p.bbox),
            ));
        }
    }
    if let Some(s) = &e.style {
        check_style(path, s, out);
    }
    if let Some(c) = &e.color {
        check_color(path, c, out);
    }
    for c in &e.children {
        check_element(c, Some(e), seen, out);
    }
}
