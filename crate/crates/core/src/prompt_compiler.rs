//! Deterministic outputs of a scene: canonical JSON, its hash, the image
//! prompt, and a debug SVG.

use std::fmt::Write as _;

use crate::canonical::{format_decimal, sha256_hex, to_canonical_string};
use crate::error::{Error, Result};
use crate::palette::nearest_name;
use crate::scene_model::{
    validate_scene_with_budget, validate_structure, CompositionTemplate, SceneElement, SceneGraph,
};

fn ensure_structure(scene: &SceneGraph) -> Result<()> {
    let v = validate_structure(scene, usize::MAX);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidScene(v))
    }
}

fn ensure_valid(scene: &SceneGraph, template: &CompositionTemplate) -> Result<()> {
    let v = validate_scene_with_budget(scene, template, usize::MAX);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidScene(v))
    }
}

fn num(x: f64) -> String {
    format_decimal(x).unwrap_or_else(|_| "0".to_string())
}

/// Canonical JSON of the scene (canonical form is applied to a copy first).
pub fn serialize_scene(scene: &SceneGraph) -> Result<String> {
    ensure_structure(scene)?;
    let canonical = scene.clone().canonical();
    to_canonical_string(&canonical).map_err(|e| Error::parse("scene", e))
}

/// Parses any well-formed scene JSON and returns it in canonical form.
pub fn deserialize_scene(text: &str) -> Result<SceneGraph> {
    let scene: SceneGraph = serde_json::from_str(text).map_err(|e| Error::parse("scene JSON", e))?;
    let scene = scene.canonical();
    ensure_structure(&scene)?;
    Ok(scene)
}

/// Lowercase hex SHA-256 of the canonical serialization.
pub fn scene_hash(scene: &SceneGraph) -> Result<String> {
    Ok(sha256_hex(&serialize_scene(scene)?))
}

/// Two scenes are canonically equal when their canonical texts match.
pub fn canonical_eq(a: &SceneGraph, b: &SceneGraph) -> bool {
    match (serialize_scene(a), serialize_scene(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Cell name of a point on a 3×3 grid over the canvas.
pub fn position_phrase(x: f64, y: f64) -> &'static str {
    const NAMES: [[&str; 3]; 3] = [
        ["upper left", "upper center", "upper right"],
        ["middle left", "center", "middle right"],
        ["lower left", "lower center", "lower right"],
    ];
    let band = |v: f64| {
        if v < 1.0 / 3.0 {
            0
        } else if v < 2.0 / 3.0 {
            1
        } else {
            2
        }
    };
    NAMES[band(y)][band(x)]
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptOptions {
    /// Appended verbatim as the final line, e.g. backend-specific flags.
    pub suffix: Option<String>,
}

pub fn compile_prompt(scene: &SceneGraph, template: &CompositionTemplate) -> Result<String> {
    compile_prompt_with(scene, template, &PromptOptions::default())
}

/// Renders the image prompt, one sentence per line in a fixed order:
/// theme, style, composition, one line per element grouped by template
/// region, lighting. Element ids and paths never appear.
pub fn compile_prompt_with(
    scene: &SceneGraph,
    template: &CompositionTemplate,
    options: &PromptOptions,
) -> Result<String> {
    ensure_valid(scene, template)?;
    let scene = scene.clone().canonical();
    let mut out = String::new();

    let _ = writeln!(out, "Theme: {}.", scene.theme.trim());

    let style = &scene.style;
    let _ = write!(
        out,
        "Style: {}, abstraction level {} of 10",
        style.style_name, style.abstraction_level
    );
    if !style.modifiers.is_empty() {
        let _ = write!(out, ", with {}", style.modifiers.join(", "));
    }
    out.push_str(".\n");

    let walk = scene.walk();
    if !walk.is_empty() {
        let _ = writeln!(out, "Composition: {}, {}.", template.name, template.description);
        let mut groups: Vec<Vec<&SceneElement>> = vec![Vec::new(); template.regions.len() + 1];
        for (_, e) in &walk {
            let slot = scene
                .effective_region(&e.path)
                .and_then(|r| template.regions.iter().position(|t| t.id == r))
                .unwrap_or(template.regions.len());
            groups[slot].push(e);
        }
        for e in groups.into_iter().flatten() {
            let (cx, cy) = e.bbox.center();
            let _ = write!(
                out,
                "At the {}: {}; color {}",
                position_phrase(cx, cy),
                e.content.trim(),
                nearest_name(&scene.effective_hex(&e.path))
            );
            if let Some(s) = &e.style {
                let _ = write!(out, "; style {}", s.style_name);
                if !s.modifiers.is_empty() {
                    let _ = write!(out, " ({})", s.modifiers.join(", "));
                }
            }
            out.push_str(".\n");
        }
    }

    let l = &scene.lighting;
    let _ = write!(
        out,
        "Lighting: light {}, {} mood, shadow strength {}",
        l.light_direction.phrase(),
        l.mood.trim(),
        num(l.shadow_strength)
    );
    if l.reflection {
        out.push_str(", with reflections");
    }
    out.push_str(".\n");

    if let Some(suffix) = options.suffix.as_deref().filter(|s| !s.trim().is_empty()) {
        out.push_str(suffix.trim());
        out.push('\n');
    }
    Ok(out)
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

const LABEL_CHARS: usize = 32;

/// SVG 1.1 at canvas size: a dashed outline per template region, then a
/// filled, labelled rectangle per element in pre-order. Fill opacity falls
/// off with depth.
pub fn render_debug_svg(scene: &SceneGraph, template: &CompositionTemplate) -> Result<String> {
    ensure_valid(scene, template)?;
    let scene = scene.clone().canonical();
    let (w, h) = (scene.canvas.width_px as f64, scene.canvas.height_px as f64);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        scene.canvas.width_px, scene.canvas.height_px, scene.canvas.width_px, scene.canvas.height_px
    );
    out.push_str("<g class=\"regions\">\n");
    for r in &template.regions {
        let _ = writeln!(
            out,
            r##"<rect class="region" data-region="{}" data-role="{}" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#999999" stroke-dasharray="8 4"/>"##,
            escape_xml(&r.id),
            serde_json::to_value(r.role)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            num(r.bbox.x0 * w),
            num(r.bbox.y0 * h),
            num(r.bbox.width() * w),
            num(r.bbox.height() * h),
        );
    }
    out.push_str("</g>\n<g class=\"elements\">\n");
    for (depth, e) in scene.walk() {
        let opacity = 0.8 * 0.75f64.powi(depth as i32);
        let _ = writeln!(
            out,
            r#"<rect class="element" x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="{}"/>"#,
            num(e.bbox.x0 * w),
            num(e.bbox.y0 * h),
            num(e.bbox.width() * w),
            num(e.bbox.height() * h),
            scene.effective_hex(&e.path),
            num(opacity),
        );
        let mut label: String = e.content.trim().chars().take(LABEL_CHARS).collect();
        if e.content.trim().chars().count() > LABEL_CHARS {
            label.push_str("...");
        }
        let _ = writeln!(
            out,
            r#"<text class="label" x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            num(e.bbox.x0 * w + 4.0),
            num(e.bbox.y0 * h + 14.0),
            escape_xml(&label),
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}
