//! The quantified scene: canvas, regions, elements and their four dimensions
//! (content, position, style, color).
//!
//! Coordinates are normalized to the unit square with the origin at the top
//! left, so a scene renders at any canvas size. Children always sit inside
//! their parent's box. Elements without an explicit style or color inherit
//! from the nearest ancestor that has one, then from the scene.

mod detail;
mod validate;

use serde::{Deserialize, Serialize};

pub use detail::{detailset_to_scene, scene_to_detailset, DetailRecord, DetailSet};
pub use validate::{validate_scene, validate_scene_with_budget, validate_structure, validate_template, Violation};

/// Default cap on the number of elements in a scene, across all depths.
pub const DEFAULT_ELEMENT_BUDGET: usize = 64;

/// Minimum canvas edge in pixels.
pub const MIN_CANVAS_PX: u32 = 64;

/// Containment slack for child boxes.
pub const BBOX_EPSILON: f64 = 1e-9;

/// Axis-aligned rectangle in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// `0 ≤ x0 < x1 ≤ 1` and `0 ≤ y0 < y1 ≤ 1`. NaN fails.
    pub fn is_normalized(&self) -> bool {
        0.0 <= self.x0 && self.x0 < self.x1 && self.x1 <= 1.0 && 0.0 <= self.y0 && self.y0 < self.y1 && self.y1 <= 1.0
    }

    pub fn contains(&self, inner: &Rect, eps: f64) -> bool {
        inner.x0 >= self.x0 - eps && inner.y0 >= self.y0 - eps && inner.x1 <= self.x1 + eps && inner.y1 <= self.y1 + eps
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    /// Shrinks each side by `fraction` of the corresponding extent.
    pub fn inset(&self, fraction: f64) -> Rect {
        let dx = self.width() * fraction;
        let dy = self.height() * fraction;
        Rect::new(self.x0 + dx, self.y0 + dy, self.x1 - dx, self.y1 - dy)
    }

    /// Cell `index` of a row-major grid with `cols` columns and `rows` rows.
    pub fn grid_cell(&self, cols: usize, rows: usize, index: usize) -> Rect {
        let col = index % cols;
        let row = index / cols;
        let w = self.width() / cols as f64;
        let h = self.height() / rows as f64;
        let x0 = self.x0 + w * col as f64;
        let y0 = self.y0 + h * row as f64;
        // Last row/column snap to the parent edge so rounding never escapes it.
        let x1 = if col + 1 == cols { self.x1 } else { x0 + w };
        let y1 = if row + 1 == rows { self.y1 } else { y0 + h };
        Rect::new(x0, y0, x1, y1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect_label: Option<String>,
}

impl Canvas {
    pub fn new(width_px: u32, height_px: u32) -> Self {
        Canvas {
            width_px,
            height_px,
            aspect_label: None,
        }
    }

    pub fn with_aspect(mut self, label: &str) -> Self {
        self.aspect_label = Some(label.to_string());
        self
    }

    /// Parses `"W:H"` into a ratio.
    pub fn parse_aspect(label: &str) -> Option<f64> {
        let (w, h) = label.split_once(':')?;
        let w: f64 = w.trim().parse().ok()?;
        let h: f64 = h.trim().parse().ok()?;
        (w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()).then(|| w / h)
    }
}

impl Default for Canvas {
    fn default() -> Self {
        Canvas::new(1024, 1024).with_aspect("1:1")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionRole {
    Focal,
    Support,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub bbox: Rect,
    pub role: RegionRole,
    pub salience: f64,
}

/// A named partition of the canvas into weighted regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionTemplate {
    pub id: String,
    pub name: String,
    pub regions: Vec<Region>,
    pub description: String,
}

impl CompositionTemplate {
    pub fn region(&self, id: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub fn focal_count(&self) -> usize {
        self.regions.iter().filter(|r| r.role == RegionRole::Focal).count()
    }

    /// Fraction of the unit square covered by the union of region boxes,
    /// sampled at cell centers of a 100×100 grid.
    pub fn coverage(&self) -> f64 {
        const N: usize = 100;
        let mut hit = 0usize;
        for i in 0..N {
            let y = (i as f64 + 0.5) / N as f64;
            for j in 0..N {
                let x = (j as f64 + 0.5) / N as f64;
                if self.regions.iter().any(|r| r.bbox.contains_point(x, y)) {
                    hit += 1;
                }
            }
        }
        hit as f64 / (N * N) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorSpec {
    pub primary_hex: String,
    #[serde(default)]
    pub palette: Vec<String>,
    pub contrast: f64,
}

impl ColorSpec {
    pub const MAX_PALETTE: usize = 6;

    pub fn solid(hex: &str, contrast: f64) -> Self {
        ColorSpec {
            primary_hex: normalize_hex(hex).unwrap_or_else(|| hex.to_string()),
            palette: Vec::new(),
            contrast,
        }
    }

    pub fn canonicalize(&mut self) {
        if let Some(h) = normalize_hex(&self.primary_hex) {
            self.primary_hex = h;
        }
        for p in &mut self.palette {
            if let Some(h) = normalize_hex(p) {
                *p = h;
            }
        }
    }
}

/// Uppercases a `#rrggbb` string; `None` if it is not six hex digits.
pub fn normalize_hex(s: &str) -> Option<String> {
    let digits = s.strip_prefix('#')?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    Some(format!("#{}", digits.to_ascii_uppercase()))
}

/// Canonical `#RRGGBB` form.
pub fn is_canonical_hex(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b))
}

pub fn hex_to_rgb(s: &str) -> Option<(u8, u8, u8)> {
    let h = normalize_hex(s)?;
    let v = u32::from_str_radix(&h[1..], 16).ok()?;
    Some(((v >> 16) as u8, (v >> 8) as u8, v as u8))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub style_name: String,
    #[serde(default)]
    pub modifiers: Vec<String>,
    pub abstraction_level: u8,
}

impl StyleSpec {
    pub const MAX_ABSTRACTION: u8 = 10;

    pub fn new(style_name: &str, modifiers: &[&str], abstraction_level: u8) -> Self {
        let mut s = StyleSpec {
            style_name: style_name.to_string(),
            modifiers: modifiers.iter().map(|m| m.to_string()).collect(),
            abstraction_level,
        };
        s.canonicalize();
        s
    }

    pub fn canonicalize(&mut self) {
        self.modifiers.sort();
        self.modifiers.dedup();
    }

    pub fn is_canonical(&self) -> bool {
        self.modifiers.windows(2).all(|w| w[0] < w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LightDirection {
    TopLeft,
    Top,
    TopRight,
    Left,
    Right,
    Frontal,
    Backlit,
}

impl LightDirection {
    pub const ALL: [LightDirection; 7] = [
        LightDirection::TopLeft,
        LightDirection::Top,
        LightDirection::TopRight,
        LightDirection::Left,
        LightDirection::Right,
        LightDirection::Frontal,
        LightDirection::Backlit,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            LightDirection::TopLeft => "from the top left",
            LightDirection::Top => "from above",
            LightDirection::TopRight => "from the top right",
            LightDirection::Left => "from the left",
            LightDirection::Right => "from the right",
            LightDirection::Frontal => "from the front",
            LightDirection::Backlit => "from behind",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightingSpec {
    pub light_direction: LightDirection,
    pub mood: String,
    pub shadow_strength: f64,
    pub reflection: bool,
}

impl Default for LightingSpec {
    fn default() -> Self {
        LightingSpec {
            light_direction: LightDirection::TopLeft,
            mood: "neutral".to_string(),
            shadow_strength: 0.0,
            reflection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeConcept {
    pub label: String,
    pub keywords: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneElement {
    pub id: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_id: Option<String>,
    pub bbox: Rect,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StyleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<ColorSpec>,
    pub z_order: i64,
    #[serde(default)]
    pub children: Vec<SceneElement>,
}

impl SceneElement {
    /// A childless element whose path is derived from `parent_path`.
    pub fn leaf(parent_path: Option<&str>, id: &str, bbox: Rect, content: &str) -> Self {
        SceneElement {
            id: id.to_string(),
            path: join_path(parent_path, id),
            region_id: None,
            bbox,
            content: content.to_string(),
            style: None,
            color: None,
            z_order: 0,
            children: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(SceneElement::count).sum::<usize>()
    }

    fn canonicalize(&mut self) {
        if let Some(s) = &mut self.style {
            s.canonicalize();
        }
        if let Some(c) = &mut self.color {
            c.canonicalize();
        }
        for c in &mut self.children {
            c.canonicalize();
        }
        sort_siblings(&mut self.children);
    }
}

pub fn join_path(parent: Option<&str>, id: &str) -> String {
    match parent {
        Some(p) if !p.is_empty() => format!("{p}/{id}"),
        _ => id.to_string(),
    }
}

pub fn parent_path(path: &str) -> Option<&str> {
    path.rsplit_once('/').map(|(p, _)| p)
}

/// Non-empty ids joined by `/`.
pub fn is_valid_path(path: &str) -> bool {
    !path.is_empty() && path.split('/').all(|seg| !seg.is_empty())
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && !id.contains('/')
}

fn sort_siblings(elements: &mut [SceneElement]) {
    elements.sort_by(|a, b| a.z_order.cmp(&b.z_order).then_with(|| a.id.cmp(&b.id)));
}

/// The quantified picture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub canvas: Canvas,
    pub theme: String,
    #[serde(default)]
    pub theme_concepts: Vec<ThemeConcept>,
    pub template_id: String,
    pub style: StyleSpec,
    pub lighting: LightingSpec,
    #[serde(default)]
    pub elements: Vec<SceneElement>,
    #[serde(default)]
    pub iteration_index: u64,
    #[serde(default)]
    pub seed: u64,
}

/// Color used by roots that carry none.
pub const NEUTRAL_HEX: &str = "#808080";

impl SceneGraph {
    pub fn empty(template_id: &str, style: StyleSpec) -> Self {
        SceneGraph {
            canvas: Canvas::default(),
            theme: String::new(),
            theme_concepts: Vec::new(),
            template_id: template_id.to_string(),
            style,
            lighting: LightingSpec::default(),
            elements: Vec::new(),
            iteration_index: 0,
            seed: 0,
        }
    }

    /// Total element count over all depths.
    pub fn element_count(&self) -> usize {
        self.elements.iter().map(SceneElement::count).sum()
    }

    /// Applies canonical form: uppercase hex, sorted modifiers and keywords,
    /// siblings ordered by `(z_order, id)`.
    pub fn canonicalize(&mut self) {
        self.style.canonicalize();
        for c in &mut self.theme_concepts {
            c.keywords.sort();
            c.keywords.dedup();
        }
        for e in &mut self.elements {
            e.canonicalize();
        }
        sort_siblings(&mut self.elements);
    }

    pub fn canonical(mut self) -> Self {
        self.canonicalize();
        self
    }

    /// Pre-order walk in stored sibling order, yielding `(depth, element)`.
    pub fn walk(&self) -> Vec<(usize, &SceneElement)> {
        fn go<'a>(els: &'a [SceneElement], depth: usize, out: &mut Vec<(usize, &'a SceneElement)>) {
            for e in els {
                out.push((depth, e));
                go(&e.children, depth + 1, out);
            }
        }
        let mut out = Vec::new();
        go(&self.elements, 0, &mut out);
        out
    }

    pub fn find(&self, path: &str) -> Option<&SceneElement> {
        self.chain(path).and_then(|c| c.last().copied())
    }

    pub fn find_mut(&mut self, path: &str) -> Option<&mut SceneElement> {
        let segments: Vec<&str> = path.split('/').collect();
        let mut level = &mut self.elements;
        for (i, seg) in segments.iter().enumerate() {
            let pos = level.iter().position(|e| e.id == *seg)?;
            if i + 1 == segments.len() {
                return level.get_mut(pos);
            }
            level = &mut level[pos].children;
        }
        None
    }

    /// Walks `path` from the root, returning the chain of elements.
    fn chain(&self, path: &str) -> Option<Vec<&SceneElement>> {
        let mut level = &self.elements;
        let mut chain = Vec::new();
        for seg in path.split('/') {
            let e = level.iter().find(|e| e.id == seg)?;
            chain.push(e);
            level = &e.children;
        }
        Some(chain)
    }

    pub fn effective_style(&self, path: &str) -> Option<&StyleSpec> {
        let chain = self.chain(path)?;
        Some(chain.iter().rev().find_map(|e| e.style.as_ref()).unwrap_or(&self.style))
    }

    /// Nearest explicit color on the ancestor chain, if any.
    pub fn effective_color(&self, path: &str) -> Option<&ColorSpec> {
        let chain = self.chain(path)?;
        chain.iter().rev().find_map(|e| e.color.as_ref())
    }

    /// Primary hex of the effective color, neutral grey if nothing is set.
    pub fn effective_hex(&self, path: &str) -> String {
        self.effective_color(path)
            .map(|c| c.primary_hex.clone())
            .unwrap_or_else(|| NEUTRAL_HEX.to_string())
    }

    /// Region of the nearest ancestor (or self) that names one.
    pub fn effective_region(&self, path: &str) -> Option<&str> {
        let chain = self.chain(path)?;
        chain.iter().rev().find_map(|e| e.region_id.as_deref())
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn rect_grid_cells_tile_parent() {
        let parent = Rect::new(0.2, 0.1, 0.8, 0.7);
        let cells: Vec<Rect> = (0..4).map(|i| parent.grid_cell(2, 2, i)).collect();
        for c in &cells {
            assert!(parent.contains(c, 0.0));
        }
        assert_eq!(cells[3].x1, parent.x1);
        assert_eq!(cells[3].y1, parent.y1);
        assert!((cells[1].x0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hex_normalization() {
        assert_eq!(normalize_hex("#ff00aa").as_deref(), Some("#FF00AA"));
        assert_eq!(normalize_hex("ff00aa"), None);
        assert_eq!(normalize_hex("#ff00a"), None);
        assert!(is_canonical_hex("#0A0B0C"));
        assert!(!is_canonical_hex("#0a0B0C"));
        assert_eq!(hex_to_rgb("#102030"), Some((16, 32, 48)));
    }

    #[test]
    fn canonical_sibling_order() {
        let mut s = small_scene();
        s.elements[0].children.reverse();
        s.canonicalize();
        let ids: Vec<_> = s.elements[0].children.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn inheritance_walks_ancestors() {
        let s = small_scene();
        assert_eq!(s.effective_hex("e1/a"), "#DC143C");
        assert_eq!(s.effective_style("e1/b").unwrap().style_name, "flat-infographic");
        assert_eq!(s.effective_region("e1/b"), Some("center"));
        assert!(s.find("e1/b").is_some());
        assert!(s.find("e1/c").is_none());
        assert!(s.find("e2").is_none());
    }

    #[test]
    fn aspect_parse() {
        assert_eq!(Canvas::parse_aspect("16:9"), Some(16.0 / 9.0));
        assert_eq!(Canvas::parse_aspect("wide"), None);
        assert_eq!(Canvas::parse_aspect("1:0"), None);
    }

    #[test]
    fn template_coverage_sampling() {
        let t = CompositionTemplate {
            id: "half".into(),
            name: "half".into(),
            regions: vec![Region {
                id: "left".into(),
                bbox: Rect::new(0.0, 0.0, 0.5, 1.0),
                role: RegionRole::Focal,
                salience: 1.0,
            }],
            description: String::new(),
        };
        assert!((t.coverage() - 0.5).abs() < 1e-12);
    }
}
