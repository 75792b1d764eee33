//! Proptest strategies for scenes, detail sets and keyword vectors.

use proptest::collection::vec;
use proptest::option;
use proptest::prelude::*;

use sde_core::composition::builtin_templates;
use sde_core::palette::PALETTE;
use sde_core::pipeline::{named_style, NAMED_STYLES};
use sde_core::scene_model::{DetailRecord, DetailSet};
use sde_core::{Canvas, ColorSpec, LightDirection, LightingSpec, Rect, SceneElement, SceneGraph, ThemeConcept};

pub const WORDS: [&str; 16] = [
    "lantern", "river", "orchard", "tower", "harbor", "meadow", "engine", "library", "comet", "bridge", "garden",
    "forge", "glacier", "market", "violin", "atlas",
];

#[derive(Debug, Clone)]
pub struct NodeSpec {
    rel: (f64, f64, f64, f64),
    word: usize,
    color: Option<(usize, f64)>,
    style: Option<usize>,
    z: i64,
    region: Option<usize>,
    children: Vec<NodeSpec>,
}

fn leaf() -> impl Strategy<Value = NodeSpec> {
    (
        (0.0..0.45f64, 0.0..0.45f64, 0.55..=1.0f64, 0.55..=1.0f64),
        0..WORDS.len(),
        option::of((0..PALETTE.len(), 0.0..=1.0f64)),
        option::weighted(0.3, 0..NAMED_STYLES.len()),
        -2i64..3,
        option::of(0..8usize),
    )
        .prop_map(|(rel, word, color, style, z, region)| NodeSpec {
            rel,
            word,
            color,
            style,
            z,
            region,
            children: Vec::new(),
        })
}

pub fn node() -> impl Strategy<Value = NodeSpec> {
    leaf().prop_recursive(3, 24, 3, |inner| {
        (leaf(), vec(inner, 0..3)).prop_map(|(mut n, children)| {
            n.children = children;
            n
        })
    })
}

struct Builder<'a> {
    regions: &'a [String],
    counter: usize,
}

impl Builder<'_> {
    fn build(&mut self, spec: &NodeSpec, parent: Option<&SceneElement>, id: String) -> SceneElement {
        self.counter += 1;
        let outer = parent.map_or(Rect::UNIT, |p| p.bbox);
        let (a, b, c, d) = spec.rel;
        let bbox = Rect::new(
            outer.x0 + a * outer.width(),
            outer.y0 + b * outer.height(),
            outer.x0 + c * outer.width(),
            outer.y0 + d * outer.height(),
        );
        // unique, and never a delimited substring of another element's content
        let content = format!("{} no {}", WORDS[spec.word], self.counter);
        let mut e = SceneElement::leaf(parent.map(|p| p.path.as_str()), &id, bbox, &content);
        e.z_order = spec.z;
        e.color = spec.color.map(|(i, contrast)| ColorSpec::solid(PALETTE[i].1, contrast));
        e.style = spec.style.and_then(|i| named_style(NAMED_STYLES[i]));
        e.region_id = spec.region.map(|i| self.regions[i % self.regions.len()].clone());
        let kids: Vec<SceneElement> = spec
            .children
            .iter()
            .enumerate()
            .map(|(i, c)| self.build(c, Some(&e), format!("c{}", i + 1)))
            .collect();
        e.children = kids;
        e
    }
}

fn concepts() -> impl Strategy<Value = Vec<ThemeConcept>> {
    vec((0..WORDS.len(), 1u32..20), 0..5).prop_map(|raw| {
        let mut seen = std::collections::BTreeSet::new();
        let raw: Vec<_> = raw.into_iter().filter(|(w, _)| seen.insert(*w)).collect();
        let total: u32 = raw.iter().map(|(_, f)| f).sum();
        raw.into_iter()
            .map(|(w, f)| ThemeConcept {
                label: WORDS[w].to_string(),
                keywords: vec![WORDS[w].to_string(), format!("{}s", WORDS[w])],
                weight: f as f64 / total as f64,
            })
            .collect()
    })
}

fn lighting() -> impl Strategy<Value = LightingSpec> {
    (
        0..LightDirection::ALL.len(),
        prop_oneof!["neutral", "warm", "dramatic"],
        0.0..=1.0f64,
        any::<bool>(),
    )
        .prop_map(|(d, mood, shadow, reflection)| LightingSpec {
            light_direction: LightDirection::ALL[d],
            mood: mood.to_string(),
            shadow_strength: shadow,
            reflection,
        })
}

/// A valid scene over one of the built-in templates.
pub fn scene() -> impl Strategy<Value = SceneGraph> {
    (
        vec(node(), 0..4),
        0..5usize,
        0..NAMED_STYLES.len(),
        lighting(),
        concepts(),
        (64u32..2048, 64u32..2048),
        any::<u64>(),
        0u64..5,
    )
        .prop_map(|(roots, t, style, lighting, concepts, (w, h), seed, iteration)| {
            let templates = builtin_templates();
            let template = &templates[t % templates.len()];
            let regions: Vec<String> = template.regions.iter().map(|r| r.id.clone()).collect();
            let mut b = Builder {
                regions: &regions,
                counter: 0,
            };
            let elements = roots
                .iter()
                .enumerate()
                .map(|(i, spec)| b.build(spec, None, format!("e{}", i + 1)))
                .collect();
            let mut s = SceneGraph::empty(&template.id, named_style(NAMED_STYLES[style]).unwrap());
            s.canvas = Canvas::new(w, h);
            s.theme = concepts
                .iter()
                .map(|c| c.label.as_str())
                .take(3)
                .collect::<Vec<_>>()
                .join(" and ");
            if s.theme.is_empty() {
                s.theme = "an empty canvas".to_string();
            }
            s.theme_concepts = concepts;
            s.lighting = lighting;
            s.elements = elements;
            s.seed = seed;
            s.iteration_index = iteration;
            s
        })
}

pub const FUSION_PATHS: [&str; 5] = ["e1", "e1/a", "e1/b", "e2", "e2/a"];

fn record() -> impl Strategy<Value = DetailRecord> {
    (
        option::of(0..4usize),
        option::of(0..3usize),
        option::of(0..3usize),
        option::of(0..3usize),
        option::of(-1i64..2),
        option::of(0..2usize),
    )
        .prop_map(|(content, bbox, style, color, z, region)| DetailRecord {
            content: content.map(|i| format!("text {i}")),
            bbox: bbox.map(|i| Rect::new(0.1 * i as f64, 0.0, 0.5 + 0.1 * i as f64, 1.0)),
            style: style.and_then(|i| named_style(NAMED_STYLES[i])),
            color: color.map(|i| ColorSpec::solid(PALETTE[i].1, 0.5)),
            z_order: z,
            region_id: region.map(|i| ["left", "right"][i].to_string()),
        })
}

/// Detail sets over a small path universe so that keys overlap often.
pub fn detail_set() -> impl Strategy<Value = DetailSet> {
    vec(option::of(record()), FUSION_PATHS.len()).prop_map(|recs| {
        let mut set = DetailSet::new();
        for (path, rec) in FUSION_PATHS.iter().zip(recs) {
            if let Some(r) = rec {
                set.insert(*path, r);
            }
        }
        set
    })
}

/// Up to 8 vectors. Small integer entries make exact distance ties common.
pub fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=8, 1usize..=5).prop_flat_map(|(n, dim)| {
        prop_oneof![
            vec(vec((0u8..4).prop_map(f64::from), dim), n),
            vec(vec(0.0..10.0f64, dim), n),
        ]
    })
}
