//! Inputs shared by the benchmarks.

use sde_core::backends::StubTextClient;
use sde_core::composition::builtin_template;
use sde_core::detailing::{expand_recursive, populate_scene, ExpansionConfig, ExpansionTarget};
use sde_core::pipeline::named_style;
use sde_core::{SceneGraph, ThemeConcept};

pub const ABSTRACT: &str = "Structured scene descriptions make image generation repeatable. A scene graph \
records content, position, style and color for every element, and composition templates place each element \
on the canvas. Iterations fuse earlier details with new edits, and recursive expansion adds sub-elements \
until the element budget is reached.";

/// `n` deterministic keyword vectors of dimension `dim`.
pub fn vectors(n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..dim).map(|j| ((i * 31 + j * 17) % 11) as f64 + 0.5).collect())
        .collect()
}

/// A three-root scene expanded to the default element budget.
pub fn full_scene() -> SceneGraph {
    let template = builtin_template("diagonal").expect("built-in template");
    let concepts: Vec<ThemeConcept> = ["river", "valley", "town"]
        .iter()
        .zip([0.5, 0.3, 0.2])
        .map(|(w, weight)| ThemeConcept {
            label: w.to_string(),
            keywords: vec![w.to_string()],
            weight,
        })
        .collect();
    let style = named_style("watercolor").expect("built-in style");
    let stub = StubTextClient::new();
    let scene = populate_scene("rivers and towns", &concepts, &template, &style, Some(&stub), 1).expect("populate");
    expand_recursive(&scene, &ExpansionTarget::AllRoots, &ExpansionConfig::default(), &stub).expect("expand")
}
