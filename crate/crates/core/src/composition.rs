//! Preset composition templates and template selection.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scene_model::{validate_template, CompositionTemplate, RegionRole, ThemeConcept};

/// Concepts at or above this weight count as major subjects.
pub const DEFAULT_MAJOR_WEIGHT: f64 = 0.15;

const BUILTIN_JSON: &str = include_str!("../data/templates.json");

/// The bundled library: thirds, radial, diagonal, golden, split.
pub fn builtin_templates() -> Vec<CompositionTemplate> {
    static LIB: OnceLock<Vec<CompositionTemplate>> = OnceLock::new();
    LIB.get_or_init(|| load_templates(BUILTIN_JSON).expect("bundled templates are valid"))
        .clone()
}

pub fn builtin_template(id: &str) -> Option<CompositionTemplate> {
    builtin_templates().into_iter().find(|t| t.id == id)
}

/// Parses a JSON array of templates, validating each one.
pub fn load_templates(source: &str) -> Result<Vec<CompositionTemplate>> {
    if source.trim().is_empty() {
        return Err(Error::parse("template file", "document is empty"));
    }
    let templates: Vec<CompositionTemplate> =
        serde_json::from_str(source).map_err(|e| Error::parse("template file", e))?;
    for t in &templates {
        if let Some(v) = validate_template(t).into_iter().next() {
            return Err(Error::template(&v.rule, format!("template {:?}: {}", t.id, v.detail)));
        }
    }
    Ok(templates)
}

/// Extends `base` with `extra`; templates in `extra` replace same-id ones.
pub fn merge_libraries(base: Vec<CompositionTemplate>, extra: Vec<CompositionTemplate>) -> Vec<CompositionTemplate> {
    let mut out: Vec<CompositionTemplate> = base
        .into_iter()
        .filter(|t| !extra.iter().any(|e| e.id == t.id))
        .collect();
    out.extend(extra);
    out
}

pub fn select_composition(concepts: &[ThemeConcept], library: &[CompositionTemplate]) -> Result<CompositionTemplate> {
    select_composition_with(concepts, library, DEFAULT_MAJOR_WEIGHT)
}

/// Picks the template whose focal-region count is nearest the number of
/// major concepts. Ties go to the lexicographically smallest id.
pub fn select_composition_with(
    concepts: &[ThemeConcept],
    library: &[CompositionTemplate],
    major_weight: f64,
) -> Result<CompositionTemplate> {
    let majors = concepts.iter().filter(|c| c.weight >= major_weight).count();
    library
        .iter()
        .min_by(|a, b| {
            let da = a.focal_count().abs_diff(majors);
            let db = b.focal_count().abs_diff(majors);
            da.cmp(&db).then_with(|| a.id.cmp(&b.id))
        })
        .cloned()
        .ok_or(Error::EmptyLibrary)
}

/// Concepts in placement order: heaviest first, ties by label.
pub fn rank_concepts(concepts: &[ThemeConcept]) -> Vec<&ThemeConcept> {
    let mut ranked: Vec<&ThemeConcept> = concepts.iter().collect();
    ranked.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.label.cmp(&b.label)));
    ranked
}

/// Region for each concept, in [`rank_concepts`] order.
///
/// Focal regions are filled heaviest-concept-first in descending salience.
/// Remaining concepts go round-robin over the support regions, or the
/// background regions when a template has no support, or the focal regions
/// when it has neither.
pub fn assign_regions_ordered<'a>(
    concepts: &'a [ThemeConcept],
    template: &CompositionTemplate,
) -> Vec<(&'a ThemeConcept, String)> {
    let by_role = |role: RegionRole| {
        let mut rs: Vec<(usize, &crate::scene_model::Region)> = template
            .regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.role == role)
            .collect();
        rs.sort_by(|(ia, a), (ib, b)| b.salience.total_cmp(&a.salience).then(ia.cmp(ib)));
        rs.into_iter().map(|(_, r)| r.id.clone()).collect::<Vec<_>>()
    };
    let focal = by_role(RegionRole::Focal);
    let overflow = [RegionRole::Support, RegionRole::Background]
        .into_iter()
        .map(by_role)
        .find(|rs| !rs.is_empty())
        .unwrap_or_else(|| focal.clone());

    rank_concepts(concepts)
        .into_iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let region = if i < focal.len() {
                focal[i].clone()
            } else if overflow.is_empty() {
                return None;
            } else {
                overflow[(i - focal.len()) % overflow.len()].clone()
            };
            Some((c, region))
        })
        .collect()
}

pub fn assign_regions(concepts: &[ThemeConcept], template: &CompositionTemplate) -> BTreeMap<String, String> {
    assign_regions_ordered(concepts, template)
        .into_iter()
        .map(|(c, r)| (c.label.clone(), r))
        .collect()
}
