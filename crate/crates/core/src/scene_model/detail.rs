use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::*;
use crate::error::{Error, Result};

/// Attributes of one element. Every field is optional so that partial
/// records can be merged field by field across iterations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetailRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StyleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<ColorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_order: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_id: Option<String>,
}

/// Flat, path-keyed view of a scene's elements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetailSet {
    pub entries: BTreeMap<String, DetailRecord>,
}

impl DetailSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, path: &str) -> Option<&DetailRecord> {
        self.entries.get(path)
    }

    pub fn insert(&mut self, path: impl Into<String>, record: DetailRecord) {
        self.entries.insert(path.into(), record);
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub fn scene_to_detailset(scene: &SceneGraph) -> Result<DetailSet> {
    let violations = validate_structure(scene, usize::MAX);
    if !violations.is_empty() {
        return Err(Error::InvalidScene(violations));
    }
    let mut out = DetailSet::new();
    for (_, e) in scene.walk() {
        out.insert(
            e.path.clone(),
            DetailRecord {
                content: Some(e.content.clone()),
                bbox: Some(e.bbox),
                style: e.style.clone(),
                color: e.color.clone(),
                z_order: Some(e.z_order),
                region_id: e.region_id.clone(),
            },
        );
    }
    Ok(out)
}

/// Rebuilds the element tree from `details`; everything else comes from
/// `base`. Records need content and bbox; a missing z-order reads as 0.
pub fn detailset_to_scene(details: &DetailSet, base: &SceneGraph) -> Result<SceneGraph> {
    let mut children: BTreeMap<Option<&str>, Vec<&str>> = BTreeMap::new();
    for path in details.paths() {
        if !is_valid_path(path) {
            return Err(Error::InvalidScene(vec![Violation::new(
                path,
                "invalid-path",
                "paths are non-empty ids joined by '/'",
            )]));
        }
        let parent = parent_path(path);
        if let Some(p) = parent {
            if details.get(p).is_none() {
                return Err(Error::OrphanPath(path.to_string()));
            }
        }
        children.entry(parent).or_default().push(path);
    }

    fn build(path: &str, details: &DetailSet, children: &BTreeMap<Option<&str>, Vec<&str>>) -> Result<SceneElement> {
        let rec = &details.entries[path];
        let content = rec.content.clone().ok_or(Error::IncompleteRecord {
            path: path.to_string(),
            field: "content",
        })?;
        let bbox = rec.bbox.ok_or(Error::IncompleteRecord {
            path: path.to_string(),
            field: "bbox",
        })?;
        let id = path.rsplit('/').next().unwrap_or(path).to_string();
        let kids = children
            .get(&Some(path))
            .map(|ps| {
                ps.iter()
                    .map(|p| build(p, details, children))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        Ok(SceneElement {
            id,
            path: path.to_string(),
            region_id: rec.region_id.clone(),
            bbox,
            content,
            style: rec.style.clone(),
            color: rec.color.clone(),
            z_order: rec.z_order.unwrap_or(0),
            children: kids,
        })
    }

    let roots = children.get(&None).cloned().unwrap_or_default();
    let elements = roots
        .iter()
        .map(|p| build(p, details, &children))
        .collect::<Result<Vec<_>>>()?;
    let mut scene = base.clone();
    scene.elements = elements;
    scene.canonicalize();
    Ok(scene)
}
