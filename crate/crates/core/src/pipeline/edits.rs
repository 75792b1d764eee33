use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::named_style;
use crate::detailing::DEFAULT_CONTRAST;
use crate::error::{Error, Result};
use crate::scene_model::{
    is_valid_path, normalize_hex, parent_path, ColorSpec, DetailRecord, DetailSet, Rect, StyleSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditField {
    Content,
    Color,
    Style,
    Bbox,
    ZOrder,
    RegionId,
}

/// One user change to the scene, addressed by element path.
///
/// Wire form: `{"op": "set"|"delete"|"add", "path": ..., "field"?: ..., "value"?: ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum SceneEdit {
    Set {
        path: String,
        field: EditField,
        value: Value,
    },
    Delete {
        path: String,
    },
    Add {
        path: String,
        value: Value,
    },
}

impl SceneEdit {
    pub fn path(&self) -> &str {
        match self {
            SceneEdit::Set { path, .. } | SceneEdit::Delete { path } | SceneEdit::Add { path, .. } => path,
        }
    }

    pub fn set(path: &str, field: EditField, value: Value) -> Self {
        SceneEdit::Set {
            path: path.to_string(),
            field,
            value,
        }
    }
}

fn invalid(path: &str, message: impl std::fmt::Display) -> Error {
    Error::InvalidEdit(format!("{path}: {message}"))
}

fn parse_color(path: &str, value: &Value, existing: Option<&ColorSpec>) -> Result<ColorSpec> {
    match value {
        Value::String(s) => {
            let hex = normalize_hex(s).ok_or_else(|| invalid(path, format!("{s:?} is not a #RRGGBB color")))?;
            let mut c = existing
                .cloned()
                .unwrap_or_else(|| ColorSpec::solid(&hex, DEFAULT_CONTRAST));
            c.primary_hex = hex;
            Ok(c)
        }
        other => {
            let mut c: ColorSpec = serde_json::from_value(other.clone()).map_err(|e| invalid(path, e))?;
            c.canonicalize();
            Ok(c)
        }
    }
}

fn parse_style(path: &str, value: &Value) -> Result<Option<StyleSpec>> {
    match value {
        Value::Null => Ok(None),
        Value::String(name) => named_style(name)
            .map(Some)
            .ok_or_else(|| invalid(path, format!("unknown style {name:?}"))),
        other => {
            let mut s: StyleSpec = serde_json::from_value(other.clone()).map_err(|e| invalid(path, e))?;
            s.canonicalize();
            Ok(Some(s))
        }
    }
}

fn parse_bbox(path: &str, value: &Value) -> Result<Rect> {
    if let Some([a, b, c, d]) = value.as_array().map(Vec::as_slice) {
        let n = |v: &Value| v.as_f64().ok_or_else(|| invalid(path, "bbox entries must be numbers"));
        return Ok(Rect::new(n(a)?, n(b)?, n(c)?, n(d)?));
    }
    serde_json::from_value(value.clone()).map_err(|e| invalid(path, e))
}

fn apply_one(set: &mut DetailSet, edit: &SceneEdit) -> Result<()> {
    match edit {
        SceneEdit::Set { path, field, value } => {
            let rec = set
                .entries
                .get_mut(path)
                .ok_or_else(|| Error::PathNotFound(path.clone()))?;
            match field {
                EditField::Content => {
                    let s = value
                        .as_str()
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .ok_or_else(|| invalid(path, "content must be a non-empty string"))?;
                    rec.content = Some(s.to_string());
                }
                EditField::Color => rec.color = Some(parse_color(path, value, rec.color.as_ref())?),
                EditField::Style => rec.style = parse_style(path, value)?,
                EditField::Bbox => rec.bbox = Some(parse_bbox(path, value)?),
                EditField::ZOrder => {
                    rec.z_order = Some(
                        value
                            .as_i64()
                            .ok_or_else(|| invalid(path, "z_order must be an integer"))?,
                    )
                }
                EditField::RegionId => {
                    rec.region_id = match value {
                        Value::Null => None,
                        Value::String(s) => Some(s.clone()),
                        _ => return Err(invalid(path, "region_id must be a string or null")),
                    }
                }
            }
        }
        SceneEdit::Delete { path } => {
            if set.entries.remove(path).is_none() {
                return Err(Error::PathNotFound(path.clone()));
            }
            let prefix = format!("{path}/");
            set.entries.retain(|k, _| !k.starts_with(&prefix));
        }
        SceneEdit::Add { path, value } => {
            if !is_valid_path(path) {
                return Err(invalid(path, "not a valid element path"));
            }
            if set.get(path).is_some() {
                return Err(Error::PathExists(path.clone()));
            }
            if let Some(parent) = parent_path(path) {
                if set.get(parent).is_none() {
                    return Err(Error::PathNotFound(parent.to_string()));
                }
            }
            let mut rec: DetailRecord = serde_json::from_value(value.clone()).map_err(|e| invalid(path, e))?;
            if rec.content.as_deref().is_none_or(|c| c.trim().is_empty()) || rec.bbox.is_none() {
                return Err(invalid(path, "added elements need content and bbox"));
            }
            if let Some(c) = &mut rec.color {
                c.canonicalize();
            }
            if let Some(s) = &mut rec.style {
                s.canonicalize();
            }
            set.insert(path.clone(), rec);
        }
    }
    Ok(())
}

/// Applies all edits in order to a copy of `set`; the first failure
/// discards the whole batch.
pub fn apply_edits(set: &DetailSet, edits: &[SceneEdit]) -> Result<DetailSet> {
    let mut work = set.clone();
    for edit in edits {
        apply_one(&mut work, edit)?;
    }
    Ok(work)
}

/// Deleted subtrees recorded by an edit history, oldest edit first. The
/// flag is false once the root was re-added, so only its old descendants
/// stay dead.
pub fn tombstones<'a>(edits: impl IntoIterator<Item = &'a SceneEdit>) -> BTreeMap<String, bool> {
    let mut dead = BTreeMap::new();
    for edit in edits {
        match edit {
            SceneEdit::Delete { path } => {
                dead.insert(path.clone(), true);
            }
            SceneEdit::Add { path, .. } => {
                if let Some(flag) = dead.get_mut(path) {
                    *flag = false;
                }
            }
            SceneEdit::Set { .. } => {}
        }
    }
    dead
}

/// True when `path` lies in a deleted subtree.
pub fn is_buried(path: &str, dead: &BTreeMap<String, bool>) -> bool {
    if dead.get(path) == Some(&true) {
        return true;
    }
    let mut p = parent_path(path);
    while let Some(cur) = p {
        if dead.contains_key(cur) {
            return true;
        }
        p = parent_path(cur);
    }
    false
}
