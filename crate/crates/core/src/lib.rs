//! Text-to-scene-graph engine: turns free text into a validated, hashable
//! scene description and a deterministic image prompt.
//!
//! The stages are usable one at a time (see the module docs) or through
//! [`pipeline::Pipeline`], which persists a session between steps.

pub mod backends;
pub mod canonical;
pub mod composition;
pub mod detailing;
pub mod error;
pub mod evaluation;
pub mod palette;
pub mod pipeline;
pub mod prompt_compiler;
pub mod scene_model;
pub mod theme_extraction;

pub use error::{Error, Result};
pub use scene_model::{
    Canvas, ColorSpec, CompositionTemplate, DetailRecord, DetailSet, LightDirection, LightingSpec, Rect, Region,
    RegionRole, SceneElement, SceneGraph, StyleSpec, ThemeConcept, Violation,
};
