//! Scene-to-scene transforms built on frequency levels: foveated
//! selection, mask-voted focus, per-level filter recipes and nearest-point
//! geometry queries on a low-level subset.

mod focus;
mod fovea;
mod query;
mod recipe;

pub use focus::{focus, Mask, DEFAULT_FOCUS_RATIO};
pub use fovea::{foveate, FoveaSpec};
pub use query::{geom_query, linear_nearest, GeomQuery, KdTree};
pub use recipe::{apply_recipe, FilterRecipe, LevelTransform, PRESETS};
