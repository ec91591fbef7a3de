//! Tabletop scene for the manipulator: detectable objects in the arm base
//! frame, loaded from a JSON fixture.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geom::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub class_name: String,
    #[serde(default)]
    pub color: Option<String>,
    /// Meters, arm base frame.
    pub position: Vec3,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene parse error: {0}")]
    Parse(String),
    #[error("duplicate object id {0:?}")]
    DuplicateId(String),
}

/// Load a scene fixture: a JSON array of objects.
pub fn load_scene(json: &str) -> Result<Vec<SceneObject>, SceneError> {
    let objects: Vec<SceneObject> =
        serde_json::from_str(json).map_err(|e| SceneError::Parse(e.to_string()))?;
    for (i, a) in objects.iter().enumerate() {
        if objects[..i].iter().any(|b| b.id == a.id) {
            return Err(SceneError::DuplicateId(a.id.clone()));
        }
    }
    Ok(objects)
}
