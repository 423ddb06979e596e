use serde::{Deserialize, Serialize};

use super::{OccupancyGrid, VoxelKey};
use crate::error::{Error, Result};
use crate::geom::Point3;

/// One user edit. Positions are free-form and snapped to the containing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Edit {
    Add { position: [f64; 3] },
    Remove { key: VoxelKey },
    Move { key: VoxelKey, position: [f64; 3] },
}

/// Edits in application order, written against map `version`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditScript {
    pub version: u64,
    pub edits: Vec<Edit>,
}

/// An edit that changed nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditWarning {
    /// Position of the edit in the script.
    pub index: usize,
    pub message: String,
}

fn position(p: &[f64; 3], index: usize) -> Result<Point3> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(Point3::from(*p))
    } else {
        Err(Error::invalid(format!("edit {index}: position {p:?} is not finite")))
    }
}

/// Applies `script` to `grid`, producing version `grid.version() + 1` with
/// padding cleared (it must be recomputed). Edits that change nothing (adding
/// an occupied cell, removing or moving an empty one) are reported as
/// warnings. Fails with [`Error::Conflict`] when the script was written for
/// another version.
pub fn snap_edits(grid: &OccupancyGrid, script: &EditScript) -> Result<(OccupancyGrid, Vec<EditWarning>)> {
    if script.version != grid.version() {
        return Err(Error::Conflict {
            script: script.version,
            current: grid.version(),
        });
    }
    let mut out = grid.clone();
    let mut warnings = Vec::new();
    let mut warn = |index: usize, message: String| {
        log::warn!("edit {index}: {message}");
        warnings.push(EditWarning { index, message });
    };
    for (index, edit) in script.edits.iter().enumerate() {
        match edit {
            Edit::Add { position: p } => {
                let key = out.key_of(&position(p, index)?);
                if !out.occupied_mut().insert(key) {
                    warn(index, format!("cell {key:?} already occupied"));
                }
            }
            Edit::Remove { key } => {
                if !out.occupied_mut().remove(key) {
                    warn(index, format!("cell {key:?} is not occupied"));
                }
            }
            Edit::Move { key, position: p } => {
                let target = out.key_of(&position(p, index)?);
                if !out.occupied_mut().remove(key) {
                    warn(index, format!("cell {key:?} is not occupied; nothing to move"));
                } else {
                    out.occupied_mut().insert(target);
                }
            }
        }
    }
    out.set_padding(Vec::new());
    out.set_version(grid.version() + 1);
    Ok((out, warnings))
}
