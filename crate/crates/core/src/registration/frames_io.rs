//! Frame sequences on disk: an `index.json` listing each frame's raster file,
//! size, intrinsics, pose and timestamp, plus one raw depth raster per frame
//! (row-major little-endian `f32`, meters, 0 = invalid).
//!
//! ```json
//! {
//!   "frames": [
//!     {
//!       "file": "frame_0000.f32",
//!       "width": 160, "height": 120, "timestamp": 0.0,
//!       "intrinsics": { "fx": 114.3, "fy": 114.3, "cx": 79.5, "cy": 59.5 },
//!       "pose": { "rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,1.5] }
//!     }
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DepthFrame, Intrinsics};
use crate::error::{Error, Result};
use crate::geom::RigidTransform;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub file: String,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub timestamp: f64,
    pub intrinsics: Intrinsics,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameIndex {
    pub frames: Vec<FrameRecord>,
}

pub fn write_frames(dir: impl AsRef<Path>, frames: &[DepthFrame]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = FrameIndex { frames: Vec::new() };
    for (n, f) in frames.iter().enumerate() {
        let file = format!("frame_{n:04}.f32");
        let bytes: Vec<u8> = f
            .depth()
            .iter()
            .flat_map(|&d| (d as f32).to_le_bytes())
            .collect();
        let path = dir.join(&file);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        index.frames.push(FrameRecord {
            file,
            width: f.width(),
            height: f.height(),
            timestamp: f.timestamp(),
            intrinsics: *f.intrinsics(),
            pose: *f.pose(),
        });
    }
    let path = dir.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).expect("frame index serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_frames(dir: impl AsRef<Path>) -> Result<Vec<DepthFrame>> {
    let dir = dir.as_ref();
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: FrameIndex =
        serde_json::from_str(&text).map_err(|e| Error::json(&path.display().to_string(), e))?;
    if index.frames.is_empty() {
        return Err(Error::parse(path.display().to_string(), "frame index lists no frames"));
    }
    index
        .frames
        .iter()
        .enumerate()
        .map(|(n, rec)| {
            let raster = dir.join(&rec.file);
            let bytes = std::fs::read(&raster).map_err(|e| Error::io(&raster, e))?;
            let expected = rec.width * rec.height * 4;
            if bytes.len() != expected {
                return Err(Error::parse(
                    raster.display().to_string(),
                    format!("frame {n}: {} bytes, expected {expected}", bytes.len()),
                ));
            }
            let depth = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            DepthFrame::new(rec.width, rec.height, depth, rec.intrinsics, rec.pose)
                .map(|f| f.with_timestamp(rec.timestamp))
                .map_err(|e| Error::parse(format!("{} frame {n}", path.display()), e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vector3;

    #[test]
    fn round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let i = Intrinsics::from_fov(3, 2, 70.0);
        let pose = RigidTransform::from_euler(0.0, 0.1, 0.2, Vector3::new(1.0, 2.0, 1.5));
        let frames = vec![
            DepthFrame::new(3, 2, vec![0.0, 1.0, 1.5, 2.25, 3.0, 4.0], i, pose).unwrap().with_timestamp(0.5),
            DepthFrame::new(3, 2, vec![1.0; 6], i, RigidTransform::identity()).unwrap().with_timestamp(1.0),
        ];
        write_frames(dir.path(), &frames).unwrap();
        let back = read_frames(dir.path()).unwrap();
        // Depths above are exactly representable in f32.
        assert_eq!(back, frames);
    }

    #[test]
    fn missing_and_truncated_inputs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_frames(dir.path()), Err(Error::Io { .. })));
        let i = Intrinsics::from_fov(2, 2, 70.0);
        let f = DepthFrame::new(2, 2, vec![1.0; 4], i, RigidTransform::identity()).unwrap();
        write_frames(dir.path(), &[f]).unwrap();
        std::fs::write(dir.path().join("frame_0000.f32"), [0u8; 7]).unwrap();
        assert!(matches!(read_frames(dir.path()), Err(Error::Parse { .. })));
    }
}
