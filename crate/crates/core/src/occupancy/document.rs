//! Grid documents:
//!
//! ```json
//! {
//!   "leaf_m": 0.05,
//!   "origin": [0.0, 0.0, 0.0],
//!   "version": 3,
//!   "occupied": [
//!     [0, 0, 0],
//!     [0, 0, 1]
//!   ],
//!   "padding": [
//!     {"level": 1, "keys": [
//!       [-1, 0, 0]
//!     ]}
//!   ],
//!   "zones": [
//!     {"name": "table", "min": [0.5, -0.5, 0.0], "max": [1.0, 0.5, 0.8]}
//!   ]
//! }
//! ```
//!
//! Keys are written sorted, one per line, so documents diff cleanly and the
//! same grid always serializes to the same bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{validate_zones, OccupancyGrid, SafetyZone, VoxelKey};
use crate::error::{Error, Result};
use crate::geom::Point3;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    leaf_m: f64,
    origin: [f64; 3],
    version: u64,
    occupied: Vec<VoxelKey>,
    #[serde(default)]
    padding: Vec<PaddingDoc>,
    #[serde(default)]
    zones: Vec<SafetyZone>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PaddingDoc {
    level: usize,
    keys: Vec<VoxelKey>,
}

fn num(v: f64) -> String {
    serde_json::to_string(&v).expect("finite float")
}

fn point(p: &Point3) -> String {
    format!("[{}, {}, {}]", num(p.x), num(p.y), num(p.z))
}

fn key_lines(out: &mut String, keys: &BTreeSet<VoxelKey>, indent: &str) {
    let lines: Vec<String> = keys
        .iter()
        .map(|k| format!("{indent}[{}, {}, {}]", k[0], k[1], k[2]))
        .collect();
    out.push_str(&lines.join(",\n"));
    if !lines.is_empty() {
        out.push('\n');
    }
}

/// Serializes a grid and its zones to the document format.
pub fn save_grid(grid: &OccupancyGrid, zones: &[SafetyZone]) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"leaf_m\": {},", num(grid.leaf()));
    let _ = writeln!(out, "  \"origin\": {},", point(grid.origin()));
    let _ = writeln!(out, "  \"version\": {},", grid.version());
    out.push_str("  \"occupied\": [\n");
    key_lines(&mut out, grid.occupied(), "    ");
    out.push_str("  ],\n  \"padding\": [\n");
    let layers: Vec<String> = grid
        .padding()
        .iter()
        .enumerate()
        .map(|(i, keys)| {
            let mut s = format!("    {{\"level\": {}, \"keys\": [\n", i + 1);
            key_lines(&mut s, keys, "      ");
            s.push_str("    ]}");
            s
        })
        .collect();
    out.push_str(&layers.join(",\n"));
    if !layers.is_empty() {
        out.push('\n');
    }
    out.push_str("  ],\n  \"zones\": [\n");
    let zone_lines: Vec<String> = zones
        .iter()
        .map(|z| {
            format!(
                "    {{\"name\": {}, \"min\": {}, \"max\": {}}}",
                serde_json::to_string(z.name()).expect("string"),
                point(z.region().min()),
                point(z.region().max())
            )
        })
        .collect();
    out.push_str(&zone_lines.join(",\n"));
    if !zone_lines.is_empty() {
        out.push('\n');
    }
    out.push_str("  ]\n}\n");
    out
}

fn unique(keys: Vec<VoxelKey>, location: &str) -> Result<BTreeSet<VoxelKey>> {
    let mut set = BTreeSet::new();
    for (i, k) in keys.into_iter().enumerate() {
        if !set.insert(k) {
            return Err(Error::parse(format!("{location}[{i}]"), format!("duplicate key {k:?}")));
        }
    }
    Ok(set)
}

/// Parses a grid document. `source` names it in error locations.
pub fn load_grid(text: &str, source: &str) -> Result<(OccupancyGrid, Vec<SafetyZone>)> {
    let doc: GridDoc = serde_json::from_str(text).map_err(|e| Error::json(source, e))?;
    let mut grid = OccupancyGrid::new(doc.leaf_m, Point3::from(doc.origin))
        .map_err(|e| Error::parse(format!("{source} leaf_m/origin"), e.to_string()))?;
    grid.set_version(doc.version);
    *grid.occupied_mut() = unique(doc.occupied, &format!("{source} occupied"))?;
    let mut padding = Vec::new();
    for (i, layer) in doc.padding.into_iter().enumerate() {
        if layer.level != i + 1 {
            return Err(Error::parse(
                format!("{source} padding[{i}]"),
                format!("expected level {}, found {}", i + 1, layer.level),
            ));
        }
        padding.push(unique(layer.keys, &format!("{source} padding[{i}].keys"))?);
    }
    grid.set_padding(padding);
    validate_zones(&doc.zones).map_err(|e| Error::parse(format!("{source} zones"), e.to_string()))?;
    Ok((grid, doc.zones))
}

pub fn write_grid(path: impl AsRef<Path>, grid: &OccupancyGrid, zones: &[SafetyZone]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, save_grid(grid, zones)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<(OccupancyGrid, Vec<SafetyZone>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_grid(&text, &path.display().to_string())
}

/// Flat box list for planners: `level,center_x,center_y,center_z,size`, one
/// row per occupied or padding cell.
pub fn export_boxes_csv(grid: &OccupancyGrid) -> String {
    let mut out = String::from("level,center_x,center_y,center_z,size\n");
    for (level, key) in grid.boxes() {
        let c = grid.cell_center(level, key);
        let _ = writeln!(out, "{level},{},{},{},{}", num(c.x), num(c.y), num(c.z), num(grid.level_size(level)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::AxisAlignedBox;
    use crate::occupancy::pad;
    use proptest::prelude::*;

    fn zones() -> Vec<SafetyZone> {
        vec![
            SafetyZone::new(
                "table \"left\"",
                AxisAlignedBox::new(Point3::new(0.1, -0.3, 0.0), Point3::new(0.7, 0.3, 0.75)).unwrap(),
            )
            .unwrap(),
            SafetyZone::new(
                "door",
                AxisAlignedBox::new(Point3::new(-1.0 / 3.0, 1.0, 0.0), Point3::new(0.2, 1.1, 2.0)).unwrap(),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn round_trip_with_padding_and_zones() {
        let mut g = OccupancyGrid::with_occupied(0.05, Point3::new(0.1, -0.2, 0.3), [[0, 0, 0], [-3, 4, 1]]).unwrap();
        g.set_version(7);
        let g = pad(&g, 2);
        let text = save_grid(&g, &zones());
        let (back, z) = load_grid(&text, "doc").unwrap();
        assert_eq!(back, g);
        assert_eq!(z, zones());
        assert_eq!(save_grid(&back, &z), text);
    }

    #[test]
    fn empty_grid_document() {
        let g = OccupancyGrid::new(0.05, Point3::origin()).unwrap();
        let text = save_grid(&g, &[]);
        assert_eq!(
            text,
            "{\n  \"leaf_m\": 0.05,\n  \"origin\": [0.0, 0.0, 0.0],\n  \"version\": 0,\n  \"occupied\": [\n  ],\n  \"padding\": [\n  ],\n  \"zones\": [\n  ]\n}\n"
        );
        assert_eq!(load_grid(&text, "doc").unwrap().0, g);
    }

    #[test]
    fn malformed_documents() {
        let dup = r#"{"leaf_m":0.05,"origin":[0,0,0],"version":0,"occupied":[[0,0,0],[1,0,0],[0,0,0]]}"#;
        match load_grid(dup, "doc") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "doc occupied[2]"),
            other => panic!("{other:?}"),
        }
        let gap = r#"{"leaf_m":0.05,"origin":[0,0,0],"version":0,"occupied":[],"padding":[{"level":2,"keys":[]}]}"#;
        assert!(matches!(load_grid(gap, "doc"), Err(Error::Parse { .. })));
        let bad_leaf = r#"{"leaf_m":0,"origin":[0,0,0],"version":0,"occupied":[]}"#;
        assert!(matches!(load_grid(bad_leaf, "doc"), Err(Error::Parse { .. })));
        match load_grid("{\n \"leaf_m\": 0.05,\n \"oops\": 1}", "doc") {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("doc line 3"), "{location}"),
            other => panic!("{other:?}"),
        }
        let twin_zones = r#"{"leaf_m":0.05,"origin":[0,0,0],"version":0,"occupied":[],
            "zones":[{"name":"a","min":[0,0,0],"max":[1,1,1]},{"name":"a","min":[0,0,0],"max":[1,1,1]}]}"#;
        assert!(matches!(load_grid(twin_zones, "doc"), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_rows() {
        let g = pad(&OccupancyGrid::with_occupied(0.05, Point3::origin(), [[0, 0, 0]]).unwrap(), 1);
        let csv = export_boxes_csv(&g);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 1 + 24);
        assert_eq!(lines[1], "0,0.025,0.025,0.025,0.05");
        assert!(lines[2..].iter().all(|l| l.starts_with("1,") && l.ends_with(",0.025")));
    }

    proptest! {
        #[test]
        fn random_grids_round_trip(
            keys in proptest::collection::btree_set((-50i64..50, -50i64..50, -50i64..50), 0..60),
            leaf in 0.001..1.0f64,
            ox in -10.0..10.0f64,
            levels in 0usize..3,
        ) {
            let g = OccupancyGrid::with_occupied(leaf, Point3::new(ox, -ox / 3.0, 0.0), keys.iter().map(|&(a, b, c)| [a, b, c])).unwrap();
            let g = pad(&g, levels);
            let (back, _) = load_grid(&save_grid(&g, &[]), "doc").unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
