//! Locating the robot in the map: a sampled point cloud of the robot model is
//! aligned to the scene by ICP, starting from a coarse user-placed seed pose.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::io::{read_mesh, write_mesh};
use crate::geom::{KdTree, Point3, PointCloud, RigidTransform, TriangleMesh};
use crate::registration::{icp, sample_mesh, IcpParams, IcpResult};

/// One rigid link, its mesh expressed in the link frame and `pose` mapping the
/// link frame into the robot-base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotLink {
    pub name: String,
    pub mesh: TriangleMesh,
    pub pose: RigidTransform,
}

/// A robot frozen in its referencing posture.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    links: Vec<RobotLink>,
    reach: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    name: String,
    mesh: PathBuf,
    #[serde(default = "RigidTransform::identity")]
    pose: RigidTransform,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    reach: f64,
    links: Vec<LinkEntry>,
}

impl RobotModel {
    pub fn new(links: Vec<RobotLink>, reach: f64) -> Result<Self> {
        if !(reach > 0.0 && reach.is_finite()) {
            return Err(Error::invalid(format!("robot reach must be positive, got {reach}")));
        }
        if links.is_empty() {
            return Err(Error::invalid("robot model needs at least one link"));
        }
        let mut names = BTreeSet::new();
        for link in &links {
            if link.name.is_empty() || !names.insert(link.name.as_str()) {
                return Err(Error::invalid(format!("link name `{}` is empty or repeated", link.name)));
            }
        }
        Ok(RobotModel { links, reach })
    }

    pub fn links(&self) -> &[RobotLink] {
        &self.links
    }

    /// Maximum reach from the base origin, meters.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// Union of all link meshes in the base frame.
    pub fn mesh(&self) -> TriangleMesh {
        let mut out = TriangleMesh::default();
        for link in &self.links {
            out.append(&link.mesh.transformed(&link.pose));
        }
        out
    }

    /// Reads a JSON manifest `{reach, links: [{name, mesh, pose}]}`; mesh
    /// paths are relative to the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::json(&path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let links = manifest
            .links
            .into_iter()
            .map(|entry| {
                Ok(RobotLink {
                    mesh: read_mesh(base.join(&entry.mesh))?,
                    name: entry.name,
                    pose: entry.pose,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RobotModel::new(links, manifest.reach)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    /// Writes `manifest_name` plus one PLY per link into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, manifest_name: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut links = Vec::new();
        for link in &self.links {
            let file = PathBuf::from(format!("{}.ply", link.name));
            write_mesh(dir.join(&file), &link.mesh)?;
            links.push(LinkEntry {
                name: link.name.clone(),
                mesh: file,
                pose: link.pose,
            });
        }
        let manifest = Manifest {
            reach: self.reach,
            links,
        };
        let path = dir.join(manifest_name);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// A small asymmetric arm built from boxes: a base plate, a column offset
    /// from the base center, an upper arm along +x and a tool pointing down.
    /// Reach 1.5 m.
    pub fn demo_arm() -> RobotModel {
        let block = |name: &str, min: [f64; 3], max: [f64; 3]| RobotLink {
            name: name.to_string(),
            mesh: TriangleMesh::cuboid(Point3::from(min), Point3::from(max), false),
            pose: RigidTransform::identity(),
        };
        let links = vec![
            block("base", [-0.15, -0.15, 0.0], [0.15, 0.15, 0.2]),
            block("column", [-0.1, -0.02, 0.2], [0.02, 0.1, 0.8]),
            block("upper_arm", [-0.1, -0.02, 0.8], [0.5, 0.08, 0.9]),
            block("tool", [0.4, -0.01, 0.55], [0.48, 0.07, 0.8]),
        ];
        RobotModel::new(links, 1.5).expect("demo arm is valid")
    }
}

fn link_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Surface samples of every link in the robot-base frame. Each link gets
/// `round(area * points_per_m2)` points from a stream seeded by `seed` and the
/// link name, so a link's samples do not depend on link order. Links without
/// area are skipped.
pub fn model_cloud(model: &RobotModel, points_per_m2: f64, seed: u64) -> Result<PointCloud> {
    if !(points_per_m2 > 0.0 && points_per_m2.is_finite()) {
        return Err(Error::invalid(format!("sampling density must be positive, got {points_per_m2}")));
    }
    let mut out = PointCloud::new();
    let mut any_area = false;
    for link in &model.links {
        let area = link.mesh.surface_area();
        if area <= 0.0 {
            log::warn!("link `{}` has no surface area; skipped", link.name);
            continue;
        }
        any_area = true;
        let n = (area * points_per_m2).round() as usize;
        let samples = sample_mesh(&link.mesh, n, link_seed(seed, &link.name))?;
        out.extend(&samples.transformed(&link.pose));
    }
    if !any_area {
        return Err(Error::invalid("robot model has no link with surface area"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceOptions {
    pub icp: IcpParams,
    /// Model sampling density, points per square meter.
    pub points_per_m2: f64,
    pub seed: u64,
    /// A fit whose RMS exceeds this (meters) is reported as not converged:
    /// the model has latched onto the wrong structure.
    pub max_rms: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            icp: IcpParams {
                max_iterations: 100,
                max_correspondence: 0.2,
                ..IcpParams::default()
            },
            points_per_m2: 5_000.0,
            seed: 0,
            max_rms: 0.035,
        }
    }
}

/// Aligns the robot model to `scene` starting from `seed_pose` (robot base in
/// map coordinates). Returns the refined robot-to-map transform with the ICP
/// report; `converged == false` (ICP did not settle, too little overlap, or
/// RMS above `max_rms`) means referencing failed and the transform must not
/// be used.
pub fn reference(
    scene: &PointCloud,
    model: &RobotModel,
    seed_pose: &RigidTransform,
    opts: &ReferenceOptions,
) -> Result<(RigidTransform, IcpResult)> {
    if scene.is_empty() {
        return Err(Error::invalid("referencing needs a non-empty scene"));
    }
    let source = model_cloud(model, opts.points_per_m2, opts.seed)?;
    let tree = KdTree::build(scene);
    let mut result = icp(&source, &tree, seed_pose, &opts.icp)?;
    result.converged &= result.rms <= opts.max_rms;
    log::info!(
        "referencing: rms {:.4} m, overlap {:.3}, converged {}",
        result.rms,
        result.overlap_fraction,
        result.converged
    );
    Ok((result.transform, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vector3;

    fn cube_link(name: &str, side: f64, at: Vector3) -> RobotLink {
        RobotLink {
            name: name.into(),
            mesh: TriangleMesh::cuboid(Point3::origin(), Point3::new(side, side, side), false),
            pose: RigidTransform::from_translation(at),
        }
    }

    #[test]
    fn cube_link_area_count() {
        let model = RobotModel::new(vec![cube_link("a", 0.1, Vector3::zeros())], 1.0).unwrap();
        let cloud = model_cloud(&model, 10_000.0, 1).unwrap();
        assert_eq!(cloud.len(), 600);
        for p in cloud.iter() {
            let on_face = (0..3).any(|i| p[i].abs() < 1e-12 || (p[i] - 0.1).abs() < 1e-12);
            assert!(on_face && (0..3).all(|i| (-1e-12..=0.1 + 1e-12).contains(&p[i])));
        }
    }

    #[test]
    fn zero_area_links_rejected() {
        let flat = TriangleMesh::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let link = RobotLink {
            name: "flat".into(),
            mesh: flat,
            pose: RigidTransform::identity(),
        };
        let model = RobotModel::new(vec![link], 1.0).unwrap();
        assert!(model_cloud(&model, 1000.0, 0).is_err());
    }

    #[test]
    fn link_counts_add_up_and_ignore_order() {
        let a = cube_link("a", 0.1, Vector3::zeros());
        let b = cube_link("b", 0.2, Vector3::new(0.5, 0.0, 0.0));
        let both = RobotModel::new(vec![a.clone(), b.clone()], 1.0).unwrap();
        let swapped = RobotModel::new(vec![b.clone(), a.clone()], 1.0).unwrap();
        let ca = model_cloud(&RobotModel::new(vec![a], 1.0).unwrap(), 10_000.0, 5).unwrap();
        let cb = model_cloud(&RobotModel::new(vec![b], 1.0).unwrap(), 10_000.0, 5).unwrap();
        let c = model_cloud(&both, 10_000.0, 5).unwrap();
        assert_eq!(c.len(), ca.len() + cb.len());
        assert_eq!(&c.points()[..ca.len()], ca.points());
        let s = model_cloud(&swapped, 10_000.0, 5).unwrap();
        assert_eq!(&s.points()[..cb.len()], cb.points());
        assert_eq!(&s.points()[cb.len()..], ca.points());
    }

    #[test]
    fn model_validation() {
        assert!(RobotModel::new(vec![], 1.0).is_err());
        assert!(RobotModel::new(vec![cube_link("a", 0.1, Vector3::zeros())], 0.0).is_err());
        let dup = vec![cube_link("a", 0.1, Vector3::zeros()), cube_link("a", 0.1, Vector3::x())];
        assert!(RobotModel::new(dup, 1.0).is_err());
    }

    #[test]
    fn exact_seed_is_a_fixed_point() {
        let model = RobotModel::demo_arm();
        let opts = ReferenceOptions::default();
        let pose = RigidTransform::from_euler(0.0, 0.0, 0.7, Vector3::new(1.0, -0.5, 0.0));
        let scene = model_cloud(&model, opts.points_per_m2, opts.seed).unwrap().transformed(&pose);
        let (found, r) = reference(&scene, &model, &pose, &opts).unwrap();
        assert!(r.converged);
        assert!(r.rms < 1e-9);
        assert!(found.max_abs_diff(&pose) < 1e-9);
    }

    #[test]
    fn empty_scene_rejected() {
        let opts = ReferenceOptions::default();
        let r = reference(&PointCloud::new(), &RobotModel::demo_arm(), &RigidTransform::identity(), &opts);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = RobotModel::demo_arm();
        model.links[1].pose = RigidTransform::from_euler(0.1, 0.0, 0.3, Vector3::new(0.0, 0.1, 0.0));
        let path = model.save(dir.path(), "robot.json").unwrap();
        let back = RobotModel::load(&path).unwrap();
        assert_eq!(back, model);
        std::fs::write(&path, r#"{"reach": 1.0, "links": [{"name": "x", "mesh": "missing.ply"}]}"#).unwrap();
        assert!(matches!(RobotModel::load(&path), Err(Error::Io { .. })));
        std::fs::write(&path, r#"{"reach": 1.0, "links": []}"#).unwrap();
        assert!(matches!(RobotModel::load(&path), Err(Error::Parse { .. })));
    }
}
