//! TOML scene files.
//!
//! ```toml
//! [skeleton]
//! n_joints = 3
//! edges = [[0, 1], [1, 2]]
//! widths = [0.05, 0.05]          # optional, 0.05 m per limb
//! names = ["hip", "knee", "ankle"] # optional
//!
//! [pose]
//! joints = [[0.0, 0.0, 3.0], [0.1, 0.3, 3.0], [0.1, 0.6, 3.1]]
//! confidence = [1.0, 1.0, 1.0]   # optional
//!
//! [appearance]
//! limbs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
//! background = [0.0, 0.0, 0.0]
//!
//! [render]
//! alpha = 0.025
//! beta = 2.0
//! channels = 3
//! width = 64
//! height = 64
//! background_min_depth = 1.0
//!
//! [cameras.input]
//! K = [64.0, 0.0, 32.0, 0.0, 64.0, 32.0, 0.0, 0.0, 1.0]  # row-major
//! dist = [0.0, 0.0, 0.0, 0.0, 0.0]                      # k1 k2 p1 p2 k3
//! R = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]      # world to camera
//! t = [0.0, 0.0, 0.0]
//! width = 64
//! height = 64
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamVector;
use crate::camera::{CameraModel, Distortion};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec2, Vec3};
use crate::renderer::{RenderConfig, DEFAULT_ALPHA, DEFAULT_BACKGROUND_MIN_DEPTH, DEFAULT_BETA};
use crate::skeleton::{Appearances, Pose, Pose2D, RelativePose, SkeletonGraph, DEFAULT_WIDTH};

/// Camera that `depth` and the fitting tools read observations from.
pub const INPUT_CAMERA: &str = "input";

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub graph: SkeletonGraph,
    pub pose: Pose,
    pub appearances: Appearances,
    pub render: RenderConfig,
    pub cameras: BTreeMap<String, CameraModel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    skeleton: SkeletonDoc,
    pose: PoseDoc,
    appearance: AppearanceDoc,
    render: RenderDoc,
    #[serde(default)]
    cameras: BTreeMap<String, CameraDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkeletonDoc {
    n_joints: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    widths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    joints: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AppearanceDoc {
    limbs: Vec<Vec<f64>>,
    background: Vec<f64>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_min_depth() -> f64 {
    DEFAULT_BACKGROUND_MIN_DEPTH
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RenderDoc {
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_beta")]
    beta: f64,
    channels: usize,
    width: usize,
    height: usize,
    #[serde(default = "default_min_depth")]
    background_min_depth: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraDoc {
    #[serde(rename = "K")]
    k: [f64; 9],
    #[serde(default)]
    dist: [f64; 5],
    #[serde(rename = "R", default = "identity9")]
    r: [f64; 9],
    #[serde(default)]
    t: [f64; 3],
    width: usize,
    height: usize,
}

fn identity9() -> [f64; 9] {
    [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
}

fn row_major9(m: &Mat3) -> [f64; 9] {
    std::array::from_fn(|i| m[(i / 3, i % 3)])
}

impl CameraDoc {
    fn from_model(c: &CameraModel) -> Self {
        Self {
            k: row_major9(&c.intrinsics),
            dist: c.distortion.to_array(),
            r: row_major9(&c.rotation),
            t: [c.translation.x, c.translation.y, c.translation.z],
            width: c.width,
            height: c.height,
        }
    }

    fn to_model(&self) -> CameraModel {
        CameraModel {
            intrinsics: Mat3::from_row_slice(&self.k),
            distortion: Distortion::from_array(self.dist),
            rotation: Mat3::from_row_slice(&self.r),
            translation: Vec3::from(self.t),
            width: self.width,
            height: self.height,
        }
    }
}

impl SceneFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let doc: Doc = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().replace('\n', " | "),
        })?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: Doc) -> Result<Self> {
        let mut problems = Vec::new();
        let n_edges = doc.skeleton.edges.len();
        let widths = doc.skeleton.widths.unwrap_or_else(|| vec![DEFAULT_WIDTH; n_edges]);
        let graph = SkeletonGraph::with_names(
            doc.skeleton.n_joints,
            doc.skeleton.edges.iter().map(|e| (e[0], e[1])).collect(),
            widths,
            doc.skeleton.names,
        );
        let pose = Pose {
            joints: doc.pose.joints.iter().map(|j| Vec3::from(*j)).collect(),
            confidence: doc.pose.confidence.unwrap_or_else(|| vec![1.0; doc.pose.joints.len()]),
        };
        problems.extend(pose.violations());
        if pose.len() != doc.skeleton.n_joints {
            problems.push(format!("pose has {} joints, skeleton has {}", pose.len(), doc.skeleton.n_joints));
        }

        let channels = doc.render.channels;
        let limbs = &doc.appearance.limbs;
        if limbs.len() != n_edges {
            problems.push(format!("{} appearance rows for {n_edges} limbs", limbs.len()));
        }
        if let Some(k) = limbs.iter().position(|row| row.len() != channels) {
            problems.push(format!("appearance row {k} has {} channels, expected {channels}", limbs[k].len()));
        }
        if doc.appearance.background.len() != channels {
            problems.push(format!(
                "background has {} channels, expected {channels}",
                doc.appearance.background.len()
            ));
        }
        if !limbs.iter().flatten().all(|v| v.is_finite()) {
            problems.push("appearances must be finite".into());
        }
        let render = RenderConfig {
            alpha: doc.render.alpha,
            beta: doc.render.beta,
            background: doc.appearance.background,
            width: doc.render.width,
            height: doc.render.height,
            background_min_depth: doc.render.background_min_depth,
        };
        problems.extend(render.violations());

        let mut cameras = BTreeMap::new();
        for (name, c) in &doc.cameras {
            let cam = c.to_model();
            problems.extend(cam.violations().into_iter().map(|v| format!("camera `{name}`: {v}")));
            cameras.insert(name.clone(), cam);
        }

        let graph = match graph {
            Ok(g) => Some(g),
            Err(Error::Validation(v)) => {
                problems.extend(v);
                None
            }
            Err(e) => return Err(e),
        };
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let appearances = if limbs.is_empty() {
            Appearances::zeros(0, channels)
        } else {
            Appearances::from_fn(n_edges, channels, |i, j| limbs[i][j])
        };
        Ok(Self {
            graph: graph.expect("validated"),
            pose,
            appearances,
            render,
            cameras,
        })
    }

    fn to_doc(&self) -> Doc {
        Doc {
            skeleton: SkeletonDoc {
                n_joints: self.graph.n_joints(),
                edges: self.graph.edges().iter().map(|&(i, j)| [i, j]).collect(),
                widths: Some(self.graph.widths().to_vec()),
                names: self.graph.names().to_vec(),
            },
            pose: PoseDoc {
                joints: self.pose.joints.iter().map(|j| [j.x, j.y, j.z]).collect(),
                confidence: Some(self.pose.confidence.clone()),
            },
            appearance: AppearanceDoc {
                limbs: (0..self.appearances.nrows())
                    .map(|i| self.appearances.row(i).iter().copied().collect())
                    .collect(),
                background: self.render.background.clone(),
            },
            render: RenderDoc {
                alpha: self.render.alpha,
                beta: self.render.beta,
                channels: self.render.channels(),
                width: self.render.width,
                height: self.render.height,
                background_min_depth: self.render.background_min_depth,
            },
            cameras: self.cameras.iter().map(|(n, c)| (n.clone(), CameraDoc::from_model(c))).collect(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_doc()).map_err(|e| Error::Validation(vec![e.to_string()]))
    }

    pub fn camera(&self, name: &str) -> Result<&CameraModel> {
        self.cameras
            .get(name)
            .ok_or_else(|| Error::Validation(vec![format!("scene has no camera named `{name}`")]))
    }

    /// Render settings for `camera`, taking the image size from the camera.
    pub fn render_config_for(&self, camera: &CameraModel) -> RenderConfig {
        RenderConfig {
            width: camera.width,
            height: camera.height,
            ..self.render.clone()
        }
    }

    pub fn params(&self) -> ParamVector {
        ParamVector::new(
            &self.pose,
            &self.graph,
            self.appearances.clone(),
            self.render.background.clone(),
        )
    }

    /// The scene with its joints, widths and appearances replaced by `p`.
    pub fn with_params(&self, p: &ParamVector) -> Result<Self> {
        let mut out = self.clone();
        out.graph = self.graph.with_widths(p.widths.clone())?;
        out.pose = Pose {
            joints: p.joints.clone(),
            confidence: self.pose.confidence.clone(),
        };
        out.appearances = p.appearances.clone();
        out.render.background = p.background.clone();
        Ok(out)
    }
}

pub fn load_scene(path: &Path) -> Result<SceneFile> {
    let text = super::read_text(path)?;
    SceneFile::parse(&text, path)
}

pub fn save_scene(scene: &SceneFile, path: &Path) -> Result<()> {
    super::write_bytes(path, scene.to_toml()?)
}

/// A root-depth query: pixel positions of every joint and, optionally, the
/// root-relative 3D offsets of the non-root joints.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthQuery {
    pub pixels: Vec<Vec2>,
    pub relative: Option<RelativePose>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthDoc {
    points: Vec<[f64; 2]>,
    #[serde(default)]
    relative: Option<Vec<[f64; 3]>>,
}

impl DepthQuery {
    /// Normalised image coordinates through `cam`'s intrinsics and lens.
    pub fn normalized(&self, cam: &CameraModel) -> Result<Pose2D> {
        let points = self
            .pixels
            .iter()
            .map(|p| cam.normalized_point(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Pose2D::new(points))
    }
}

/// Reads `points = [[u, v], ...]` (pixels) and the optional
/// `relative = [[x, y, z], ...]`.
pub fn load_depth_query(path: &Path) -> Result<DepthQuery> {
    let text = super::read_text(path)?;
    let doc: DepthDoc = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().replace('\n', " | "),
    })?;
    Ok(DepthQuery {
        pixels: doc.points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
        relative: doc.relative.map(|r| RelativePose {
            offsets: r.iter().map(|o| Vec3::from(*o)).collect(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const TWO_LIMB: &str = r#"
[skeleton]
n_joints = 3
edges = [[0, 1], [1, 2]]

[pose]
joints = [[0.0, 0.0, 3.0], [0.1, 0.3, 3.0], [0.1, 0.6, 3.1]]

[appearance]
limbs = [[1.0, 0.0], [0.0, 1.0]]
background = [0.0, 0.0]

[render]
channels = 2
width = 16
height = 12

[cameras.input]
K = [20.0, 0.0, 8.0, 0.0, 20.0, 6.0, 0.0, 0.0, 1.0]
width = 16
height = 12
"#;

    fn parse(text: &str) -> Result<SceneFile> {
        SceneFile::parse(text, Path::new("test.scene"))
    }

    #[test]
    fn defaults_are_filled_in() {
        let s = parse(TWO_LIMB).unwrap();
        assert_eq!(s.graph.n_joints(), 3);
        assert_eq!(s.graph.widths(), &[DEFAULT_WIDTH; 2]);
        assert_eq!(s.pose.confidence, vec![1.0; 3]);
        assert_eq!(s.render.alpha, DEFAULT_ALPHA);
        assert_eq!(s.render.beta, DEFAULT_BETA);
        let cam = s.camera(INPUT_CAMERA).unwrap();
        assert_eq!(cam.rotation, Mat3::identity());
        assert!(cam.distortion.is_identity());
        assert!(s.camera("cam9").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut s = parse(TWO_LIMB).unwrap();
        s.pose.joints[1] = Vec3::new(0.1 + 0.2, -1.0 / 3.0, std::f64::consts::PI);
        s.appearances[(0, 1)] = 1e-300;
        s.render.alpha = 0.1 * 0.3;
        let text = s.to_toml().unwrap();
        assert_eq!(parse(&text).unwrap(), s);
    }

    #[test]
    fn edge_index_out_of_range() {
        let text = TWO_LIMB.replace("edges = [[0, 1], [1, 2]]", "edges = [[0, 1], [1, 3]]");
        match parse(&text) {
            Err(Error::Validation(v)) => assert!(v.iter().any(|m| m.contains('3')), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_violation_is_listed() {
        let text = TWO_LIMB
            .replace("limbs = [[1.0, 0.0], [0.0, 1.0]]", "limbs = [[1.0, 0.0]]")
            .replace("channels = 2", "channels = 2\nalpha = -1.0");
        match parse(&text) {
            Err(Error::Validation(v)) => assert!(v.len() >= 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_location() {
        let text = TWO_LIMB.replace("n_joints = 3", "n_joints = \"three\"");
        match parse(&text) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("line"), "{message}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("[skeleton]\nn_joints = 1\nedges = []\nbogus = 1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn params_write_back() {
        let s = parse(TWO_LIMB).unwrap();
        let mut p = s.params();
        p.joints[2].z += 0.5;
        p.widths[0] = 0.07;
        let t = s.with_params(&p).unwrap();
        assert_eq!(t.pose.joints[2].z, 3.6);
        assert_eq!(t.graph.widths()[0], 0.07);
        assert_eq!(t.params().joints, p.joints);
    }

    #[test]
    fn depth_query_relative_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.toml");
        fs::write(&path, "points = [[8.0, 6.0], [10.0, 7.0]]\n").unwrap();
        let q = load_depth_query(&path).unwrap();
        assert_eq!(q.pixels[1], Vec2::new(10.0, 7.0));
        assert!(q.relative.is_none());
        fs::write(&path, "points = [[8.0, 6.0], [10.0, 7.0]]\nrelative = [[0.1, 0.0, 0.2]]\n").unwrap();
        let q = load_depth_query(&path).unwrap();
        assert_eq!(q.relative.as_ref().unwrap().offsets, vec![Vec3::new(0.1, 0.0, 0.2)]);
        let cam = parse(TWO_LIMB).unwrap().cameras[INPUT_CAMERA].clone();
        let p = q.normalized(&cam).unwrap();
        assert!((p.points[0] - Vec2::zeros()).norm() < 1e-15);
        assert!((p.points[1] - Vec2::new(0.1, 0.05)).norm() < 1e-15);
    }
}
