//! Skeleton graphs, poses and the limb primitives built from them.

mod depth;
mod fusion;

pub use depth::{reprojection_error, solve_root_depth, DEGENERATE_DENOMINATOR};
pub use fusion::{fuse_appearances, fuse_poses, mpjpe, pose_loss};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_between, Mat3, Vec2, Vec3, NORM_EPS};

/// Limb width used when a scene does not specify one, in meters.
pub const DEFAULT_WIDTH: f64 = 0.05;

/// Per-limb appearance vectors, one row per edge.
pub type Appearances = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonGraph {
    n_joints: usize,
    edges: Vec<(usize, usize)>,
    widths: Vec<f64>,
    names: Vec<String>,
}

impl SkeletonGraph {
    pub fn new(n_joints: usize, edges: Vec<(usize, usize)>, widths: Vec<f64>) -> Result<Self> {
        Self::with_names(n_joints, edges, widths, Vec::new())
    }

    pub fn with_names(
        n_joints: usize,
        edges: Vec<(usize, usize)>,
        widths: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let graph = Self {
            n_joints,
            edges,
            widths,
            names,
        };
        let v = graph.violations();
        if v.is_empty() {
            Ok(graph)
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Every edge gets [`DEFAULT_WIDTH`].
    pub fn with_default_widths(n_joints: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let widths = vec![DEFAULT_WIDTH; edges.len()];
        Self::new(n_joints, edges, widths)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.widths.len() != self.edges.len() {
            out.push(format!(
                "{} widths given for {} edges",
                self.widths.len(),
                self.edges.len()
            ));
        }
        if !self.names.is_empty() && self.names.len() != self.n_joints {
            out.push(format!("{} names given for {} joints", self.names.len(), self.n_joints));
        }
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            if i >= self.n_joints || j >= self.n_joints {
                out.push(format!("edge {k} ({i}, {j}) references a joint >= {}", self.n_joints));
            }
            if i == j {
                out.push(format!("edge {k} is a self loop on joint {i}"));
            }
            let dup = self.edges[..k]
                .iter()
                .any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i));
            if dup {
                out.push(format!("edge {k} ({i}, {j}) is a duplicate"));
            }
        }
        for (k, w) in self.widths.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                out.push(format!("width of edge {k} must be positive, got {w}"));
            }
        }
        out
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Same topology with replaced widths.
    pub fn with_widths(&self, widths: Vec<f64>) -> Result<Self> {
        Self::with_names(self.n_joints, self.edges.clone(), widths, self.names.clone())
    }
}

/// Absolute joint positions in a camera frame, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub joints: Vec<Vec3>,
    pub confidence: Vec<f64>,
}

impl Pose {
    /// Fully confident pose.
    pub fn new(joints: Vec<Vec3>) -> Self {
        let confidence = vec![1.0; joints.len()];
        Self { joints, confidence }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.confidence.len() != self.joints.len() {
            out.push(format!(
                "{} confidences for {} joints",
                self.confidence.len(),
                self.joints.len()
            ));
        }
        if let Some(k) = self.joints.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            out.push(format!("joint {k} is not finite"));
        }
        if let Some(k) = self.confidence.iter().position(|c| !(0.0..=1.0).contains(c)) {
            out.push(format!("confidence {k} is outside [0, 1]"));
        }
        out
    }

    /// Offsets of every non-root joint from joint 0.
    pub fn relative(&self) -> RelativePose {
        let root = self.joints[0];
        RelativePose {
            offsets: self.joints[1..].iter().map(|p| p - root).collect(),
        }
    }

    pub fn root(&self) -> Vec3 {
        self.joints[0]
    }
}

/// Non-root joints as offsets from the root, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub offsets: Vec<Vec3>,
}

/// Joints in normalised ray coordinates `(x, y)` with an implicit `z = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    pub points: Vec<Vec2>,
    pub confidence: Vec<f64>,
}

impl Pose2D {
    pub fn new(points: Vec<Vec2>) -> Self {
        let confidence = vec![1.0; points.len()];
        Self { points, confidence }
    }
}

/// `P = [root | root + P̄]` with unit confidences.
pub fn assemble_absolute_pose(root: &Vec3, rel: &RelativePose) -> Pose {
    let joints = std::iter::once(*root)
        .chain(rel.offsets.iter().map(|o| root + o))
        .collect();
    Pose::new(joints)
}

/// An anisotropic Gaussian with shape `Σ = R·diag(scales)·Rᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub mean: Vec3,
    pub rotation: Mat3,
    pub scales: Vec3,
}

impl Primitive {
    pub fn shape(&self) -> Mat3 {
        self.rotation * Mat3::from_diagonal(&self.scales) * self.rotation.transpose()
    }

    /// `Σ⁻¹`, inverted through the diagonal factor.
    pub fn precision(&self) -> Mat3 {
        let inv = self.scales.map(|s| 1.0 / s);
        self.rotation * Mat3::from_diagonal(&inv) * self.rotation.transpose()
    }

    /// The primitive seen from a frame related by `x' = R·x + t`.
    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Self {
        Self {
            mean: rotation * self.mean + translation,
            rotation: rotation * self.rotation,
            scales: self.scales,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrimitiveSet {
    pub primitives: Vec<Primitive>,
}

impl PrimitiveSet {
    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Self {
        Self {
            primitives: self
                .primitives
                .iter()
                .map(|p| p.transformed(rotation, translation))
                .collect(),
        }
    }
}

/// Limb `(i, j)` becomes a Gaussian centred between its joints, stretched to
/// the limb length along the limb and to the limb width across it.
pub fn primitives_from_pose(pose: &Pose, graph: &SkeletonGraph) -> Result<PrimitiveSet> {
    if pose.len() != graph.n_joints() {
        return Err(Error::ShapeMismatch(format!(
            "pose has {} joints, skeleton has {}",
            pose.len(),
            graph.n_joints()
        )));
    }
    let axis = Vec3::x();
    let primitives = graph
        .edges()
        .iter()
        .zip(graph.widths())
        .enumerate()
        .map(|(k, (&(i, j), &w))| {
            let (a, b) = (pose.joints[i], pose.joints[j]);
            let limb = b - a;
            let length = limb.norm();
            if !(length > NORM_EPS) {
                return Err(Error::DegenerateLimb {
                    edge: k,
                    from: i,
                    to: j,
                });
            }
            Ok(Primitive {
                mean: (a + b) / 2.0,
                rotation: rotation_between(&axis, &limb)?,
                scales: Vec3::new(length, w, w),
            })
        })
        .collect::<Result<_>>()?;
    Ok(PrimitiveSet { primitives })
}
