//! Pinhole camera with Brown–Conrady lens distortion.
//!
//! Normalised image coordinates are `(X/Z, Y/Z)` in the camera frame. Pixel
//! `(row i, col j)` of a `width × height` raster is sampled at its centre,
//! `(j + 0.5, i + 0.5)`, before applying `K⁻¹`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{is_rotation, Mat3, Vec2, Vec3};
use crate::skeleton::Pose;

/// Depth below which a point is considered to be on or behind the image plane.
pub const MIN_DEPTH: f64 = 1e-6;

pub const DEFAULT_UNDISTORT_ITERS: usize = 20;
pub const DEFAULT_UNDISTORT_TOL: f64 = 1e-9;

/// Radial (`k1, k2, k3`) and tangential (`p1, p2`) lens coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    /// Coefficients in the usual calibration-file order `(k1, k2, p1, p2, k3)`.
    pub fn from_array(c: [f64; 5]) -> Self {
        Self {
            k1: c[0],
            k2: c[1],
            p1: c[2],
            p2: c[3],
            k3: c[4],
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    pub fn is_identity(&self) -> bool {
        self.to_array().iter().all(|&c| c == 0.0)
    }

    fn radial(&self, r2: f64) -> f64 {
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
    }

    fn tangential(&self, p: &Vec2) -> Vec2 {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        Vec2::new(
            2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    /// Forward lens model on a normalised point.
    pub fn distort(&self, p: &Vec2) -> Vec2 {
        p * self.radial(p.norm_squared()) + self.tangential(p)
    }

    /// Inverts [`Distortion::distort`] by fixed-point iteration
    /// `q ← (p - tangential(q)) / radial(q)`, starting from `q = p`.
    pub fn undistort(&self, p: &Vec2, iters: usize, tol: f64) -> Result<Vec2> {
        let mut q = *p;
        let mut residual = f64::INFINITY;
        for _ in 0..iters.max(1) {
            q = (p - self.tangential(&q)) / self.radial(q.norm_squared());
            residual = (self.distort(&q) - p).amax();
            if residual <= tol {
                return Ok(q);
            }
        }
        if residual.is_finite() && residual <= tol {
            Ok(q)
        } else {
            Err(Error::NoConvergence {
                residual,
                iters: iters.max(1),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub intrinsics: Mat3,
    pub distortion: Distortion,
    /// Rotation from the source (world) frame into this camera's frame.
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    /// Undistorted pinhole with the principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Self {
        Self::pinhole(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Self {
            intrinsics: Mat3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0),
            distortion: Distortion::default(),
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            width,
            height,
        }
    }

    pub fn with_distortion(mut self, distortion: Distortion) -> Self {
        self.distortion = distortion;
        self
    }

    pub fn with_extrinsics(mut self, rotation: Mat3, translation: Vec3) -> Self {
        self.rotation = rotation;
        self.translation = translation;
        self
    }

    /// Every invariant the renderer relies on, as human-readable violations.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let k = &self.intrinsics;
        if !k.iter().all(|v| v.is_finite()) || k.try_inverse().is_none() {
            out.push("intrinsics must be finite and invertible".to_string());
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            out.push("focal lengths must be positive".to_string());
        }
        if !self.distortion.to_array().iter().all(|c| c.is_finite()) {
            out.push("distortion coefficients must be finite".to_string());
        }
        if !is_rotation(&self.rotation, 1e-9) {
            out.push("extrinsic rotation is not in SO(3)".to_string());
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            out.push("translation must be finite".to_string());
        }
        if self.width == 0 || self.height == 0 {
            out.push("image dimensions must be positive".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Undistorted normalised coordinates `(x, y)` of a continuous pixel
    /// position `(u, v)`.
    pub fn normalized_point(&self, pixel: &Vec2) -> Result<Vec2> {
        let k_inv = self
            .intrinsics
            .try_inverse()
            .ok_or_else(|| Error::Validation(vec!["intrinsics are singular".into()]))?;
        let h = k_inv * Vec3::new(pixel.x, pixel.y, 1.0);
        let distorted = Vec2::new(h.x / h.z, h.y / h.z);
        self.distortion
            .undistort(&distorted, DEFAULT_UNDISTORT_ITERS, DEFAULT_UNDISTORT_TOL)
    }

    /// Unit ray through a continuous pixel position `(u, v)`.
    pub fn pixel_ray(&self, pixel: &Vec2) -> Result<Vec3> {
        let q = self.normalized_point(pixel)?;
        Ok(Vec3::new(q.x, q.y, 1.0).normalize())
    }

    /// Pixel position of a camera-frame point.
    pub fn project(&self, p: &Vec3) -> Result<Vec2> {
        if !(p.z > MIN_DEPTH) {
            return Err(Error::BehindCamera { depth: p.z });
        }
        let d = self.distortion.distort(&Vec2::new(p.x / p.z, p.y / p.z));
        let h = self.intrinsics * Vec3::new(d.x, d.y, 1.0);
        Ok(Vec2::new(h.x / h.z, h.y / h.z))
    }

    /// Pixel position of a point given in the source frame.
    pub fn project_world(&self, p: &Vec3) -> Result<Vec2> {
        self.project(&self.world_to_camera(p))
    }

    /// Camera centre in the source frame.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Per-pixel unit rays in the camera frame, row-major.
#[derive(Debug, Clone)]
pub struct RayGrid {
    pub width: usize,
    pub height: usize,
    /// `None` where undistortion failed to converge.
    rays: Vec<Option<Vec3>>,
}

impl RayGrid {
    pub fn get(&self, row: usize, col: usize) -> Option<&Vec3> {
        self.rays[row * self.width + col].as_ref()
    }

    pub fn rays(&self) -> &[Option<Vec3>] {
        &self.rays
    }

    pub fn invalid_count(&self) -> usize {
        self.rays.iter().filter(|r| r.is_none()).count()
    }

    pub fn from_rays(width: usize, height: usize, rays: Vec<Option<Vec3>>) -> Self {
        assert_eq!(rays.len(), width * height);
        Self {
            width,
            height,
            rays,
        }
    }
}

/// The continuous pixel position sampled for storage index `(row, col)`.
pub fn pixel_center(row: usize, col: usize) -> Vec2 {
    Vec2::new(col as f64 + 0.5, row as f64 + 0.5)
}

pub fn make_rays(cam: &CameraModel) -> Result<RayGrid> {
    cam.validate()?;
    let rays = (0..cam.height)
        .flat_map(|i| (0..cam.width).map(move |j| (i, j)))
        .map(|(i, j)| match cam.pixel_ray(&pixel_center(i, j)) {
            Ok(r) => Ok(Some(r)),
            Err(Error::NoConvergence { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RayGrid {
        width: cam.width,
        height: cam.height,
        rays,
    })
}

/// `P₂ = R·P₁ + t` per joint; confidences are carried over.
pub fn transfer_pose(pose: &Pose, rotation: &Mat3, translation: &Vec3) -> Pose {
    Pose {
        joints: pose.joints.iter().map(|p| rotation * p + translation).collect(),
        confidence: pose.confidence.clone(),
    }
}

/// `n_frames` cameras evenly spaced in azimuth on a sphere around `center`,
/// all looking at it with world `-y` as up.
pub fn orbit_cameras(
    center: &Vec3,
    radius: f64,
    elevation: f64,
    n_frames: usize,
    template: &CameraModel,
) -> Result<Vec<CameraModel>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Validation(vec!["orbit radius must be positive".into()]));
    }
    if n_frames == 0 {
        return Err(Error::Validation(vec!["orbit needs at least one frame".into()]));
    }
    let cameras = (0..n_frames)
        .map(|k| {
            let azimuth = std::f64::consts::TAU * k as f64 / n_frames as f64;
            // y is down in the source frame, so positive elevation is -y.
            let offset = Vec3::new(
                elevation.cos() * azimuth.sin(),
                -elevation.sin(),
                -elevation.cos() * azimuth.cos(),
            ) * radius;
            let eye = center + offset;
            let rotation = look_at(&eye, center);
            let translation = -(rotation * eye);
            CameraModel {
                rotation,
                translation,
                ..template.clone()
            }
        })
        .collect();
    Ok(cameras)
}

/// Rotation whose rows are the camera axes (x right, y down, z forward).
fn look_at(eye: &Vec3, target: &Vec3) -> Mat3 {
    let forward = (target - eye).normalize();
    let mut down = Vec3::new(0.0, 1.0, 0.0);
    if forward.cross(&down).norm() < 1e-9 {
        down = Vec3::new(-1.0, 0.0, 0.0);
    }
    let down = (down - down.dot(&forward) * forward).normalize();
    let right = down.cross(&forward);
    Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}
