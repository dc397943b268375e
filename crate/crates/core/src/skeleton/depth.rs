//! Closed-form depth of the root joint from a 2D pose and a root-relative 3D
//! pose.
//!
//! With the root at `Z·(x₁, y₁, 1)` and joint `j` at `Z·(x₁, y₁, 1) + P̄ⱼ`,
//! setting the reprojection residual of joint `j` to be stationary in `Z`
//! gives a per-joint depth estimate; the solver averages them over the joints
//! whose estimate is well defined.

use crate::error::{Error, Result};
use crate::geometry::Vec3;

use super::{Pose2D, RelativePose};

/// Per-joint denominators below this are skipped.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

pub fn solve_root_depth(p2d: &Pose2D, rel: &RelativePose) -> Result<f64> {
    let n = p2d.points.len();
    if n < 2 {
        return Err(Error::ShapeMismatch("root depth needs at least two joints".into()));
    }
    if rel.offsets.len() != n - 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} 2D joints but {} relative offsets",
            n,
            rel.offsets.len()
        )));
    }
    let (x1, y1) = (p2d.points[0].x, p2d.points[0].y);
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, o) in p2d.points[1..].iter().zip(&rel.offsets) {
        let (xj, yj) = (p.x, p.y);
        let (bx, by, bz) = (o.x, o.y, o.z);
        let numerator = bx * bx + by * by
            + ((xj * x1 + yj * y1) * bz - (xj + x1) * bx - (yj + y1) * by) * bz;
        let denominator = (xj - x1) * (bx - x1 * bz) + (yj - y1) * (by - y1 * bz);
        if denominator.abs() < DEGENERATE_DENOMINATOR {
            continue;
        }
        sum += numerator / denominator;
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateConfiguration);
    }
    Ok(sum / used as f64)
}

/// Mean squared distance between the 2D pose and the relative pose
/// re-projected with its root at depth `z`. Infinite if any joint ends up on
/// or behind the image plane.
pub fn reprojection_error(z: f64, p2d: &Pose2D, rel: &RelativePose) -> f64 {
    let root = Vec3::new(z * p2d.points[0].x, z * p2d.points[0].y, z);
    let mut total = 0.0;
    for (p, o) in p2d.points[1..].iter().zip(&rel.offsets) {
        let q = root + o;
        if q.z <= 0.0 {
            return f64::INFINITY;
        }
        let (dx, dy) = (q.x / q.z - p.x, q.y / q.z - p.y);
        total += dx * dx + dy * dy;
    }
    total / rel.offsets.len() as f64
}
