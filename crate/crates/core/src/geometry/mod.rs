//! Small fixed-size linear algebra shared by every other module.

pub mod erf;

pub use erf::{d_ln_erfc, erfc, erfcx, ln_erfc};

use nalgebra::{Cholesky, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Vectors shorter than this are treated as zero.
pub const NORM_EPS: f64 = 1e-9;

/// Tolerance for the parallel / anti-parallel branches of [`rotation_between`].
const PARALLEL_EPS: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-9;

/// The rotation taking the direction of `x` onto the direction of `y`.
///
/// Built in the plane spanned by `u = x̂` and the normalised rejection `v` of
/// `y` on `u`: the complement projector `I - uuᵀ - vvᵀ` is left untouched and
/// a Givens block rotates within the plane. Parallel inputs give the
/// identity; anti-parallel inputs give a half turn about an axis orthogonal
/// to `x` chosen from its smallest component.
pub fn rotation_between(x: &Vec3, y: &Vec3) -> Result<Mat3> {
    let (nx, ny) = (x.norm(), y.norm());
    if !(nx > NORM_EPS && ny > NORM_EPS) {
        return Err(Error::DegenerateInput("rotation_between needs non-zero vectors"));
    }
    let u = x / nx;
    let cos = (x.dot(y) / (nx * ny)).clamp(-1.0, 1.0);
    if cos >= 1.0 - PARALLEL_EPS {
        return Ok(Mat3::identity());
    }
    if cos <= -1.0 + PARALLEL_EPS {
        let axis = orthogonal_axis(&u);
        return Ok(2.0 * axis * axis.transpose() - Mat3::identity());
    }
    let rejection = y - u.dot(y) * u;
    let v = rejection.normalize();
    let sin = (1.0 - cos * cos).max(0.0).sqrt();

    let complement = Mat3::identity() - u * u.transpose() - v * v.transpose();
    let plane = (cos * u + sin * v) * u.transpose() + (cos * v - sin * u) * v.transpose();
    Ok(complement + plane)
}

/// Unit vector orthogonal to `u`, built from the basis axis along which `u`
/// has its smallest magnitude.
fn orthogonal_axis(u: &Vec3) -> Vec3 {
    let k = u.iamin();
    let mut e = Vec3::zeros();
    e[k] = 1.0;
    (e - u.dot(&e) * u).normalize()
}

/// Cholesky factor of `a`, or [`Error::NotSpd`] if `a` is not symmetric
/// positive definite.
pub fn spd_cholesky(a: &Mat3) -> Result<Cholesky<f64, nalgebra::U3>> {
    let scale = a.abs().max().max(f64::MIN_POSITIVE);
    if !a.iter().all(|v| v.is_finite()) || (a - a.transpose()).abs().max() > SYMMETRY_TOL * scale {
        return Err(Error::NotSpd);
    }
    Cholesky::new(*a).ok_or(Error::NotSpd)
}

pub fn is_spd(a: &Mat3) -> bool {
    spd_cholesky(a).is_ok()
}

/// Squared Mahalanobis distance `(u - v)ᵀ A⁻¹ (u - v)`.
pub fn mahalanobis_sq(u: &Vec3, v: &Vec3, a: &Mat3) -> Result<f64> {
    let chol = spd_cholesky(a)?;
    let d = u - v;
    // ‖L⁻¹d‖² avoids forming A⁻¹.
    let y = chol
        .l_dirty()
        .solve_lower_triangular(&d)
        .ok_or(Error::NotSpd)?;
    Ok(y.norm_squared())
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    (r.transpose() * r - Mat3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
}
