//! Independent oracles shared by the integration tests: numerical quadrature
//! of the ray integral, 1-D searches and random scene generators.

#![allow(dead_code)]

use std::io::Write;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::Rng;

use diffuse_render::geometry::{Mat3, Vec2, Vec3};
use diffuse_render::skeleton::{Pose, RelativePose, SkeletonGraph};

/// Adaptive Simpson quadrature on `[a, b]`, started from `panels` equal
/// pieces, to absolute accuracy `eps`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, eps: f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            simpson(f, lo, hi, flo, fmid, fhi, whole, eps / panels as f64, 40)
        })
        .sum()
}

pub fn composite_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / (2 * panels) as f64;
    let inner: f64 = (1..2 * panels).map(|k| f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (f(a) + inner + f(b))
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Stop at the requested accuracy or once the correction is roundoff.
    let roundoff = delta.abs() <= 1e-14 * (left + right).abs() || delta.abs() < 1e3 * f64::MIN_POSITIVE;
    if depth == 0 || delta.abs() <= 15.0 * eps || roundoff {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// `(u - v)ᵀ A⁻¹ (u - v)` through a general inverse.
pub fn mahalanobis(u: &Vec3, v: &Vec3, a: &Mat3) -> f64 {
    let d = u - v;
    (d.transpose() * a.try_inverse().expect("invertible") * d)[(0, 0)]
}

/// `∫₀^∞ exp(-Δ²(z·r, μ, α·Σ)) dz` by quadrature over the integrand's support.
pub fn ray_integral(r: &Vec3, mu: &Vec3, sigma: &Mat3, alpha: f64) -> f64 {
    let inv = (sigma * alpha).try_inverse().expect("invertible");
    let quad = |z: f64| {
        let d = z * r - mu;
        (d.transpose() * inv * d)[(0, 0)]
    };
    // The integrand is a Gaussian in z with this peak and width.
    let rr = (r.transpose() * inv * r)[(0, 0)];
    let peak = (r.transpose() * inv * mu)[(0, 0)] / rr;
    let width = (1.0 / rr).sqrt();
    // Support where the integrand is within e^-144 of its largest value on
    // z >= 0.
    let start = peak.max(0.0);
    let reach = ((start - peak).powi(2) + 144.0 * width * width).sqrt();
    let lo = (peak - reach).max(0.0);
    let hi = peak + reach;
    // Integrate relative to that largest value so that far tails stay
    // representable.
    let q_min = quad(start);
    let scaled = |z: f64| (q_min - quad(z)).exp();
    let coarse = composite_simpson(&scaled, lo, hi, 256);
    (-q_min).exp() * integrate(&scaled, lo, hi, 64, 1e-10 * coarse)
}

/// Golden-section minimiser of a unimodal `f` on `[a, b]`.
pub fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Depth along `r` of the point closest to `μ` in the metric of `Σ`, by search.
pub fn searched_depth(r: &Vec3, mu: &Vec3, sigma: &Mat3, lo: f64, hi: f64) -> f64 {
    golden_min(&|z| mahalanobis(&(z * r), mu, sigma), lo, hi, 1e-12)
}

/// Uniformly random rotation.
pub fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let q = nalgebra::Quaternion::new(
        normal(rng),
        normal(rng),
        normal(rng),
        normal(rng),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vector3::new(normal(rng), normal(rng), normal(rng));
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

/// SPD matrix with log-uniform eigenvalues in `[lo, hi]` and random axes.
pub fn random_spd(rng: &mut impl Rng, lo: f64, hi: f64) -> Mat3 {
    let q = random_rotation(rng);
    let eig = Vector3::from_fn(|_, _| (rng.random_range(lo.ln()..hi.ln())).exp());
    let s = q * Matrix3::from_diagonal(&eig) * q.transpose();
    (s + s.transpose()) * 0.5
}

/// Unit ray through pixel `(row, col)` of a distortion-free pinhole camera.
pub fn pinhole_ray(f: f64, cx: f64, cy: f64, row: usize, col: usize) -> Vec3 {
    Vec3::new((col as f64 + 0.5 - cx) / f, (row as f64 + 0.5 - cy) / f, 1.0).normalize()
}

/// Random tree skeleton with `n` joints in front of the camera, widths in
/// `[3, 8]` cm and limbs of 15 to 35 cm.
pub fn random_skeleton(rng: &mut impl Rng, n: usize, depth: f64) -> (SkeletonGraph, Pose) {
    let mut joints = vec![Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), depth)];
    let mut edges = Vec::new();
    for j in 1..n {
        let parent = rng.random_range(0..j);
        let dir = random_unit(rng);
        let len = rng.random_range(0.15..0.35);
        joints.push(joints[parent] + dir * len);
        edges.push((parent, j));
    }
    let widths = (0..n - 1).map(|_| rng.random_range(0.03..0.08)).collect();
    (SkeletonGraph::new(n, edges, widths).unwrap(), Pose::new(joints))
}

/// Squared reprojection error of a root at depth `z` under normalised
/// keypoints `p2d` (root first) and offsets `rel`, summed over joints.
pub fn reprojection(z: f64, p2d: &[Vec2], rel: &RelativePose) -> f64 {
    let root = Vec3::new(z * p2d[0].x, z * p2d[0].y, z);
    p2d[1..]
        .iter()
        .zip(&rel.offsets)
        .map(|(p, o)| {
            let q = root + o;
            if q.z <= 0.0 {
                return f64::INFINITY;
            }
            (q.x / q.z - p.x).powi(2) + (q.y / q.z - p.y).powi(2)
        })
        .sum()
}

/// Grid search over `[0.1, 50]` m at 0.1 mm followed by golden-section
/// refinement around the best grid point.
pub fn brute_force_depth(p2d: &[Vec2], rel: &RelativePose) -> f64 {
    let step = 1e-4;
    let n = ((50.0 - 0.1) / step) as usize;
    let (mut best, mut best_z) = (f64::INFINITY, 0.1);
    for k in 0..=n {
        let z = 0.1 + k as f64 * step;
        let e = reprojection(z, p2d, rel);
        if e < best {
            best = e;
            best_z = z;
        }
    }
    golden_min(&|z| reprojection(z, p2d, rel), best_z - step, best_z + step, 1e-12)
}

/// Writes a line to the real standard output so it shows even when the test
/// harness captures `println!`.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

/// Camera-frame scene for the quadrature render oracle.
pub struct OracleScene {
    pub prims: Vec<(Vec3, Mat3)>,
    pub apps: Vec<Vec<f64>>,
    pub background: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub min_depth: f64,
}

impl OracleScene {
    /// Background depth from searched optimal depths over every ray.
    pub fn background_depth(&self, rays: &[Vec3]) -> f64 {
        let furthest = rays
            .iter()
            .flat_map(|r| self.prims.iter().map(move |(mu, s)| searched_depth(r, mu, s, -100.0, 100.0)))
            .fold(f64::NEG_INFINITY, f64::max);
        (self.beta * furthest).max(self.min_depth)
    }

    /// Weights (primitives then background) and composited feature vector of
    /// the pixel with ray `r`.
    pub fn pixel(&self, r: &Vec3, z_bg: f64) -> (Vec<f64>, Vec<f64>) {
        let raster = |z: f64| 1.0 / (1.0 + z.powi(4));
        let mut products: Vec<f64> = self
            .prims
            .iter()
            .map(|(mu, s)| ray_integral(r, mu, s, self.alpha) * raster(searched_depth(r, mu, s, -100.0, 100.0)))
            .collect();
        products.push(ray_integral(r, &(z_bg * r), &Mat3::identity(), self.alpha) * raster(z_bg));
        let total: f64 = products.iter().sum();
        let weights: Vec<f64> = products.iter().map(|p| p / total).collect();
        let feature = (0..self.background.len())
            .map(|c| {
                let limbs: f64 = self.apps.iter().zip(&weights).map(|(a, w)| w * a[c]).sum();
                limbs + weights[self.prims.len()] * self.background[c]
            })
            .collect();
        (weights, feature)
    }
}
