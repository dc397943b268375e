//! Feature-image rendering of diffuse Gaussian primitives.
//!
//! Every pixel ray `r` collects from each primitive `(μ, Σ)` the line
//! integral of `exp(-Δ²(z·r, μ, α·Σ))` over `z ≥ 0`, which has the closed form
//!
//! ```text
//! F = √(απ) / (2√(rᵀΣ⁻¹r)) · erfc(-rᵀΣ⁻¹μ / (√α·√(rᵀΣ⁻¹r))) · exp(-(μᵀΣ⁻¹μ - (rᵀΣ⁻¹μ)²/rᵀΣ⁻¹r) / α)
//! ```
//!
//! and a depth-ordering coefficient `λ = 1 / (1 + z*⁴)` taken at the depth
//! `z* = rᵀΣ⁻¹μ / rᵀΣ⁻¹r` where the ray passes closest to the primitive. A
//! background pseudo-primitive with unit shape sits on every ray beyond the
//! furthest primitive.
//! Pixels are convex combinations of the appearances with weights
//! `ω ∝ λ·F`.
//!
//! Products `λ·F` are formed in log space and normalised by max-subtraction:
//! at the default `α = 0.025` the exponent routinely exceeds the range of
//! `f64` away from the limbs.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{make_rays, CameraModel, RayGrid};
use crate::error::{Error, Result};
use crate::geometry::{ln_erfc, spd_cholesky, Mat3, Vec3};
use crate::skeleton::{Appearances, PrimitiveSet};

pub const DEFAULT_ALPHA: f64 = 2.5e-2;
pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_RESOLUTION: usize = 256;
pub const DEFAULT_BACKGROUND_MIN_DEPTH: f64 = 1.0;

const UNIT_RAY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Scale applied to every primitive shape.
    pub alpha: f64,
    /// How far beyond the furthest primitive the background sits.
    pub beta: f64,
    /// Background appearance; its length is the channel count.
    pub background: Vec<f64>,
    pub width: usize,
    pub height: usize,
    /// Lower bound on the background depth, in meters.
    pub background_min_depth: f64,
}

impl RenderConfig {
    pub fn new(channels: usize, width: usize, height: usize) -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            background: vec![0.0; channels],
            width,
            height,
            background_min_depth: DEFAULT_BACKGROUND_MIN_DEPTH,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_background(mut self, background: Vec<f64>) -> Self {
        self.background = background;
        self
    }

    pub fn channels(&self) -> usize {
        self.background.len()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            out.push(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            out.push(format!("beta must exceed 1, got {}", self.beta));
        }
        if !(self.background_min_depth > 0.0 && self.background_min_depth.is_finite()) {
            out.push("background_min_depth must be positive".into());
        }
        if self.background.is_empty() {
            out.push("at least one channel is required".into());
        }
        if !self.background.iter().all(|v| v.is_finite()) {
            out.push("background appearance must be finite".into());
        }
        if self.width == 0 || self.height == 0 {
            out.push("render dimensions must be positive".into());
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
}

/// `height × width × channels` grid, row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureImage {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}

/// Per-pixel, per-primitive intermediate values of a render. The last slot of
/// every pixel (index `M`) is the background.
#[derive(Debug, Clone)]
pub struct RenderDiagnostics {
    pub height: usize,
    pub width: usize,
    /// Number of slots per pixel, `M + 1`.
    pub slots: usize,
    pub density: Vec<f64>,
    pub log_density: Vec<f64>,
    pub raster: Vec<f64>,
    pub depth: Vec<f64>,
    pub weight: Vec<f64>,
    pub background_depth: f64,
}

impl RenderDiagnostics {
    fn index(&self, row: usize, col: usize) -> std::ops::Range<usize> {
        let start = (row * self.width + col) * self.slots;
        start..start + self.slots
    }

    pub fn weights(&self, row: usize, col: usize) -> &[f64] {
        &self.weight[self.index(row, col)]
    }

    pub fn densities(&self, row: usize, col: usize) -> &[f64] {
        &self.density[self.index(row, col)]
    }

    pub fn rasters(&self, row: usize, col: usize) -> &[f64] {
        &self.raster[self.index(row, col)]
    }

    pub fn depths(&self, row: usize, col: usize) -> &[f64] {
        &self.depth[self.index(row, col)]
    }
}

/// The three quadratic forms of a ray against a primitive:
/// `rᵀΣ⁻¹r`, `rᵀΣ⁻¹μ` and `μᵀΣ⁻¹μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayForms {
    pub rr: f64,
    pub rm: f64,
    pub mm: f64,
}

impl RayForms {
    pub fn new(ray: &Vec3, mean: &Vec3, precision: &Mat3) -> Self {
        let pr = precision * ray;
        Self {
            rr: ray.dot(&pr),
            rm: pr.dot(mean),
            mm: mean.dot(&(precision * mean)),
        }
    }

    pub fn optimal_depth(&self) -> f64 {
        self.rm / self.rr
    }

    /// Argument of the erfc factor in the density integral.
    pub fn erfc_arg(&self, alpha: f64) -> f64 {
        -self.rm / (alpha.sqrt() * self.rr.sqrt())
    }

    /// Mahalanobis distance from the ray's line to the mean, before `α`.
    pub fn perpendicular(&self) -> f64 {
        self.mm - self.rm * self.rm / self.rr
    }

    pub fn ln_density(&self, alpha: f64) -> f64 {
        ((alpha * PI).sqrt() / 2.0).ln() - 0.5 * self.rr.ln() + ln_erfc(self.erfc_arg(alpha))
            - self.perpendicular() / alpha
    }
}

fn check_unit(r: &Vec3) -> Result<()> {
    let norm = r.norm();
    if (norm - 1.0).abs() > UNIT_RAY_TOL {
        Err(Error::NonUnitRay { norm })
    } else {
        Ok(())
    }
}

fn precision_of(sigma: &Mat3) -> Result<Mat3> {
    let chol = spd_cholesky(sigma)?;
    Ok(chol.inverse())
}

/// Density of `(μ, α·Σ)` integrated along `r` over non-negative depths.
pub fn ray_density(r: &Vec3, mu: &Vec3, sigma: &Mat3, alpha: f64) -> Result<f64> {
    Ok(ln_ray_density(r, mu, sigma, alpha)?.exp())
}

/// Natural log of [`ray_density`], finite where the density underflows.
pub fn ln_ray_density(r: &Vec3, mu: &Vec3, sigma: &Mat3, alpha: f64) -> Result<f64> {
    check_unit(r)?;
    if !(alpha > 0.0) {
        return Err(Error::Validation(vec![format!("alpha must be positive, got {alpha}")]));
    }
    let s = precision_of(sigma)?;
    Ok(RayForms::new(r, mu, &s).ln_density(alpha))
}

/// Depth along `r` of the point closest to `μ` under the metric `Σ⁻¹`.
pub fn optimal_depth(r: &Vec3, mu: &Vec3, sigma: &Mat3) -> Result<f64> {
    check_unit(r)?;
    let s = precision_of(sigma)?;
    Ok(RayForms::new(r, mu, &s).optimal_depth())
}

/// Smooth rasterisation coefficient `1 / (1 + z⁴)`.
pub fn raster_coeff(z_star: f64) -> f64 {
    1.0 / (1.0 + z_star.powi(4))
}

pub fn ln_raster_coeff(z_star: f64) -> f64 {
    -(z_star.powi(4)).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundTerms {
    pub depth: f64,
    pub density: f64,
    pub ln_density: f64,
    pub raster: f64,
}

impl BackgroundTerms {
    /// The background is a unit-shape primitive centred on the ray at
    /// `depth`, so its density is the ray integral with `rᵀΣ⁻¹r = 1` and no
    /// perpendicular offset.
    pub fn at_depth(depth: f64, alpha: f64) -> Self {
        let ln_density = ((alpha * PI).sqrt() / 2.0).ln() + ln_erfc(-depth / alpha.sqrt());
        Self {
            depth,
            density: ln_density.exp(),
            ln_density,
            raster: raster_coeff(depth),
        }
    }

    pub fn ln_weight(&self) -> f64 {
        self.ln_density + ln_raster_coeff(self.depth)
    }
}

/// Background depth `max(β·max z*, min_depth)` and the density and
/// rasterisation coefficient shared by every pixel.
pub fn background_terms(z_stars: impl IntoIterator<Item = f64>, cfg: &RenderConfig) -> BackgroundTerms {
    let furthest = z_stars.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let depth = (cfg.beta * furthest).max(cfg.background_min_depth);
    BackgroundTerms::at_depth(depth, cfg.alpha)
}

/// Normalises `λ_k·F_k` onto the simplex.
pub fn composite_weights(density: &[f64], raster: &[f64]) -> Result<Vec<f64>> {
    if density.len() != raster.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} densities, {} coefficients",
            density.len(),
            raster.len()
        )));
    }
    if density.iter().chain(raster).any(|v| !(*v >= 0.0)) {
        return Err(Error::Validation(vec!["densities and coefficients must be non-negative".into()]));
    }
    let products: Vec<f64> = density.iter().zip(raster).map(|(f, l)| f * l).collect();
    let total: f64 = products.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::AllZeroDensities);
    }
    Ok(products.into_iter().map(|p| p / total).collect())
}

/// Softmax over log products. Returns `None` if every entry is `-inf`.
pub fn log_composite_weights(logits: &[f64], out: &mut [f64]) -> Option<()> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Some(())
}

/// A primitive in the render camera's frame with its precision-derived
/// constants cached.
#[derive(Debug, Clone)]
pub(crate) struct PreparedPrimitive {
    pub mean: Vec3,
    pub precision: Mat3,
    pub mm: f64,
    pub precision_mean: Vec3,
}

impl PreparedPrimitive {
    pub fn forms(&self, ray: &Vec3) -> RayForms {
        let pr = self.precision * ray;
        RayForms {
            rr: ray.dot(&pr),
            rm: ray.dot(&self.precision_mean),
            mm: self.mm,
        }
    }
}

/// Location of the depth that sets the background: pixel and primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DepthArgmax {
    pub pixel: usize,
    pub primitive: usize,
    pub depth: f64,
}

/// Everything a pixel needs, shared by the forward and adjoint passes.
pub(crate) struct Scene<'a> {
    pub prims: Vec<PreparedPrimitive>,
    pub rays: &'a RayGrid,
    pub cfg: &'a RenderConfig,
    pub background: BackgroundTerms,
    /// `None` when the background sits at its minimum depth.
    pub depth_argmax: Option<DepthArgmax>,
}

impl<'a> Scene<'a> {
    /// `prims` must already be in the camera frame.
    pub fn prepare(prims: &PrimitiveSet, rays: &'a RayGrid, cfg: &'a RenderConfig) -> Result<Self> {
        cfg.validate()?;
        if rays.width != cfg.width || rays.height != cfg.height {
            return Err(Error::ShapeMismatch(format!(
                "camera is {}x{}, render config is {}x{}",
                rays.width, rays.height, cfg.width, cfg.height
            )));
        }
        let prepared = prims
            .primitives
            .iter()
            .map(|p| {
                if !p.scales.iter().all(|s| *s > 0.0 && s.is_finite())
                    || !p.mean.iter().all(|v| v.is_finite())
                {
                    return Err(Error::NotSpd);
                }
                let precision = p.precision();
                let precision_mean = precision * p.mean;
                Ok(PreparedPrimitive {
                    mean: p.mean,
                    precision,
                    mm: p.mean.dot(&precision_mean),
                    precision_mean,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        if let Some(idx) = rays.rays().iter().position(|r| r.is_none()) {
            return Err(Error::InvalidRay.at_pixel(idx / rays.width, idx % rays.width));
        }

        let depth_argmax = if prepared.is_empty() {
            None
        } else {
            furthest_depth(&prepared, rays)
        };
        let furthest = depth_argmax.map_or(f64::NEG_INFINITY, |a| a.depth);
        let background = background_terms(std::iter::once(furthest), cfg);
        let depth_argmax = depth_argmax.filter(|a| cfg.beta * a.depth > cfg.background_min_depth);
        Ok(Self {
            prims: prepared,
            rays,
            cfg,
            background,
            depth_argmax,
        })
    }

    pub fn ray(&self, pixel: usize) -> &Vec3 {
        self.rays.rays()[pixel].as_ref().expect("rays validated in prepare")
    }

    /// Log products `ln(λ·F)` for every primitive followed by the background.
    pub fn logits(&self, ray: &Vec3, out: &mut [f64]) {
        let alpha = self.cfg.alpha;
        for (o, p) in out.iter_mut().zip(&self.prims) {
            let f = p.forms(ray);
            *o = f.ln_density(alpha) + ln_raster_coeff(f.optimal_depth());
        }
        out[self.prims.len()] = self.background.ln_weight();
    }

    /// Fills `weights` for one pixel. Pixels whose every product vanishes
    /// show pure background.
    pub fn weights(&self, ray: &Vec3, logits: &mut [f64], weights: &mut [f64]) {
        self.logits(ray, logits);
        if log_composite_weights(logits, weights).is_none() {
            weights.fill(0.0);
            weights[self.prims.len()] = 1.0;
        }
    }
}

/// Largest `z*` over every pixel and primitive; ties go to the first in
/// row-major pixel order, then primitive order.
fn furthest_depth(prims: &[PreparedPrimitive], rays: &RayGrid) -> Option<DepthArgmax> {
    let row_best: Vec<Option<DepthArgmax>> = (0..rays.height)
        .into_par_iter()
        .map(|row| {
            let mut best: Option<DepthArgmax> = None;
            for col in 0..rays.width {
                let pixel = row * rays.width + col;
                let Some(ray) = rays.rays()[pixel].as_ref() else { continue };
                for (k, p) in prims.iter().enumerate() {
                    let depth = p.forms(ray).optimal_depth();
                    if best.is_none_or(|b| depth > b.depth) {
                        best = Some(DepthArgmax {
                            pixel,
                            primitive: k,
                            depth,
                        });
                    }
                }
            }
            best
        })
        .collect();
    row_best
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<DepthArgmax>, b| match acc {
            Some(a) if a.depth >= b.depth => Some(a),
            _ => Some(b),
        })
}

fn check_appearances(prims: &PrimitiveSet, apps: &Appearances, cfg: &RenderConfig) -> Result<()> {
    if apps.nrows() != prims.len() || (apps.nrows() > 0 && apps.ncols() != cfg.channels()) {
        return Err(Error::ShapeMismatch(format!(
            "appearances are {}x{}, expected {}x{}",
            apps.nrows(),
            apps.ncols(),
            prims.len(),
            cfg.channels()
        )));
    }
    Ok(())
}

/// Renders primitives given in the source frame through `cam`.
pub fn render(
    prims: &PrimitiveSet,
    apps: &Appearances,
    cam: &CameraModel,
    cfg: &RenderConfig,
) -> Result<FeatureImage> {
    let rays = make_rays(cam)?;
    let local = prims.transformed(&cam.rotation, &cam.translation);
    Ok(render_rays(&local, apps, &rays, cfg, false)?.0)
}

pub fn render_with_diagnostics(
    prims: &PrimitiveSet,
    apps: &Appearances,
    cam: &CameraModel,
    cfg: &RenderConfig,
) -> Result<(FeatureImage, RenderDiagnostics)> {
    let rays = make_rays(cam)?;
    let local = prims.transformed(&cam.rotation, &cam.translation);
    let (img, diag) = render_rays(&local, apps, &rays, cfg, true)?;
    Ok((img, diag.expect("diagnostics requested")))
}

struct RowOut {
    pixels: Vec<f64>,
    diag: Option<[Vec<f64>; 5]>,
}

/// Renders camera-frame primitives against precomputed rays.
pub fn render_rays(
    prims: &PrimitiveSet,
    apps: &Appearances,
    rays: &RayGrid,
    cfg: &RenderConfig,
    diagnostics: bool,
) -> Result<(FeatureImage, Option<RenderDiagnostics>)> {
    check_appearances(prims, apps, cfg)?;
    let scene = Scene::prepare(prims, rays, cfg)?;
    let m = prims.len();
    let slots = m + 1;
    let channels = cfg.channels();
    let width = cfg.width;

    let rows: Vec<RowOut> = (0..cfg.height)
        .into_par_iter()
        .map(|row| {
            let mut pixels = vec![0.0; width * channels];
            let mut diag = diagnostics.then(|| std::array::from_fn(|_| Vec::with_capacity(width * slots)));
            let mut logits = vec![0.0; slots];
            let mut weights = vec![0.0; slots];
            for col in 0..width {
                let ray = scene.ray(row * width + col);
                scene.weights(ray, &mut logits, &mut weights);
                let out = &mut pixels[col * channels..(col + 1) * channels];
                for (k, w) in weights[..m].iter().enumerate() {
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += w * apps[(k, c)];
                    }
                }
                for (o, b) in out.iter_mut().zip(&cfg.background) {
                    *o += weights[m] * b;
                }
                if let Some([density, log_density, raster, depth, weight]) = diag.as_mut() {
                    for p in &scene.prims {
                        let f = p.forms(ray);
                        let ln_f = f.ln_density(cfg.alpha);
                        density.push(ln_f.exp());
                        log_density.push(ln_f);
                        raster.push(raster_coeff(f.optimal_depth()));
                        depth.push(f.optimal_depth());
                    }
                    density.push(scene.background.density);
                    log_density.push(scene.background.ln_density);
                    raster.push(scene.background.raster);
                    depth.push(scene.background.depth);
                    weight.extend_from_slice(&weights);
                }
            }
            RowOut { pixels, diag }
        })
        .collect();

    let mut data = Vec::with_capacity(cfg.height * width * channels);
    let mut diag_bufs: Option<[Vec<f64>; 5]> =
        diagnostics.then(|| std::array::from_fn(|_| Vec::with_capacity(cfg.height * width * slots)));
    for r in rows {
        data.extend_from_slice(&r.pixels);
        if let (Some(acc), Some(d)) = (diag_bufs.as_mut(), r.diag) {
            for (a, b) in acc.iter_mut().zip(d) {
                a.extend(b);
            }
        }
    }
    let image = FeatureImage {
        height: cfg.height,
        width,
        channels,
        data,
    };
    let diag = diag_bufs.map(|[density, log_density, raster, depth, weight]| RenderDiagnostics {
        height: cfg.height,
        width,
        slots,
        density,
        log_density,
        raster,
        depth,
        weight,
        background_depth: scene.background.depth,
    });
    Ok((image, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraModel;
    use crate::skeleton::Primitive;
    use approx::assert_abs_diff_eq;

    fn iso(mean: Vec3, s: f64) -> Primitive {
        Primitive {
            mean,
            rotation: Mat3::identity(),
            scales: Vec3::repeat(s),
        }
    }

    #[test]
    fn raster_examples() {
        assert_eq!(raster_coeff(0.0), 1.0);
        assert_eq!(raster_coeff(1.0), 0.5);
        assert_eq!(raster_coeff(2.0), 1.0 / 17.0);
        assert_abs_diff_eq!(ln_raster_coeff(2.0).exp(), 1.0 / 17.0, epsilon = 1e-16);
    }

    #[test]
    fn optimal_depth_examples() {
        let r = Vec3::new(0.0, 0.6, 0.8);
        let z = optimal_depth(&r, &(3.0 * r), &Mat3::identity()).unwrap();
        assert_abs_diff_eq!(z, 3.0, epsilon = 1e-14);
        let z = optimal_depth(&r, &Vec3::new(5.0, 0.0, 0.0), &Mat3::identity()).unwrap();
        assert_abs_diff_eq!(z, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn input_checks() {
        let sigma = Mat3::identity();
        assert!(matches!(
            ray_density(&Vec3::new(0.0, 0.0, 2.0), &Vec3::zeros(), &sigma, 1.0),
            Err(Error::NonUnitRay { .. })
        ));
        let bad = Mat3::from_diagonal(&Vec3::new(1.0, 0.0, 1.0));
        assert!(matches!(ray_density(&Vec3::z(), &Vec3::zeros(), &bad, 1.0), Err(Error::NotSpd)));
        assert!(matches!(optimal_depth(&Vec3::z(), &Vec3::zeros(), &bad), Err(Error::NotSpd)));
    }

    #[test]
    fn background_examples() {
        let cfg = RenderConfig::new(1, 4, 4).with_alpha(1.0);
        let bg = background_terms([1.0, 5.0, -2.0], &cfg);
        assert_eq!(bg.depth, 10.0);
        assert_eq!(bg.raster, 1.0 / 10001.0);

        let bg = background_terms([-3.0, -0.5], &cfg);
        assert_eq!(bg.depth, DEFAULT_BACKGROUND_MIN_DEPTH);

        // At the default α the on-ray background keeps its full line mass.
        let cfg = RenderConfig::new(1, 4, 4);
        let bg = background_terms([5.0], &cfg);
        assert_abs_diff_eq!(bg.density, (cfg.alpha * PI).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn background_is_an_on_ray_primitive() {
        let r = Vec3::new(0.48, -0.6, 0.64);
        for (depth, alpha) in [(1.0, 1.0), (10.0, 0.025), (0.2, 4.0), (3.0, 0.1)] {
            let bg = BackgroundTerms::at_depth(depth, alpha);
            let f = ray_density(&r, &(depth * r), &Mat3::identity(), alpha).unwrap();
            assert_abs_diff_eq!(bg.density, f, epsilon = 1e-15);
            assert_abs_diff_eq!(bg.depth, optimal_depth(&r, &(depth * r), &Mat3::identity()).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn composite_examples() {
        let w = composite_weights(&[2.0, 1.0], &[0.25, 0.5]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert!(matches!(composite_weights(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::AllZeroDensities)));
        assert!(composite_weights(&[-1.0, 1.0], &[1.0, 1.0]).is_err());
        let f = [0.3, 1e-3, 4.0, 0.7];
        let l = [0.2, 0.9, 0.01, 0.5];
        let w = composite_weights(&f, &l).unwrap();
        let total: f64 = (0..4).map(|k| f[k] * l[k]).sum();
        for k in 0..4 {
            assert!((w[k] - f[k] * l[k] / total).abs() <= 1e-14);
        }
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_weights_match_linear_weights() {
        let f = [0.3, 1e-3, 4.0];
        let l = [0.2, 0.9, 0.01];
        let linear = composite_weights(&f, &l).unwrap();
        let logits: Vec<f64> = (0..3).map(|k| f[k].ln() + l[k].ln()).collect();
        let mut w = [0.0; 3];
        log_composite_weights(&logits, &mut w).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(w[k], linear[k], epsilon = 1e-15);
        }
        assert!(log_composite_weights(&[f64::NEG_INFINITY; 2], &mut w[..2]).is_none());
    }

    #[test]
    fn empty_scene_is_background() {
        let cam = CameraModel::centered(16.0, 8, 6);
        let cfg = RenderConfig::new(3, 8, 6).with_background(vec![0.2, -0.4, 0.9]);
        let img = render(&PrimitiveSet::default(), &Appearances::zeros(0, 3), &cam, &cfg).unwrap();
        for px in img.data.chunks(3) {
            assert_eq!(px, &[0.2, -0.4, 0.9]);
        }
    }

    #[test]
    fn nearer_primitive_dominates_shared_ray() {
        let cam = CameraModel::centered(16.0, 9, 9);
        let cfg = RenderConfig::new(2, 9, 9);
        let rays = make_rays(&cam).unwrap();
        let r = *rays.get(2, 6).unwrap();
        let prims = PrimitiveSet {
            primitives: vec![iso(2.0 * r, 0.2), iso(4.0 * r, 0.2)],
        };
        let apps = Appearances::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let (_, diag) = render_with_diagnostics(&prims, &apps, &cam, &cfg).unwrap();
        let w = diag.weights(2, 6);
        assert!(w[0] > w[1]);
        assert_abs_diff_eq!(diag.rasters(2, 6)[0] / diag.rasters(2, 6)[1], 257.0 / 17.0, epsilon = 1e-9);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let cam = CameraModel::centered(16.0, 8, 8);
        let cfg = RenderConfig::new(2, 8, 8);
        let prims = PrimitiveSet {
            primitives: vec![iso(Vec3::new(0.0, 0.0, 3.0), 0.1)],
        };
        assert!(render(&prims, &Appearances::zeros(2, 2), &cam, &cfg).is_err());
        assert!(render(&prims, &Appearances::zeros(1, 3), &cam, &cfg).is_err());
        let small = RenderConfig::new(2, 4, 4);
        assert!(render(&prims, &Appearances::zeros(1, 2), &cam, &small).is_err());
    }
}
