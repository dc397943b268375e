//! Loss gradients with respect to joints, limb widths, appearances and the
//! background appearance, by a hand-written adjoint of the renderer.
//!
//! The adjoint follows the forward pass in reverse: image loss → per-pixel
//! colour → softmax weights → log products `ln(λ·F)` → the three ray forms
//! `rᵀSr, rᵀSμ, μᵀSμ` → each primitive's precision `S` and mean `μ` → joints
//! and widths. For a limb with joint difference `d` (length `L`) and width `w`
//! the precision has the closed form
//!
//! ```text
//! S = I/w + φ·ddᵀ,   φ = 1/L³ - 1/(wL²)
//! ```
//!
//! which does not depend on how the limb rotation is completed around its
//! axis, so the adjoint never differentiates the rotation itself.

use std::fmt;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{make_rays, CameraModel, RayGrid};
use crate::error::{Error, Result};
use crate::geometry::{d_ln_erfc, Mat3, Vec3};
use crate::renderer::{render_rays, FeatureImage, RayForms, RenderConfig, Scene};
use crate::skeleton::{primitives_from_pose, Appearances, Pose, PrimitiveSet, SkeletonGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
    #[default]
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Joints,
    Widths,
    Appearances,
    Background,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Joints, Block::Widths, Block::Appearances, Block::Background];

    pub fn name(&self) -> &'static str {
        match self {
            Block::Joints => "joints",
            Block::Widths => "widths",
            Block::Appearances => "appearances",
            Block::Background => "background",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }
}

/// Which parameter blocks receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveBlocks {
    pub joints: bool,
    pub widths: bool,
    pub appearances: bool,
    pub background: bool,
}

impl Default for ActiveBlocks {
    fn default() -> Self {
        Self {
            joints: true,
            widths: false,
            appearances: true,
            background: false,
        }
    }
}

impl ActiveBlocks {
    pub fn all() -> Self {
        Self {
            joints: true,
            widths: true,
            appearances: true,
            background: true,
        }
    }

    pub fn none() -> Self {
        Self {
            joints: false,
            widths: false,
            appearances: false,
            background: false,
        }
    }

    pub fn only(block: Block) -> Self {
        Self::none().with(block, true)
    }

    pub fn with(mut self, block: Block, on: bool) -> Self {
        match block {
            Block::Joints => self.joints = on,
            Block::Widths => self.widths = on,
            Block::Appearances => self.appearances = on,
            Block::Background => self.background = on,
        }
        self
    }

    pub fn contains(&self, block: Block) -> bool {
        match block {
            Block::Joints => self.joints,
            Block::Widths => self.widths,
            Block::Appearances => self.appearances,
            Block::Background => self.background,
        }
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softplus_inv(w: f64) -> f64 {
    w + (-(-w).exp_m1()).ln()
}

/// The differentiable inputs of a render.
///
/// Optimisers and the gradient checker see a flat coordinate vector in which
/// widths appear as `softplus⁻¹(w)`, so no step can make a width
/// non-positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub joints: Vec<Vec3>,
    pub widths: Vec<f64>,
    pub appearances: Appearances,
    pub background: Vec<f64>,
    pub active: ActiveBlocks,
}

impl ParamVector {
    pub fn new(pose: &Pose, graph: &SkeletonGraph, appearances: Appearances, background: Vec<f64>) -> Self {
        Self {
            joints: pose.joints.clone(),
            widths: graph.widths().to_vec(),
            appearances,
            background,
            active: ActiveBlocks::default(),
        }
    }

    pub fn with_active(mut self, active: ActiveBlocks) -> Self {
        self.active = active;
        self
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.joints.clone())
    }

    pub fn check_shapes(&self, graph: &SkeletonGraph, channels: usize) -> Result<()> {
        let m = graph.n_edges();
        let mut problems = Vec::new();
        if self.joints.len() != graph.n_joints() {
            problems.push(format!("{} joints, skeleton has {}", self.joints.len(), graph.n_joints()));
        }
        if self.widths.len() != m {
            problems.push(format!("{} widths, skeleton has {m} limbs", self.widths.len()));
        }
        if self.appearances.nrows() != m || (m > 0 && self.appearances.ncols() != channels) {
            problems.push(format!(
                "appearances are {}x{}, expected {m}x{channels}",
                self.appearances.nrows(),
                self.appearances.ncols()
            ));
        }
        if self.background.len() != channels {
            problems.push(format!("background has {} channels, expected {channels}", self.background.len()));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(problems.join("; ")))
        }
    }

    pub fn block_len(&self, block: Block) -> usize {
        match block {
            Block::Joints => 3 * self.joints.len(),
            Block::Widths => self.widths.len(),
            Block::Appearances => self.appearances.len(),
            Block::Background => self.background.len(),
        }
    }

    /// Position of each block in the flat coordinate vector.
    pub fn block_range(&self, block: Block) -> Range<usize> {
        let mut start = 0;
        for b in Block::ALL {
            let len = self.block_len(b);
            if b == block {
                return start..start + len;
            }
            start += len;
        }
        unreachable!()
    }

    pub fn n_coords(&self) -> usize {
        Block::ALL.iter().map(|b| self.block_len(*b)).sum()
    }

    pub fn to_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_coords());
        out.extend(self.joints.iter().flat_map(|p| p.iter().copied()));
        out.extend(self.widths.iter().map(|w| softplus_inv(*w)));
        out.extend(row_major(&self.appearances));
        out.extend_from_slice(&self.background);
        out
    }

    pub fn set_coords(&mut self, coords: &[f64]) {
        assert_eq!(coords.len(), self.n_coords());
        let r = self.block_range(Block::Joints);
        for (p, c) in self.joints.iter_mut().zip(coords[r].chunks(3)) {
            *p = Vec3::new(c[0], c[1], c[2]);
        }
        let r = self.block_range(Block::Widths);
        for (w, c) in self.widths.iter_mut().zip(&coords[r]) {
            // Unchanged coordinates keep their width bit-exact.
            if *c != softplus_inv(*w) {
                *w = softplus(*c);
            }
        }
        let r = self.block_range(Block::Appearances);
        let cols = self.appearances.ncols();
        for (idx, c) in coords[r].iter().enumerate() {
            self.appearances[(idx / cols, idx % cols)] = *c;
        }
        let r = self.block_range(Block::Background);
        self.background.copy_from_slice(&coords[r]);
    }
}

fn row_major(m: &Appearances) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

/// Gradient in the flat coordinates of a [`ParamVector`]: widths are
/// differentiated through their softplus parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub joints: Vec<Vec3>,
    pub widths: Vec<f64>,
    pub appearances: Appearances,
    pub background: Vec<f64>,
}

impl GradientVector {
    pub fn zeros_like(p: &ParamVector) -> Self {
        Self {
            joints: vec![Vec3::zeros(); p.joints.len()],
            widths: vec![0.0; p.widths.len()],
            appearances: Appearances::zeros(p.appearances.nrows(), p.appearances.ncols()),
            background: vec![0.0; p.background.len()],
        }
    }

    pub fn block(&self, block: Block) -> Vec<f64> {
        match block {
            Block::Joints => self.joints.iter().flat_map(|p| p.iter().copied()).collect(),
            Block::Widths => self.widths.clone(),
            Block::Appearances => row_major(&self.appearances).collect(),
            Block::Background => self.background.clone(),
        }
    }

    pub fn to_coords(&self) -> Vec<f64> {
        Block::ALL.iter().flat_map(|b| self.block(*b)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.to_coords().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    fn zero_block(&mut self, block: Block) {
        match block {
            Block::Joints => self.joints.fill(Vec3::zeros()),
            Block::Widths => self.widths.fill(0.0),
            Block::Appearances => self.appearances.fill(0.0),
            Block::Background => self.background.fill(0.0),
        }
    }
}

/// An image loss against a fixed target through a fixed camera. Rays are
/// generated once and reused across evaluations.
pub struct Objective<'a> {
    graph: &'a SkeletonGraph,
    cam: &'a CameraModel,
    rays: RayGrid,
    cfg: RenderConfig,
    target: &'a FeatureImage,
    kind: LossKind,
}

impl<'a> Objective<'a> {
    pub fn new(
        graph: &'a SkeletonGraph,
        cam: &'a CameraModel,
        cfg: &RenderConfig,
        target: &'a FeatureImage,
        kind: LossKind,
    ) -> Result<Self> {
        if target.dims() != (cfg.height, cfg.width, cfg.channels()) {
            return Err(Error::ShapeMismatch(format!(
                "target is {:?}, render is {:?}",
                target.dims(),
                (cfg.height, cfg.width, cfg.channels())
            )));
        }
        let rays = make_rays(cam)?;
        Ok(Self {
            graph,
            cam,
            rays,
            cfg: cfg.clone(),
            target,
            kind,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn config(&self) -> &RenderConfig {
        &self.cfg
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.cfg.alpha = alpha;
    }

    fn prepare(&self, params: &ParamVector) -> Result<(PrimitiveSet, RenderConfig)> {
        params.check_shapes(self.graph, self.cfg.channels())?;
        let graph = self.graph.with_widths(params.widths.clone())?;
        let prims = primitives_from_pose(&params.pose(), &graph)?
            .transformed(&self.cam.rotation, &self.cam.translation);
        let cfg = self.cfg.clone().with_background(params.background.clone());
        Ok((prims, cfg))
    }

    pub fn render(&self, params: &ParamVector) -> Result<FeatureImage> {
        let (prims, cfg) = self.prepare(params)?;
        Ok(render_rays(&prims, &params.appearances, &self.rays, &cfg, false)?.0)
    }

    pub fn loss(&self, params: &ParamVector) -> Result<f64> {
        let image = self.render(params)?;
        Ok(image_loss(&image, self.target, self.kind))
    }

    pub fn loss_grad(&self, params: &ParamVector) -> Result<(f64, GradientVector)> {
        let (prims, cfg) = self.prepare(params)?;
        let scene = Scene::prepare(&prims, &self.rays, &cfg)?;
        let adj = adjoint(&scene, &params.appearances, self.target, self.kind);
        let mut grad = GradientVector::zeros_like(params);
        grad.appearances = adj.appearances;
        grad.background = adj.background;

        let rot_t = self.cam.rotation.transpose();
        for (k, &(i, j)) in self.graph.edges().iter().enumerate() {
            let w = params.widths[k];
            let d = self.cam.rotation * (params.joints[j] - params.joints[i]);
            let (g_d, g_w) = precision_adjoint(&adj.precision[k], &d, w);
            let half = adj.mean[k] / 2.0;
            grad.joints[i] += rot_t * (half - g_d);
            grad.joints[j] += rot_t * (half + g_d);
            grad.widths[k] = g_w * -(-w).exp_m1();
        }
        for b in Block::ALL {
            if !params.active.contains(b) {
                grad.zero_block(b);
            } else if !grad.block(b).iter().all(|g| g.is_finite()) {
                return Err(Error::NonFiniteGradient(b.name()));
            }
        }
        Ok((adj.loss, grad))
    }
}

/// Mean over pixels and channels of `|J - T|` or `(J - T)²`.
pub fn image_loss(image: &FeatureImage, target: &FeatureImage, kind: LossKind) -> f64 {
    let total: f64 = image
        .data
        .iter()
        .zip(&target.data)
        .map(|(j, t)| match kind {
            LossKind::L1 => (j - t).abs(),
            LossKind::L2 => (j - t).powi(2),
        })
        .sum();
    total / image.data.len() as f64
}

pub fn render_loss(
    params: &ParamVector,
    graph: &SkeletonGraph,
    cam: &CameraModel,
    cfg: &RenderConfig,
    target: &FeatureImage,
    kind: LossKind,
) -> Result<f64> {
    Objective::new(graph, cam, cfg, target, kind)?.loss(params)
}

pub fn render_loss_grad(
    params: &ParamVector,
    graph: &SkeletonGraph,
    cam: &CameraModel,
    cfg: &RenderConfig,
    target: &FeatureImage,
    kind: LossKind,
) -> Result<(f64, GradientVector)> {
    Objective::new(graph, cam, cfg, target, kind)?.loss_grad(params)
}

/// Loss gradients with respect to each primitive's camera-frame precision and
/// mean, plus the appearance blocks.
struct SceneAdjoint {
    loss: f64,
    precision: Vec<Mat3>,
    mean: Vec<Vec3>,
    appearances: Appearances,
    background: Vec<f64>,
}

/// Per-row accumulators. The precision gradient of primitive `k` is
/// `rr_outer[k] + r_sum[k]·μᵀ + mm_sum[k]·μμᵀ`, since `μ` is fixed per
/// primitive.
struct Partial {
    loss: f64,
    rr_outer: Vec<Mat3>,
    r_sum: Vec<Vec3>,
    mm_sum: Vec<f64>,
    appearances: Appearances,
    background: Vec<f64>,
    background_depth: f64,
}

impl Partial {
    fn zeros(m: usize, channels: usize) -> Self {
        Self {
            loss: 0.0,
            rr_outer: vec![Mat3::zeros(); m],
            r_sum: vec![Vec3::zeros(); m],
            mm_sum: vec![0.0; m],
            appearances: Appearances::zeros(m, channels),
            background: vec![0.0; channels],
            background_depth: 0.0,
        }
    }

    fn merge(&mut self, other: Partial) {
        self.loss += other.loss;
        for k in 0..self.rr_outer.len() {
            self.rr_outer[k] += other.rr_outer[k];
            self.r_sum[k] += other.r_sum[k];
            self.mm_sum[k] += other.mm_sum[k];
        }
        self.appearances += other.appearances;
        for (a, b) in self.background.iter_mut().zip(other.background) {
            *a += b;
        }
        self.background_depth += other.background_depth;
    }

    /// Adds `g·∂/∂(rr, rm, mm)` at ray `r` for primitive `k`.
    fn add_forms(&mut self, k: usize, r: &Vec3, g: [f64; 3]) {
        self.rr_outer[k] += (g[0] * r) * r.transpose();
        self.r_sum[k] += g[1] * r;
        self.mm_sum[k] += g[2];
    }
}

/// `d ln(1/(1+z⁴)) / dz`.
fn d_ln_raster(z: f64) -> f64 {
    if z.abs() <= 1.0 {
        -4.0 * z.powi(3) / (1.0 + z.powi(4))
    } else {
        -4.0 / (z * (1.0 + z.powi(-4)))
    }
}

/// Partials of `ln(λ·F)` with respect to `(rᵀSr, rᵀSμ, μᵀSμ)`.
fn logit_partials(f: &RayForms, alpha: f64) -> [f64; 3] {
    let (rr, rm) = (f.rr, f.rm);
    let sa = alpha.sqrt();
    let sr = rr.sqrt();
    let dt = d_ln_erfc(f.erfc_arg(alpha));
    let dz = d_ln_raster(f.optimal_depth());
    let d_rr = -0.5 / rr + dt * rm / (2.0 * sa * rr * sr) - rm * rm / (rr * rr * alpha) - dz * rm / (rr * rr);
    let d_rm = -dt / (sa * sr) + 2.0 * rm / (rr * alpha) + dz / rr;
    [d_rr, d_rm, -1.0 / alpha]
}

fn adjoint(scene: &Scene, apps: &Appearances, target: &FeatureImage, kind: LossKind) -> SceneAdjoint {
    let cfg = scene.cfg;
    let m = scene.prims.len();
    let channels = cfg.channels();
    let (width, height) = (cfg.width, cfg.height);
    let scale = 1.0 / (width * height * channels) as f64;

    let partials: Vec<Partial> = (0..height)
        .into_par_iter()
        .map(|row| {
            let mut acc = Partial::zeros(m, channels);
            let mut logits = vec![0.0; m + 1];
            let mut weights = vec![0.0; m + 1];
            let mut colour = vec![0.0; channels];
            let mut g = vec![0.0; channels];
            for col in 0..width {
                let pixel = row * width + col;
                let ray = scene.ray(pixel);
                scene.weights(ray, &mut logits, &mut weights);
                for (c, out) in colour.iter_mut().enumerate() {
                    *out = weights[m] * cfg.background[c] + (0..m).map(|k| weights[k] * apps[(k, c)]).sum::<f64>();
                }
                let t = target.pixel(row, col);
                for c in 0..channels {
                    let diff = colour[c] - t[c];
                    let (l, d) = match kind {
                        LossKind::L1 => (diff.abs(), if diff == 0.0 { 0.0 } else { diff.signum() }),
                        LossKind::L2 => (diff * diff, 2.0 * diff),
                    };
                    acc.loss += l;
                    g[c] = d * scale;
                }
                let g_colour: f64 = g.iter().zip(&colour).map(|(a, b)| a * b).sum();
                for k in 0..m {
                    let w = weights[k];
                    if w == 0.0 {
                        continue;
                    }
                    let mut g_app = 0.0;
                    for c in 0..channels {
                        acc.appearances[(k, c)] += w * g[c];
                        g_app += g[c] * apps[(k, c)];
                    }
                    let g_logit = w * (g_app - g_colour);
                    let f = scene.prims[k].forms(ray);
                    let p = logit_partials(&f, cfg.alpha);
                    acc.add_forms(k, ray, p.map(|v| g_logit * v));
                }
                let w_bg = weights[m];
                if w_bg != 0.0 {
                    let g_bg: f64 = g.iter().zip(&cfg.background).map(|(a, b)| a * b).sum();
                    for c in 0..channels {
                        acc.background[c] += w_bg * g[c];
                    }
                    acc.background_depth += w_bg * (g_bg - g_colour);
                }
            }
            acc
        })
        .collect();

    let mut total = Partial::zeros(m, channels);
    for p in partials {
        total.merge(p);
    }

    // The background logit depends on the background depth, which tracks the
    // furthest primitive depth whenever the minimum-depth clamp is inactive.
    if let Some(arg) = scene.depth_argmax {
        let z = scene.background.depth;
        let sa = cfg.alpha.sqrt();
        let d_logit = -d_ln_erfc(-z / sa) / sa + d_ln_raster(z);
        let g_z = total.background_depth * d_logit * cfg.beta;
        let ray = *scene.ray(arg.pixel);
        let f = scene.prims[arg.primitive].forms(&ray);
        total.add_forms(arg.primitive, &ray, [-g_z * f.rm / (f.rr * f.rr), g_z / f.rr, 0.0]);
    }

    let mut precision = Vec::with_capacity(m);
    let mut mean = Vec::with_capacity(m);
    for (k, p) in scene.prims.iter().enumerate() {
        let mu = p.mean;
        let g_s = total.rr_outer[k] + total.r_sum[k] * mu.transpose() + total.mm_sum[k] * mu * mu.transpose();
        precision.push(g_s);
        mean.push(p.precision * total.r_sum[k] + 2.0 * total.mm_sum[k] * p.precision_mean);
    }
    SceneAdjoint {
        loss: total.loss * scale,
        precision,
        mean,
        appearances: total.appearances,
        background: total.background,
    }
}

/// Pulls a precision gradient `G` back to the limb vector `d` and width `w`.
fn precision_adjoint(g: &Mat3, d: &Vec3, w: f64) -> (Vec3, f64) {
    let l2 = d.norm_squared();
    let l = l2.sqrt();
    let phi = 1.0 / (l2 * l) - 1.0 / (w * l2);
    let d_phi_dl = -3.0 / (l2 * l2) + 2.0 / (w * l2 * l);
    let dgd = d.dot(&(g * d));
    let g_d = phi * (g + g.transpose()) * d + (d_phi_dl * dgd / l) * d;
    let g_w = -g.trace() / (w * w) + dgd / (w * w * l2);
    (g_d, g_w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub block: Block,
    pub coords: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tol: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn block(&self, block: Block) -> Option<&BlockCheck> {
        self.blocks.iter().find(|b| b.block == block)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(
                f,
                "{} max_rel_err={:.3e} {}",
                b.block.name(),
                b.max_rel_err,
                if b.passed { "pass" } else { "fail" }
            )?;
        }
        Ok(())
    }
}

/// Per-coordinate error: relative where the gradient is large, absolute
/// (scaled by `tol`) below `floor / tol`.
pub fn coordinate_error(analytic: f64, numeric: f64, tol: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor / tol);
    (analytic - numeric).abs() / scale
}

/// Relative central-difference step. Larger steps straddle the kinks of the
/// L1 loss and the curvature of narrow kernels at small `α`.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Absolute agreement accepted where both gradients are tiny.
pub const GRAD_CHECK_FLOOR: f64 = 1e-7;

/// Compares `analytic` with central differences of the objective, with step
/// `h·max(1, |x|)` per flat coordinate, over the active blocks of `params`.
pub fn check_gradient(
    objective: &Objective,
    params: &ParamVector,
    analytic: &GradientVector,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(tol > 0.0 && tol.is_finite()) || !(h > 0.0 && h.is_finite()) {
        return Err(Error::Validation(vec![format!(
            "gradient check needs a positive tolerance and step, got tol {tol}, step {h}"
        )]));
    }
    let base = params.to_coords();
    let mut blocks = Vec::new();
    for block in Block::ALL {
        if !params.active.contains(block) {
            continue;
        }
        let range = params.block_range(block);
        let ana = analytic.block(block);
        let errors = range
            .clone()
            .map(|i| {
                let step = h * base[i].abs().max(1.0);
                let eval = |delta: f64| {
                    let mut x = base.clone();
                    x[i] += delta;
                    let mut p = params.clone();
                    p.set_coords(&x);
                    objective.loss(&p)
                };
                let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
                Ok(coordinate_error(ana[i - range.start], numeric, tol, GRAD_CHECK_FLOOR))
            })
            .collect::<Result<Vec<f64>>>()?;
        let max_rel_err = errors.iter().copied().fold(0.0, f64::max);
        blocks.push(BlockCheck {
            block,
            coords: range.len(),
            max_rel_err,
            passed: max_rel_err <= tol,
        });
    }
    Ok(GradCheckReport { tol, blocks })
}

#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    params: &ParamVector,
    graph: &SkeletonGraph,
    cam: &CameraModel,
    cfg: &RenderConfig,
    target: &FeatureImage,
    kind: LossKind,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let objective = Objective::new(graph, cam, cfg, target, kind)?;
    let (_, analytic) = objective.loss_grad(params)?;
    check_gradient(&objective, params, &analytic, h, tol)
}
