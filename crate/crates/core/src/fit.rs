//! Recovering pose, widths and appearances from a target feature image by
//! first-order descent through the renderer.

use std::fmt::Write as _;

use crate::autodiff::{ActiveBlocks, Block, GradientVector, LossKind, Objective, ParamVector};
use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::renderer::{FeatureImage, RenderConfig};
use crate::skeleton::{pose_loss, Appearances, RelativePose, SkeletonGraph};

pub const DEFAULT_ITERATIONS: usize = 500;
pub const DEFAULT_STEP_SIZE: f64 = 1e-2;
pub const DEFAULT_IMAGE_WEIGHT: f64 = 10.0;
pub const DEFAULT_APPEARANCE_WEIGHT: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-12;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Squared Frobenius norm of the appearance matrix.
pub fn appearance_reg(a: &Appearances) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Root-relative pose supervision: predicted offsets are pulled towards
/// `truth` with per-offset weights `confidence`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSupervision {
    pub truth: RelativePose,
    pub confidence: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub step_size: f64,
    /// Adam when set, plain gradient descent otherwise.
    pub adaptive: bool,
    pub loss_kind: LossKind,
    pub image_weight: f64,
    pub appearance_weight: f64,
    pub active: ActiveBlocks,
    /// A stage ends once the loss changes by less than this between
    /// consecutive iterations.
    pub tol: f64,
    /// `α` per stage, each stage taking an equal share of the iterations.
    /// Empty keeps the render config's `α` throughout. The adaptive
    /// optimiser restarts at every stage.
    pub alpha_schedule: Vec<f64>,
    pub pose: Option<PoseSupervision>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            step_size: DEFAULT_STEP_SIZE,
            adaptive: true,
            loss_kind: LossKind::L2,
            image_weight: DEFAULT_IMAGE_WEIGHT,
            appearance_weight: DEFAULT_APPEARANCE_WEIGHT,
            active: ActiveBlocks::default(),
            tol: DEFAULT_TOL,
            alpha_schedule: Vec::new(),
            pose: None,
        }
    }
}

impl FitConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.iterations == 0 {
            out.push("iterations must be at least 1".into());
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            out.push(format!("step size must be positive, got {}", self.step_size));
        }
        if !(self.image_weight >= 0.0) || !(self.appearance_weight >= 0.0) || !(self.tol >= 0.0) {
            out.push("loss weights and tolerance must be non-negative".into());
        }
        if self.alpha_schedule.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            out.push("every scheduled alpha must be positive".into());
        }
        if self.alpha_schedule.len() > self.iterations {
            out.push("more alpha stages than iterations".into());
        }
        if let Some(p) = &self.pose {
            if p.truth.offsets.len() != p.confidence.len() {
                out.push("pose supervision needs one confidence per offset".into());
            }
            if !(p.weight >= 0.0) {
                out.push("pose weight must be non-negative".into());
            }
        }
        out
    }

    /// `(alpha, iterations)` per stage.
    pub fn stages(&self, default_alpha: f64) -> Vec<(f64, usize)> {
        if self.alpha_schedule.is_empty() {
            return vec![(default_alpha, self.iterations)];
        }
        let n = self.alpha_schedule.len();
        let base = self.iterations / n;
        self.alpha_schedule
            .iter()
            .enumerate()
            .map(|(i, a)| (*a, if i + 1 == n { self.iterations - base * (n - 1) } else { base }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Objective before each step.
    pub losses: Vec<f64>,
    /// Largest absolute gradient component before each step.
    pub grad_norms: Vec<f64>,
    /// `α` in force at each step.
    pub alphas: Vec<f64>,
    /// Objective at the returned parameters, under the last stage's `α`.
    pub final_loss: f64,
    pub params: ParamVector,
}

impl FitTrace {
    /// Tab-separated `iteration  alpha  loss  grad_norm` lines with a header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("iteration\talpha\tloss\tgrad_norm\n");
        for (i, ((l, g), a)) in self.losses.iter().zip(&self.grad_norms).zip(&self.alphas).enumerate() {
            let _ = writeln!(out, "{i}\t{a:e}\t{l:e}\t{g:e}");
        }
        let _ = writeln!(out, "final\t{:e}\t{:e}\t", self.alphas.last().copied().unwrap_or(f64::NAN), self.final_loss);
        out
    }
}

/// Weighted objective and its gradient in flat coordinates.
fn objective_grad(objective: &Objective, params: &ParamVector, fcfg: &FitConfig) -> Result<(f64, Vec<f64>)> {
    let (image, mut grad) = objective.loss_grad(params)?;
    scale_gradient(&mut grad, fcfg.image_weight);
    let mut loss = fcfg.image_weight * image;

    if fcfg.appearance_weight > 0.0 {
        loss += fcfg.appearance_weight * appearance_reg(&params.appearances);
        if params.active.appearances {
            grad.appearances += 2.0 * fcfg.appearance_weight * &params.appearances;
        }
    }
    if let Some(sup) = &fcfg.pose {
        let rel = params.pose().relative();
        loss += sup.weight * pose_loss(&rel, &sup.truth, &sup.confidence)?;
        if params.active.joints && !rel.offsets.is_empty() {
            let n = rel.offsets.len() as f64;
            for (j, ((o, t), c)) in rel.offsets.iter().zip(&sup.truth.offsets).zip(&sup.confidence).enumerate() {
                let g = (-2.0 * sup.weight * c / n) * (t - o);
                grad.joints[j + 1] += g;
                grad.joints[0] -= g;
            }
        }
    }
    Ok((loss, grad.to_coords()))
}

fn scale_gradient(g: &mut GradientVector, s: f64) {
    g.joints.iter_mut().for_each(|v| *v *= s);
    g.widths.iter_mut().for_each(|v| *v *= s);
    g.appearances *= s;
    g.background.iter_mut().for_each(|v| *v *= s);
}

/// Weighted objective `λ_I·image + λ_a·‖a‖² (+ λ_P·pose)` at `params`.
pub fn fit_objective(objective: &Objective, params: &ParamVector, fcfg: &FitConfig) -> Result<f64> {
    let mut loss = fcfg.image_weight * objective.loss(params)?;
    loss += fcfg.appearance_weight * appearance_reg(&params.appearances);
    if let Some(sup) = &fcfg.pose {
        loss += sup.weight * pose_loss(&params.pose().relative(), &sup.truth, &sup.confidence)?;
    }
    Ok(loss)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Fits `init` to `target`, annealing `α` through `fcfg.alpha_schedule`
/// against the same target throughout.
pub fn fit(
    init: &ParamVector,
    graph: &SkeletonGraph,
    cam: &CameraModel,
    cfg: &RenderConfig,
    target: &FeatureImage,
    fcfg: &FitConfig,
) -> Result<FitTrace> {
    let stages = fcfg
        .stages(cfg.alpha)
        .into_iter()
        .map(|(alpha, budget)| (alpha, budget, target))
        .collect();
    run(init, graph, cam, cfg, stages, fcfg)
}

/// Coarse-to-fine fit with one target per `α` stage, each rendered at that
/// stage's `α`.
pub fn fit_staged(
    init: &ParamVector,
    graph: &SkeletonGraph,
    cam: &CameraModel,
    cfg: &RenderConfig,
    targets: &[FeatureImage],
    fcfg: &FitConfig,
) -> Result<FitTrace> {
    if targets.len() != fcfg.alpha_schedule.len() || targets.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} stage targets for {} scheduled alphas",
            targets.len(),
            fcfg.alpha_schedule.len()
        )));
    }
    let stages = fcfg
        .stages(cfg.alpha)
        .into_iter()
        .zip(targets)
        .map(|((alpha, budget), t)| (alpha, budget, t))
        .collect();
    run(init, graph, cam, cfg, stages, fcfg)
}

fn run(
    init: &ParamVector,
    graph: &SkeletonGraph,
    cam: &CameraModel,
    cfg: &RenderConfig,
    stages: Vec<(f64, usize, &FeatureImage)>,
    fcfg: &FitConfig,
) -> Result<FitTrace> {
    let problems = fcfg.violations();
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    if stages.iter().any(|(_, _, t)| !t.data.iter().all(|v| v.is_finite())) {
        return Err(Error::Validation(vec!["target image is not finite".into()]));
    }
    let mut params = init.clone().with_active(fcfg.active);
    params.check_shapes(graph, cfg.channels())?;
    if let Some(sup) = &fcfg.pose {
        if sup.truth.offsets.len() + 1 != params.joints.len() {
            return Err(Error::ShapeMismatch("pose supervision does not match the skeleton".into()));
        }
    }

    let mut x = params.to_coords();
    let mut trace = FitTrace {
        losses: Vec::with_capacity(fcfg.iterations),
        grad_norms: Vec::with_capacity(fcfg.iterations),
        alphas: Vec::with_capacity(fcfg.iterations),
        final_loss: f64::NAN,
        params: params.clone(),
    };

    let mut iteration = 0;
    let mut objective = None;
    for (alpha, budget, target) in stages {
        let stage = objective.insert(Objective::new(graph, cam, &cfg.clone().with_alpha(alpha), target, fcfg.loss_kind)?);
        let mut adam = Adam::new(x.len());
        let mut prev = f64::NAN;
        for _ in 0..budget {
            params.set_coords(&x);
            let (loss, g) = match objective_grad(stage, &params, fcfg) {
                Ok(v) => v,
                Err(e) if e.is_numerical() => return Err(Error::DivergenceDetected { iteration }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected { iteration });
            }
            trace.losses.push(loss);
            trace.grad_norms.push(g.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
            trace.alphas.push(alpha);
            iteration += 1;
            if (loss - prev).abs() < fcfg.tol {
                break;
            }
            prev = loss;
            if fcfg.adaptive {
                adam.step(&mut x, &g, fcfg.step_size);
            } else {
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi -= fcfg.step_size * gi;
                }
            }
        }
    }
    params.set_coords(&x);
    let last = objective.expect("at least one stage");
    let final_loss = fit_objective(&last, &params, fcfg)?;
    if !final_loss.is_finite() {
        return Err(Error::DivergenceDetected { iteration });
    }
    trace.final_loss = final_loss;
    trace.params = params;
    Ok(trace)
}

/// The blocks enabled in `active`, in coordinate order.
pub fn active_block_names(active: &ActiveBlocks) -> Vec<&'static str> {
    Block::ALL.iter().filter(|b| active.contains(**b)).map(|b| b.name()).collect()
}
