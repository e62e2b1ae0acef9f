//! Camera-pose recovery by Adam descent on the photometric loss, with an
//! exponentially decaying learning rate, an optional coarse-to-fine blur
//! schedule, and the two-step standard/coarse-to-fine restart strategy.

mod adam;
mod quat;

pub use adam::Adam;
pub use quat::{chain_tangent_to_params, params_from_pose, pose_from_params, QuatTransParams};

use crate::lie::{exp_se3, RigidTransform, TangentVector};
use crate::render::{
    render_with_pose_grad, BlurSpec, Camera, ImageBuffer, RenderError, RenderOpts,
};
use crate::scene::GaussianScene;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// PSNR value reported for identical buffers (the +inf sentinel).
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseParam {
    Manifold,
    QuatTrans,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: u32,
    pub lr_start: f64,
    pub lr_end: f64,
    pub convergence_eps: f64,
    pub convergence_window: u32,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub pose_param: PoseParam,
    /// PSNR at or above which a finished run is labeled converged rather
    /// than failed. The optimizer never sees ground-truth poses.
    pub psnr_success: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 2000,
            lr_start: 1e-2,
            lr_end: 1e-5,
            convergence_eps: 1e-5,
            convergence_window: 3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            pose_param: PoseParam::Manifold,
            psnr_success: 25.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.lr_start > self.lr_end && self.lr_end > 0.0) {
            return Err(RenderError::InvalidCamera("need lr_start > lr_end > 0"));
        }
        if self.max_iters == 0 {
            return Err(RenderError::InvalidCamera("need max_iters >= 1"));
        }
        Ok(())
    }

    /// `lr_k = lr_start * (lr_end / lr_start)^(k / max_iters)`.
    pub fn lr_at(&self, k: u32) -> f64 {
        self.lr_start * (self.lr_end / self.lr_start).powf(k as f64 / self.max_iters as f64)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct BlurSchedule {
    /// Blur is applied for the first `active_iters` iterations.
    pub active_iters: u32,
    pub delta_start: f64,
    pub delta_end: f64,
    /// Kernel size in pixels at the current render resolution; callers
    /// scale it with the image downscale factor.
    pub kernel_size: u32,
}

impl Default for BlurSchedule {
    fn default() -> Self {
        BlurSchedule {
            active_iters: 1000,
            delta_start: 1e-1,
            delta_end: 1e-4,
            kernel_size: 200,
        }
    }
}

impl BlurSchedule {
    /// Linear decay from `delta_start` at k = 0 to `delta_end` at
    /// k = active_iters.
    pub fn delta_at(&self, k: u32) -> f64 {
        let f = (k as f64 / self.active_iters.max(1) as f64).min(1.0);
        self.delta_start + (self.delta_end - self.delta_start) * f
    }

    /// Blur spec for iteration k; `None` once the schedule has faded.
    pub fn spec_at(&self, k: u32) -> Option<BlurSpec> {
        (k < self.active_iters).then(|| BlurSpec {
            delta: self.delta_at(k),
            kernel_size: self.kernel_size,
        })
    }

    /// Kernel size rescaled for a downscaled render, kept odd and >= 3.
    pub fn scaled_kernel(base: u32, downscale: u32) -> u32 {
        let k = (base / downscale.max(1)).max(3);
        if k % 2 == 0 {
            k + 1
        } else {
            k
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    MaxIters,
    RestartedThenConverged,
    Failed,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: u32,
    pub loss: f64,
    pub lr: f64,
    /// Blur kernel covariance at this iteration; 0 when blur is off.
    pub delta: f64,
    /// PSNR of the unblurred render against the query.
    pub psnr: f64,
}

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub pose: RigidTransform,
    pub trace: Vec<TraceRow>,
    pub iterations_used: u32,
    pub verdict: Verdict,
    pub final_psnr: f64,
}

impl LocalizationResult {
    /// Trace export as CSV: iteration, loss, lr, delta, psnr.
    pub fn write_trace_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), RenderError> {
        use std::io::Write;
        let f = std::fs::File::create(path.as_ref())
            .map_err(|e| RenderError::Io(e.to_string()))?;
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "iteration,loss,lr,delta,psnr").map_err(|e| RenderError::Io(e.to_string()))?;
        for r in &self.trace {
            writeln!(w, "{},{},{},{},{}", r.iter, r.loss, r.lr, r.delta, r.psnr)
                .map_err(|e| RenderError::Io(e.to_string()))?;
        }
        Ok(())
    }
}

/// Peak signal-to-noise ratio in dB with peak 1.0, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, RenderError> {
    let mse = a.mse(b)?;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Adam step on the SE(3) tangent; the increment is applied by the caller
/// as `T <- exp(-increment) * T`.
pub fn adam_step(state: &mut Adam<6>, grad: &TangentVector, lr: f64) -> TangentVector {
    TangentVector(state.step(&grad.0, lr))
}

/// Iterates `render_with_pose_grad` + Adam from `cam0`, recording a full
/// per-iteration trace. Stops when the loss change stays below
/// `convergence_eps` for `convergence_window` consecutive iterations (the
/// window resets when the blur schedule switches off) or at `max_iters`.
pub fn localize(
    scene: &GaussianScene,
    query: &ImageBuffer,
    cam0: &Camera,
    cfg: &OptimizerConfig,
    blur: Option<&BlurSchedule>,
    opts: &RenderOpts,
) -> Result<LocalizationResult, RenderError> {
    cfg.validate()?;
    match cfg.pose_param {
        PoseParam::Manifold => localize_manifold(scene, query, cam0, cfg, blur, opts),
        PoseParam::QuatTrans => localize_quat_trans(scene, query, cam0, cfg, blur, opts),
    }
}

fn localize_manifold(
    scene: &GaussianScene,
    query: &ImageBuffer,
    cam0: &Camera,
    cfg: &OptimizerConfig,
    blur: Option<&BlurSchedule>,
    opts: &RenderOpts,
) -> Result<LocalizationResult, RenderError> {
    let mut pose = cam0.pose;
    let mut adam = Adam::<6>::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut driver = ConvergenceDriver::new(cfg, blur);

    loop {
        let spec = blur.and_then(|b| b.spec_at(driver.k));
        let out = render_with_pose_grad(scene, &cam0.with_pose(pose), query, spec.as_ref(), opts)?;
        let cur_psnr = psnr(&out.image, query)?;
        if driver.observe(out.loss, spec, cur_psnr) {
            break;
        }
        let inc = adam.step(&out.grad.0, cfg.lr_at(driver.k));
        pose = exp_se3(&TangentVector(-inc)).compose(&pose);
        driver.k += 1;
    }
    Ok(driver.finish(pose))
}

fn localize_quat_trans(
    scene: &GaussianScene,
    query: &ImageBuffer,
    cam0: &Camera,
    cfg: &OptimizerConfig,
    blur: Option<&BlurSchedule>,
    opts: &RenderOpts,
) -> Result<LocalizationResult, RenderError> {
    let mut params = params_from_pose(&cam0.pose);
    let mut adam = Adam::<7>::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut driver = ConvergenceDriver::new(cfg, blur);

    loop {
        let pose = pose_from_params(&params);
        let spec = blur.and_then(|b| b.spec_at(driver.k));
        let out = render_with_pose_grad(scene, &cam0.with_pose(pose), query, spec.as_ref(), opts)?;
        let cur_psnr = psnr(&out.image, query)?;
        if driver.observe(out.loss, spec, cur_psnr) {
            break;
        }
        let g = chain_tangent_to_params(&out.grad, &params, &pose);
        let inc = adam.step(&g, cfg.lr_at(driver.k));
        params -= inc;
        quat::renormalize(&mut params);
        driver.k += 1;
    }
    Ok(driver.finish(pose_from_params(&params)))
}

/// Shared iteration bookkeeping: trace, convergence window, verdict.
struct ConvergenceDriver<'a> {
    cfg: &'a OptimizerConfig,
    blur_boundary: Option<u32>,
    k: u32,
    prev_loss: Option<f64>,
    window: u32,
    trace: Vec<TraceRow>,
    hit_window: bool,
}

impl<'a> ConvergenceDriver<'a> {
    fn new(cfg: &'a OptimizerConfig, blur: Option<&BlurSchedule>) -> Self {
        ConvergenceDriver {
            cfg,
            blur_boundary: blur.map(|b| b.active_iters),
            k: 0,
            prev_loss: None,
            window: 0,
            trace: Vec::new(),
            hit_window: false,
        }
    }

    /// Records the iteration; returns true when the loop should stop
    /// (convergence window hit, or budget exhausted).
    fn observe(&mut self, loss: f64, spec: Option<BlurSpec>, cur_psnr: f64) -> bool {
        self.trace.push(TraceRow {
            iter: self.k,
            loss,
            lr: self.cfg.lr_at(self.k),
            delta: spec.map_or(0.0, |s| s.delta),
            psnr: cur_psnr,
        });
        // The convergence test compares blurred losses while the schedule
        // is active and unblurred ones after; across the switch the values
        // are incomparable, so the window restarts.
        if self.blur_boundary == Some(self.k) {
            self.prev_loss = None;
            self.window = 0;
        }
        if let Some(p) = self.prev_loss {
            if (loss - p).abs() < self.cfg.convergence_eps {
                self.window += 1;
            } else {
                self.window = 0;
            }
        }
        self.prev_loss = Some(loss);
        if self.window >= self.cfg.convergence_window {
            self.hit_window = true;
            return true;
        }
        if self.k + 1 >= self.cfg.max_iters {
            self.k += 1;
            return true;
        }
        false
    }

    fn finish(self, pose: RigidTransform) -> LocalizationResult {
        let final_psnr = self.trace.last().map_or(0.0, |r| r.psnr);
        let verdict = if self.hit_window {
            if final_psnr >= self.cfg.psnr_success {
                Verdict::Converged
            } else {
                Verdict::Failed
            }
        } else {
            Verdict::MaxIters
        };
        LocalizationResult {
            pose,
            iterations_used: self.trace.len() as u32,
            trace: self.trace,
            verdict,
            final_psnr,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStepConfig {
    /// Rendered-vs-query PSNR at which the first step is accepted.
    pub psnr_threshold: f64,
    /// Number of coarse-to-fine passes after a failed first step; each pass
    /// restarts from the previous pass's result.
    pub passes: u32,
}

impl Default for TwoStepConfig {
    fn default() -> Self {
        TwoStepConfig {
            psnr_threshold: 25.0,
            passes: 2,
        }
    }
}

/// Two-step strategy: a standard (unblurred) optimization first; if its
/// rendered-vs-query PSNR stays below the threshold, restart from `cam0`
/// with the coarse-to-fine blur schedule.
pub fn two_step_localize(
    scene: &GaussianScene,
    query: &ImageBuffer,
    cam0: &Camera,
    cfg: &OptimizerConfig,
    blur: &BlurSchedule,
    two_step: &TwoStepConfig,
    opts: &RenderOpts,
) -> Result<LocalizationResult, RenderError> {
    let mut first = localize(scene, query, cam0, cfg, None, opts)?;
    if first.final_psnr >= two_step.psnr_threshold {
        first.verdict = Verdict::Converged;
        return Ok(first);
    }
    let mut start = cam0.pose;
    let mut last = first;
    for _ in 0..two_step.passes.max(1) {
        let mut r = localize(scene, query, &cam0.with_pose(start), cfg, Some(blur), opts)?;
        if r.final_psnr >= two_step.psnr_threshold {
            r.verdict = Verdict::RestartedThenConverged;
            return Ok(r);
        }
        start = r.pose;
        last = r;
    }
    last.verdict = Verdict::Failed;
    Ok(last)
}
