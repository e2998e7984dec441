use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::DiffusionError;
use crate::constraints::{ConstraintGroup, SimilarityConstraint, TrajectoryConstraint};
use crate::motion::{extract, extract_adjoint};

/// Guidance strength per constraint group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaMap {
    pub root_position: f64,
    pub root_rotation: f64,
    pub head_rotation: f64,
}

impl Default for AlphaMap {
    fn default() -> Self {
        Self {
            root_position: 0.1,
            root_rotation: 20.0,
            head_rotation: 100.0,
        }
    }
}

impl AlphaMap {
    pub fn get(&self, group: ConstraintGroup) -> f64 {
        match group {
            ConstraintGroup::RootPosition => self.root_position,
            ConstraintGroup::RootRotation => self.root_rotation,
            ConstraintGroup::HeadRotation => self.head_rotation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNorm {
    /// `sum ||W (J(x) - J~)||^2`
    Squared,
    /// `sum ||W (J(x) - J~)||`
    Euclidean,
}

/// When similarity replacement is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementWindow {
    /// The first reverse steps: `t > T - cutoff`.
    EarlySteps,
    /// `t < cutoff`.
    BelowCutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Classifier-free guidance scale.
    pub lambda: f64,
    /// Fraction of reverse steps, from the start, that receive gradient
    /// guidance.
    pub tau: f64,
    pub updates_per_step: usize,
    pub alpha: AlphaMap,
    pub similarity_cutoff: usize,
    pub ddim_steps: usize,
    pub loss_norm: LossNorm,
    /// Limits each update so it cannot move a masked entry past its
    /// target: the step size is at most `0.5` for the squared loss and at
    /// most the residual norm for the Euclidean loss.
    pub cap_step: bool,
    pub replacement: ReplacementWindow,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            tau: 0.8,
            updates_per_step: 2,
            alpha: AlphaMap::default(),
            similarity_cutoff: 200,
            ddim_steps: 200,
            loss_norm: LossNorm::Squared,
            cap_step: true,
            replacement: ReplacementWindow::EarlySteps,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        let bad = |m: String| Err(DiffusionError::InvalidConfig(m));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        let a = self.alpha;
        if [a.root_position, a.root_rotation, a.head_rotation]
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return bad("guidance strengths must be non-negative".into());
        }
        if self.ddim_steps == 0 {
            return bad("ddim_steps must be positive".into());
        }
        if !self.lambda.is_finite() {
            return bad("lambda must be finite".into());
        }
        Ok(())
    }

    /// Whether reverse step `step_index` (0 = noisiest) is guided.
    pub fn in_scope(&self, step_index: usize, total_steps: usize) -> bool {
        (step_index as f64) < self.tau * total_steps as f64
    }
}

fn check_constraint(c: &TrajectoryConstraint, x: ArrayView2<'_, f64>) -> Result<(), DiffusionError> {
    c.validate(x.nrows(), x.ncols())
        .map_err(|e| DiffusionError::InvalidConstraint(e.to_string()))
}

/// Loss and gradient of a single trajectory constraint.
fn single_loss(
    x: ArrayView2<'_, f64>,
    c: &TrajectoryConstraint,
    norm: LossNorm,
) -> Result<(f64, Array2<f64>, f64), DiffusionError> {
    let picked = extract(x, &c.selector)?;
    let masked = Zip::from(&picked)
        .and(&c.targets)
        .and(&c.mask)
        .map_collect(|&p, &t, &w| w * (p - t));
    let sq: f64 = masked.iter().map(|v| v * v).sum();
    let residual_norm = sq.sqrt();
    let (loss, inner) = match norm {
        LossNorm::Squared => (sq, Zip::from(&masked).and(&c.mask).map_collect(|&r, &w| 2.0 * w * r)),
        LossNorm::Euclidean => {
            if residual_norm == 0.0 {
                (0.0, Array2::zeros(masked.dim()))
            } else {
                (
                    residual_norm,
                    Zip::from(&masked)
                        .and(&c.mask)
                        .map_collect(|&r, &w| w * r / residual_norm),
                )
            }
        }
    };
    let grad = extract_adjoint(inner.view(), &c.selector, x.ncols())?;
    Ok((loss, grad, residual_norm))
}

/// Total constraint loss and its gradient with respect to `x0_hat`.
pub fn constraint_loss(
    x0_hat: ArrayView2<'_, f64>,
    constraints: &[TrajectoryConstraint],
    norm: LossNorm,
) -> Result<(f64, Array2<f64>), DiffusionError> {
    let mut total = 0.0;
    let mut grad = Array2::zeros(x0_hat.dim());
    for c in constraints {
        check_constraint(c, x0_hat)?;
        let (l, g, _) = single_loss(x0_hat, c, norm)?;
        total += l;
        grad += &g;
    }
    Ok((total, grad))
}

fn step_size(alpha: f64, norm: LossNorm, residual_norm: f64, cap: bool) -> f64 {
    if !cap {
        return alpha;
    }
    match norm {
        LossNorm::Squared => alpha.min(0.5),
        LossNorm::Euclidean => alpha.min(residual_norm),
    }
}

/// Gradient guidance on the clean-sample estimate. Within the control
/// scope, runs `updates_per_step` descent updates, each group scaled by its
/// own strength and the loss re-evaluated before every update.
pub fn guide_x0(
    x0_hat: ArrayView2<'_, f64>,
    constraints: &[TrajectoryConstraint],
    config: &GuidanceConfig,
    step_index: usize,
    total_steps: usize,
) -> Result<Array2<f64>, DiffusionError> {
    let mut x = x0_hat.to_owned();
    if constraints.is_empty() || !config.in_scope(step_index, total_steps) {
        return Ok(x);
    }
    for c in constraints {
        check_constraint(c, x0_hat)?;
    }
    for _ in 0..config.updates_per_step {
        let mut update = Array2::zeros(x.dim());
        for c in constraints {
            let (_, g, r) = single_loss(x.view(), c, config.loss_norm)?;
            let eta = step_size(config.alpha.get(c.group), config.loss_norm, r, config.cap_step);
            update.scaled_add(eta, &g);
        }
        x -= &update;
    }
    Ok(x)
}

pub fn replacement_active(
    cutoff: usize,
    t: usize,
    total: usize,
    window: ReplacementWindow,
) -> bool {
    match window {
        ReplacementWindow::EarlySteps => cutoff > 0 && t + cutoff > total,
        ReplacementWindow::BelowCutoff => t < cutoff,
    }
}

/// Writes the similarity target into `x0_hat` on its channels and frames
/// while replacement is active at diffusion timestep `t`.
pub fn similarity_replace(
    x0_hat: ArrayView2<'_, f64>,
    constraint: &SimilarityConstraint,
    t: usize,
    total: usize,
    window: ReplacementWindow,
) -> Result<Array2<f64>, DiffusionError> {
    if constraint.target.dim() != x0_hat.dim() {
        return Err(DiffusionError::ShapeMismatch {
            expected: x0_hat.dim(),
            found: constraint.target.dim(),
        });
    }
    let mut out = x0_hat.to_owned();
    if !replacement_active(constraint.cutoff, t, total, window) {
        return Ok(out);
    }
    for f in constraint.start_frame.min(out.nrows())..out.nrows() {
        for &c in &constraint.channels {
            out[[f, c]] = constraint.target[[f, c]];
        }
    }
    Ok(out)
}
