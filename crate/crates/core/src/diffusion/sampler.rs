use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::denoiser::{cfg_combine, Conditions, Denoiser};
use super::guidance::{guide_x0, similarity_replace, GuidanceConfig};
use super::schedule::{ddim_step_with_eps, inpaint_prefix, predict_x0, NoiseSchedule};
use super::DiffusionError;
use crate::constraints::ConstraintSet;

/// Inputs for one segment.
#[derive(Debug, Clone, Copy)]
pub struct SampleRequest<'a> {
    pub conditions: &'a Conditions,
    pub constraints: &'a ConstraintSet,
    /// Previous segment's final frames, already in this segment's local
    /// frame. Inpainted over the first rows at every step.
    pub prev_tail: Option<ArrayView2<'a, f64>>,
    pub frames: usize,
    pub width: usize,
    pub seed: u64,
}

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
}

/// Deterministic guided DDIM sampling of one segment.
///
/// Each reverse step inpaints the previous tail, combines conditional and
/// unconditional noise predictions, estimates the clean sample, applies
/// similarity replacement and gradient guidance to that estimate, and moves
/// to the next timestep along the combined noise prediction.
pub fn sample_segment(
    denoiser: &dyn Denoiser,
    request: &SampleRequest<'_>,
    config: &GuidanceConfig,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    config.validate()?;
    let shape = (request.frames, request.width);
    let constraints = request.constraints;
    constraints
        .validate(request.frames, request.width)
        .map_err(|e| DiffusionError::InvalidConstraint(e.to_string()))?;
    if let Some(tail) = request.prev_tail {
        if tail.nrows() > request.frames {
            return Err(DiffusionError::InvalidOverlap {
                overlap: tail.nrows(),
                frames: request.frames,
            });
        }
    }

    let total = schedule.steps();
    let timesteps = schedule.ddim_timesteps(config.ddim_steps)?;
    let steps = timesteps.len();
    let uncond = request.conditions.unconditional();
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut x = gaussian(&mut rng, shape);

    for (i, &t) in timesteps.iter().enumerate() {
        let t_next = timesteps.get(i + 1).copied().unwrap_or(0);
        if let Some(tail) = request.prev_tail {
            let eps = gaussian(&mut rng, tail.dim());
            x = inpaint_prefix(x.view(), tail, t, eps.view(), schedule)?;
        }
        let eps_cond = denoiser.predict(x.view(), t, request.conditions)?;
        let eps = if config.lambda == 1.0 {
            eps_cond
        } else {
            let eps_uncond = denoiser.predict(x.view(), t, &uncond)?;
            cfg_combine(eps_cond.view(), eps_uncond.view(), config.lambda)?
        };
        let mut x0 = predict_x0(x.view(), t, eps.view(), schedule)?;
        if let Some(sim) = &constraints.similarity {
            x0 = similarity_replace(x0.view(), sim, t, total, config.replacement)?;
        }
        x0 = guide_x0(x0.view(), &constraints.trajectory, config, i, steps)?;
        x = ddim_step_with_eps(x0.view(), eps.view(), t_next, schedule)?;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DiffusionError::NumericalDomain(
            "sampling produced non-finite values".into(),
        ));
    }
    Ok(x)
}
