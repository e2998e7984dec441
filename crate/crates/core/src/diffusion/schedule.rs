use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::DiffusionError;

/// Variance schedule. `alpha_bar[0] = 1` and
/// `alpha_bar[t] = prod_{s <= t} (1 - beta_s)` for `t` in `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule, DiffusionError> {
    NoiseSchedule::linear(steps, beta_min, beta_max)
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self, DiffusionError> {
        if steps < 2 {
            return Err(DiffusionError::InvalidSchedule(format!(
                "need at least 2 steps, got {steps}"
            )));
        }
        if !(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0) {
            return Err(DiffusionError::InvalidSchedule(format!(
                "need 0 < beta_min < beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let last = (steps - 1) as f64;
        let betas = (0..steps)
            .map(|i| beta_min + (beta_max - beta_min) * i as f64 / last)
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self, DiffusionError> {
        if betas.is_empty() {
            return Err(DiffusionError::InvalidSchedule("empty schedule".into()));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(DiffusionError::InvalidSchedule(
                "every beta must lie in (0, 1)".into(),
            ));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(DiffusionError::InvalidSchedule(
                "betas must be nondecreasing".into(),
            ));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self { betas, alpha_bar })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Descending timesteps for an `n`-step DDIM pass, evenly spaced and
    /// ending at `T / n`. The step after the last one is `t = 0`.
    pub fn ddim_timesteps(&self, n: usize) -> Result<Vec<usize>, DiffusionError> {
        let total = self.steps();
        if n == 0 || n > total {
            return Err(DiffusionError::InvalidSchedule(format!(
                "{n} sampling steps requested for a {total}-step schedule"
            )));
        }
        Ok((1..=n).rev().map(|k| k * total / n).collect())
    }
}

fn check_shapes(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<(), DiffusionError> {
    if a.dim() != b.dim() {
        return Err(DiffusionError::ShapeMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`.
pub fn forward_noise(
    x0: ArrayView2<'_, f64>,
    t: usize,
    eps: ArrayView2<'_, f64>,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    check_shapes(x0, eps)?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(&x0).and(&eps).map_collect(|&x, &e| a * x + b * e))
}

/// Clean-sample estimate from a noise prediction.
pub fn predict_x0(
    x_t: ArrayView2<'_, f64>,
    t: usize,
    eps_hat: ArrayView2<'_, f64>,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    check_shapes(x_t, eps_hat)?;
    let ab = schedule.alpha_bar(t);
    if !(ab > 0.0) {
        return Err(DiffusionError::NumericalDomain(format!(
            "alpha_bar is zero at t = {t}"
        )));
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(&x_t).and(&eps_hat).map_collect(|&x, &e| (x - b * e) / a))
}

/// Deterministic DDIM update with the noise re-derived from `(x_t, x0_hat)`.
pub fn ddim_step(
    x_t: ArrayView2<'_, f64>,
    x0_hat: ArrayView2<'_, f64>,
    t: usize,
    t_next: usize,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    check_shapes(x_t, x0_hat)?;
    if t_next >= t {
        return Err(DiffusionError::NumericalDomain(format!(
            "DDIM step must decrease t, got {t} -> {t_next}"
        )));
    }
    if t_next == 0 {
        return Ok(x0_hat.to_owned());
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let eps = Zip::from(&x_t).and(&x0_hat).map_collect(|&x, &x0| (x - a * x0) / b);
    ddim_step_with_eps(x0_hat, eps.view(), t_next, schedule)
}

/// Deterministic DDIM update from an explicit noise estimate.
pub fn ddim_step_with_eps(
    x0_hat: ArrayView2<'_, f64>,
    eps: ArrayView2<'_, f64>,
    t_next: usize,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    if t_next == 0 {
        return Ok(x0_hat.to_owned());
    }
    forward_noise(x0_hat, t_next, eps, schedule)
}

/// Overwrites the first `prev_tail.nrows()` frames of `x_t` with the noised
/// previous tail.
pub fn inpaint_prefix(
    x_t: ArrayView2<'_, f64>,
    prev_tail: ArrayView2<'_, f64>,
    t: usize,
    eps: ArrayView2<'_, f64>,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    let overlap = prev_tail.nrows();
    if overlap > x_t.nrows() {
        return Err(DiffusionError::InvalidOverlap {
            overlap,
            frames: x_t.nrows(),
        });
    }
    if prev_tail.ncols() != x_t.ncols() {
        return Err(DiffusionError::ShapeMismatch {
            expected: (overlap, x_t.ncols()),
            found: prev_tail.dim(),
        });
    }
    let mut out = x_t.to_owned();
    if overlap > 0 {
        let noised = forward_noise(prev_tail, t, eps, schedule)?;
        out.slice_mut(ndarray::s![..overlap, ..]).assign(&noised);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ramp() -> NoiseSchedule {
        make_schedule(1000, 1e-4, 2e-2).unwrap()
    }

    #[test]
    fn linear_schedule_end_value() {
        let s = ramp();
        let direct: f64 = (0..1000)
            .map(|i| 1.0 - (1e-4 + (2e-2 - 1e-4) * i as f64 / 999.0))
            .product();
        assert_abs_diff_eq!(s.alpha_bar(1000), direct, epsilon = 1e-18);
        assert!(s.alpha_bar(1000) < 1e-4);
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn constant_beta_closed_form() {
        let s = NoiseSchedule::from_betas(vec![0.1; 20]).unwrap();
        for t in 0..=20 {
            assert_abs_diff_eq!(s.alpha_bar(t), 0.9f64.powi(t as i32), epsilon = 1e-15);
        }
    }

    #[test]
    fn invalid_bounds() {
        assert!(matches!(make_schedule(1000, 1e-4, 1.0), Err(DiffusionError::InvalidSchedule(_))));
        assert!(make_schedule(1000, 0.0, 0.1).is_err());
        assert!(make_schedule(1000, 0.2, 0.1).is_err());
        assert!(make_schedule(1, 0.1, 0.2).is_err());
    }

    #[test]
    fn ddim_grid() {
        let s = ramp();
        let ts = s.ddim_timesteps(200).unwrap();
        assert_eq!(ts.len(), 200);
        assert_eq!(ts[0], 1000);
        assert_eq!(ts[1], 995);
        assert_eq!(*ts.last().unwrap(), 5);
        assert!(s.ddim_timesteps(0).is_err());
        assert!(s.ddim_timesteps(1001).is_err());
    }

    fn schedule_with(ab: f64) -> NoiseSchedule {
        // one step whose alpha_bar is `ab`
        NoiseSchedule::from_betas(vec![1.0 - ab]).unwrap()
    }

    #[test]
    fn forward_noise_cases() {
        let s = ramp();
        let x0 = array![[2.0, -1.0]];
        let eps = array![[0.3, 0.7]];
        assert_eq!(forward_noise(x0.view(), 0, eps.view(), &s).unwrap(), x0);

        let quarter = schedule_with(0.25);
        let zero = Array2::zeros((1, 1));
        let xt = forward_noise(array![[2.0]].view(), 1, zero.view(), &quarter).unwrap();
        assert_abs_diff_eq!(xt[[0, 0]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn forward_noise_moments() {
        let s = ramp();
        let t = 300;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = array![[1.5]];
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = forward_noise(x0.view(), t, array![[e]].view(), &s).unwrap()[[0, 0]];
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let ab = s.alpha_bar(t);
        let sd = (1.0 - ab).sqrt();
        assert!((mean - ab.sqrt() * 1.5).abs() < 3.0 * sd / (n as f64).sqrt());
        assert!((var - (1.0 - ab)).abs() / (1.0 - ab) < 0.02);
    }

    #[test]
    fn predict_x0_inverts() {
        let s = ramp();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = Array2::from_shape_fn((4, 3), |_| StandardNormal.sample(&mut rng));
        let eps = Array2::from_shape_fn((4, 3), |_| StandardNormal.sample(&mut rng));
        for t in [1, 10, 500, 1000] {
            let xt = forward_noise(x0.view(), t, eps.view(), &s).unwrap();
            let back = predict_x0(xt.view(), t, eps.view(), &s).unwrap();
            for (a, b) in back.iter().zip(&x0) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
        let xt = array![[2.0]];
        let z = Array2::zeros((1, 1));
        let out = predict_x0(xt.view(), 500, z.view(), &s).unwrap();
        assert_abs_diff_eq!(out[[0, 0]], 2.0 / s.alpha_bar(500).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn predict_x0_rejects_zero_alpha_bar() {
        let s = NoiseSchedule {
            betas: vec![0.5],
            alpha_bar: vec![1.0, 0.0],
        };
        let z = Array2::zeros((1, 1));
        assert!(matches!(
            predict_x0(z.view(), 1, z.view(), &s),
            Err(DiffusionError::NumericalDomain(_))
        ));
    }

    #[test]
    fn ddim_reconstructs_consistent_trajectory() {
        let s = ramp();
        let x0 = array![[0.4, -1.2], [2.0, 0.1]];
        let eps = array![[1.0, 0.5], [-0.3, 0.8]];
        let x600 = forward_noise(x0.view(), 600, eps.view(), &s).unwrap();
        let x200 = ddim_step(x600.view(), x0.view(), 600, 200, &s).unwrap();
        let expect = forward_noise(x0.view(), 200, eps.view(), &s).unwrap();
        for (a, b) in x200.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(ddim_step(x600.view(), x0.view(), 600, 0, &s).unwrap(), x0);
    }

    #[test]
    fn ddim_degenerate_step_is_identity() {
        let s = NoiseSchedule {
            betas: vec![0.3, 0.3],
            alpha_bar: vec![1.0, 0.7, 0.7],
        };
        let x0 = array![[1.0, 2.0]];
        let eps = array![[0.5, -0.5]];
        let xt = forward_noise(x0.view(), 2, eps.view(), &s).unwrap();
        let next = ddim_step(xt.view(), x0.view(), 2, 1, &s).unwrap();
        for (a, b) in next.iter().zip(&xt) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn inpaint_cases() {
        let s = ramp();
        let xt = Array2::from_elem((5, 2), 9.0);
        let eps = Array2::from_elem((2, 2), 1.0);
        let tail = array![[1.0, 2.0], [3.0, 4.0]];
        let empty = Array2::zeros((0, 2));
        assert_eq!(inpaint_prefix(xt.view(), empty.view(), 100, empty.view(), &s).unwrap(), xt);
        let clean = inpaint_prefix(xt.view(), tail.view(), 0, eps.view(), &s).unwrap();
        assert_eq!(clean.slice(ndarray::s![..2, ..]), tail);
        assert_eq!(clean.slice(ndarray::s![2.., ..]), xt.slice(ndarray::s![2.., ..]));
        let too_long = Array2::zeros((6, 2));
        assert_eq!(
            inpaint_prefix(xt.view(), too_long.view(), 1, too_long.view(), &s),
            Err(DiffusionError::InvalidOverlap { overlap: 6, frames: 5 })
        );
    }

    #[test]
    fn inpaint_prefix_moments() {
        let s = ramp();
        let t = 700;
        let n = 20_000;
        let tail = array![[0.8, -0.4]];
        let xt = Array2::zeros((3, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let eps = Array2::from_shape_fn((1, 2), |_| StandardNormal.sample(&mut rng));
            let out = inpaint_prefix(xt.view(), tail.view(), t, eps.view(), &s).unwrap();
            for c in 0..2 {
                sum[c] += out[[0, c]];
                sq[c] += out[[0, c]] * out[[0, c]];
            }
        }
        let ab = s.alpha_bar(t);
        for c in 0..2 {
            let mean = sum[c] / n as f64;
            let var = sq[c] / n as f64 - mean * mean;
            let sd = (1.0 - ab).sqrt();
            assert!((mean - ab.sqrt() * tail[[0, c]]).abs() < 4.0 * sd / (n as f64).sqrt());
            assert!((var - (1.0 - ab)).abs() / (1.0 - ab) < 0.05);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn forward_predict_round_trip(
                t in 1usize..=1000,
                vals in proptest::collection::vec(-5.0f64..5.0, 12),
            ) {
                let s = ramp();
                let x0 = Array2::from_shape_vec((3, 2), vals[..6].to_vec()).unwrap();
                let eps = Array2::from_shape_vec((3, 2), vals[6..].to_vec()).unwrap();
                let xt = forward_noise(x0.view(), t, eps.view(), &s).unwrap();
                let back = predict_x0(xt.view(), t, eps.view(), &s).unwrap();
                let scale = 1.0 / s.alpha_bar(t).sqrt();
                for (a, b) in back.iter().zip(&x0) {
                    prop_assert!((a - b).abs() <= 1e-13 * scale * 10.0 + 1e-14);
                }
            }
        }
    }
}
