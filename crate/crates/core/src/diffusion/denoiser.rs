use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{forward_noise, NoiseSchedule};
use super::DiffusionError;
use crate::motion::MotionState;

/// Which speech conditions are replaced by the null token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullFlags {
    pub self_speech: bool,
    pub partner_speech: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub state: MotionState,
    /// Opaque speech features; passed through to the denoiser untouched.
    pub self_speech: Option<Vec<f64>>,
    pub partner_speech: Option<Vec<f64>>,
    pub null_flags: NullFlags,
}

impl Conditions {
    pub fn new(state: MotionState) -> Self {
        Self {
            state,
            self_speech: None,
            partner_speech: None,
            null_flags: NullFlags::default(),
        }
    }

    /// The same conditions with both speech inputs nulled, as used by the
    /// unconditional branch of classifier-free guidance.
    pub fn unconditional(&self) -> Self {
        Self {
            state: self.state,
            self_speech: self.self_speech.clone(),
            partner_speech: self.partner_speech.clone(),
            null_flags: NullFlags {
                self_speech: true,
                partner_speech: true,
            },
        }
    }
}

/// Training-time condition dropout: each speech input is nulled
/// independently with probability `p`.
pub fn apply_condition_dropout<R: Rng + ?Sized>(cond: &Conditions, p: f64, rng: &mut R) -> Conditions {
    let mut out = cond.clone();
    out.null_flags.self_speech |= rng.random::<f64>() < p;
    out.null_flags.partner_speech |= rng.random::<f64>() < p;
    out
}

/// Noise predictor `eps_hat = D(x_t, t, conditions)`. Implementations must
/// be deterministic and return the input's shape.
pub trait Denoiser: Send + Sync {
    fn predict(
        &self,
        x_t: ArrayView2<'_, f64>,
        t: usize,
        conditions: &Conditions,
    ) -> Result<Array2<f64>, DiffusionError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorComponent {
    pub weight: f64,
    /// Per-channel mean, broadcast over frames.
    pub mean: Vec<f64>,
    pub stddev: f64,
}

/// Isotropic Gaussian, or a mixture of them, over whole segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PriorComponent>", into = "Vec<PriorComponent>")]
pub struct GaussianPrior {
    components: Vec<PriorComponent>,
}

impl TryFrom<Vec<PriorComponent>> for GaussianPrior {
    type Error = DiffusionError;

    fn try_from(components: Vec<PriorComponent>) -> Result<Self, Self::Error> {
        Self::mixture(components)
    }
}

impl From<GaussianPrior> for Vec<PriorComponent> {
    fn from(p: GaussianPrior) -> Self {
        p.components
    }
}

impl GaussianPrior {
    pub fn isotropic(mean: Vec<f64>, stddev: f64) -> Result<Self, DiffusionError> {
        Self::mixture(vec![PriorComponent {
            weight: 1.0,
            mean,
            stddev,
        }])
    }

    pub fn mixture(components: Vec<PriorComponent>) -> Result<Self, DiffusionError> {
        let bad = |m: &str| Err(DiffusionError::InvalidPrior(m.to_string()));
        let Some(first) = components.first() else {
            return bad("prior needs at least one component");
        };
        let width = first.mean.len();
        if components.iter().any(|c| c.mean.len() != width) {
            return bad("component means differ in width");
        }
        if components.iter().any(|c| !(c.stddev > 0.0) || !c.stddev.is_finite()) {
            return bad("standard deviations must be positive");
        }
        if components.iter().any(|c| !(c.weight >= 0.0)) {
            return bad("weights must be non-negative");
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("weights must sum to 1");
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[PriorComponent] {
        &self.components
    }

    pub fn width(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Mixture responsibilities given a noised segment.
    pub fn responsibilities(&self, x_t: ArrayView2<'_, f64>, alpha_bar: f64) -> Vec<f64> {
        if self.components.len() == 1 {
            return vec![1.0];
        }
        let n = x_t.len() as f64;
        let scale = alpha_bar.sqrt();
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let var = alpha_bar * c.stddev * c.stddev + (1.0 - alpha_bar);
                let sq: f64 = x_t
                    .rows()
                    .into_iter()
                    .map(|row| {
                        row.iter()
                            .zip(&c.mean)
                            .map(|(x, m)| (x - scale * m).powi(2))
                            .sum::<f64>()
                    })
                    .sum();
                c.weight.ln() - 0.5 * n * var.ln() - sq / (2.0 * var)
            })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    /// `E[x0 | x_t]` under the prior.
    pub fn posterior_mean(&self, x_t: ArrayView2<'_, f64>, alpha_bar: f64) -> Array2<f64> {
        let resp = self.responsibilities(x_t, alpha_bar);
        let scale = alpha_bar.sqrt();
        let mut out = Array2::zeros(x_t.dim());
        for (c, r) in self.components.iter().zip(resp) {
            if r == 0.0 {
                continue;
            }
            let s2 = c.stddev * c.stddev;
            let denom = alpha_bar * s2 + (1.0 - alpha_bar);
            for (mut o, x) in out.rows_mut().into_iter().zip(x_t.rows()) {
                for ((o, &x), &m) in o.iter_mut().zip(x.iter()).zip(&c.mean) {
                    *o += r * (scale * s2 * x + (1.0 - alpha_bar) * m) / denom;
                }
            }
        }
        out
    }
}

/// Closed-form noise prediction for a Gaussian (mixture) prior.
pub fn gaussian_denoiser(
    x_t: ArrayView2<'_, f64>,
    t: usize,
    prior: &GaussianPrior,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    if x_t.ncols() != prior.width() {
        return Err(DiffusionError::ShapeMismatch {
            expected: (x_t.nrows(), prior.width()),
            found: x_t.dim(),
        });
    }
    if t == 0 {
        return Ok(Array2::zeros(x_t.dim()));
    }
    let ab = schedule.alpha_bar(t);
    let x0 = prior.posterior_mean(x_t, ab);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(&x_t).and(&x0).map_collect(|&x, &m| (x - a * m) / b))
}

/// Reference denoiser: one Gaussian prior per motion state, speech ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDenoiser {
    priors: BTreeMap<MotionState, GaussianPrior>,
    schedule: NoiseSchedule,
}

impl GaussianDenoiser {
    pub fn new(priors: BTreeMap<MotionState, GaussianPrior>, schedule: NoiseSchedule) -> Self {
        Self { priors, schedule }
    }

    /// Same prior for every state.
    pub fn uniform(prior: GaussianPrior, schedule: NoiseSchedule) -> Self {
        let priors = [MotionState::Stand, MotionState::Walk, MotionState::Sit]
            .into_iter()
            .map(|s| (s, prior.clone()))
            .collect();
        Self { priors, schedule }
    }

    pub fn prior(&self, state: MotionState) -> Result<&GaussianPrior, DiffusionError> {
        self.priors
            .get(&state)
            .ok_or(DiffusionError::MissingPrior(state))
    }
}

impl Denoiser for GaussianDenoiser {
    fn predict(
        &self,
        x_t: ArrayView2<'_, f64>,
        t: usize,
        conditions: &Conditions,
    ) -> Result<Array2<f64>, DiffusionError> {
        gaussian_denoiser(x_t, t, self.prior(conditions.state)?, &self.schedule)
    }
}

/// `lambda * cond + (1 - lambda) * uncond`.
pub fn cfg_combine(
    eps_cond: ArrayView2<'_, f64>,
    eps_uncond: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<Array2<f64>, DiffusionError> {
    if eps_cond.dim() != eps_uncond.dim() {
        return Err(DiffusionError::ShapeMismatch {
            expected: eps_cond.dim(),
            found: eps_uncond.dim(),
        });
    }
    Ok(Zip::from(&eps_cond)
        .and(&eps_uncond)
        .map_collect(|&c, &u| lambda * c + (1.0 - lambda) * u))
}

/// Mean squared error of the noise prediction at `x_t = q(x0, t, eps)`.
pub fn training_loss(
    denoiser: &dyn Denoiser,
    x0: ArrayView2<'_, f64>,
    t: usize,
    eps: ArrayView2<'_, f64>,
    conditions: &Conditions,
    schedule: &NoiseSchedule,
) -> Result<f64, DiffusionError> {
    let x_t = forward_noise(x0, t, eps, schedule)?;
    let pred = denoiser.predict(x_t.view(), t, conditions)?;
    if pred.dim() != eps.dim() {
        return Err(DiffusionError::ShapeMismatch {
            expected: eps.dim(),
            found: pred.dim(),
        });
    }
    let n = eps.len().max(1) as f64;
    Ok(Zip::from(&eps)
        .and(&pred)
        .fold(0.0, |acc, &e, &p| acc + (e - p) * (e - p))
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::make_schedule;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    struct Exact(Array2<f64>);
    impl Denoiser for Exact {
        fn predict(&self, _: ArrayView2<'_, f64>, _: usize, _: &Conditions) -> Result<Array2<f64>, DiffusionError> {
            Ok(self.0.clone())
        }
    }

    fn quarter() -> NoiseSchedule {
        NoiseSchedule::from_betas(vec![0.75]).unwrap()
    }

    #[test]
    fn standard_prior_closed_form() {
        let prior = GaussianPrior::isotropic(vec![0.0], 1.0).unwrap();
        let eps = gaussian_denoiser(array![[2.0]].view(), 1, &prior, &quarter()).unwrap();
        // E[x0|x_t] = sqrt(0.25) * 2 = 1, eps = (2 - 0.5) / sqrt(0.75)
        assert_abs_diff_eq!(eps[[0, 0]], 1.5 / 0.75f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(eps[[0, 0]], 1.7321, epsilon = 1e-4);
        let x0 = prior.posterior_mean(array![[2.0]].view(), 0.25);
        assert_abs_diff_eq!(x0[[0, 0]], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn posterior_mean_matches_quadrature() {
        // numerically integrate x0 * p(x0) * p(x_t | x0) on a grid
        let (mu, sigma, ab, xt): (f64, f64, f64, f64) = (0.7, 1.3, 0.4, -0.9);
        let prior = GaussianPrior::isotropic(vec![mu], sigma).unwrap();
        let h = 1e-3;
        let (mut num, mut den) = (0.0, 0.0);
        let mut x = mu - 12.0 * sigma;
        while x < mu + 12.0 * sigma {
            let p0 = (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp();
            let r = xt - ab.sqrt() * x;
            let lik = (-r * r / (2.0 * (1.0 - ab))).exp();
            num += x * p0 * lik * h;
            den += p0 * lik * h;
            x += h;
        }
        let got = prior.posterior_mean(array![[xt]].view(), ab)[[0, 0]];
        assert_abs_diff_eq!(got, num / den, epsilon = 1e-8);
    }

    #[test]
    fn limits() {
        let prior = GaussianPrior::isotropic(vec![0.5, -0.5], 1.0).unwrap();
        let xt = array![[2.0, 3.0]];
        let near_clean = prior.posterior_mean(xt.view(), 1.0 - 1e-12);
        assert_abs_diff_eq!(near_clean[[0, 0]], 2.0, epsilon = 1e-9);
        let point = GaussianPrior::isotropic(vec![0.5, -0.5], 1e-9).unwrap();
        let pinned = point.posterior_mean(xt.view(), 0.3);
        assert_abs_diff_eq!(pinned[[0, 0]], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(pinned[[0, 1]], -0.5, epsilon = 1e-9);
    }

    #[test]
    fn mixture_picks_dominant_component() {
        let comps = vec![
            PriorComponent { weight: 0.5, mean: vec![2.0], stddev: 0.1 },
            PriorComponent { weight: 0.5, mean: vec![-2.0], stddev: 0.1 },
        ];
        let prior = GaussianPrior::mixture(comps).unwrap();
        let xt = Array2::from_elem((10, 1), 1.9);
        let r = prior.responsibilities(xt.view(), 0.99);
        assert!(r[0] > 0.999999);
        let symmetric = prior.responsibilities(Array2::zeros((10, 1)).view(), 0.5);
        assert_abs_diff_eq!(symmetric[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn prior_validation() {
        assert!(GaussianPrior::isotropic(vec![0.0], 0.0).is_err());
        assert!(GaussianPrior::mixture(vec![]).is_err());
        let lopsided = vec![
            PriorComponent { weight: 0.7, mean: vec![0.0], stddev: 1.0 },
            PriorComponent { weight: 0.7, mean: vec![0.0], stddev: 1.0 },
        ];
        assert!(GaussianPrior::mixture(lopsided).is_err());
    }

    #[test]
    fn missing_state_prior() {
        let s = make_schedule(10, 1e-3, 1e-2).unwrap();
        let mut priors = BTreeMap::new();
        priors.insert(MotionState::Stand, GaussianPrior::isotropic(vec![0.0], 1.0).unwrap());
        let d = GaussianDenoiser::new(priors, s);
        let err = d.predict(array![[0.0]].view(), 3, &Conditions::new(MotionState::Sit));
        assert_eq!(err, Err(DiffusionError::MissingPrior(MotionState::Sit)));
    }

    #[test]
    fn cfg_cases() {
        let c = array![[1.0]];
        let u = array![[0.5]];
        assert_eq!(cfg_combine(c.view(), u.view(), 1.0).unwrap(), c);
        assert_eq!(cfg_combine(c.view(), u.view(), 0.0).unwrap(), u);
        assert_eq!(cfg_combine(c.view(), u.view(), 2.0).unwrap()[[0, 0]], 1.5);
    }

    #[test]
    fn training_loss_cases() {
        let s = make_schedule(100, 1e-3, 2e-2).unwrap();
        let x0 = array![[0.3, -0.2]];
        let eps = array![[1.0, -2.0]];
        let cond = Conditions::new(MotionState::Stand);
        let exact = Exact(eps.clone());
        assert_eq!(training_loss(&exact, x0.view(), 40, eps.view(), &cond, &s).unwrap(), 0.0);
        let zero = Exact(Array2::zeros((1, 2)));
        assert_eq!(training_loss(&zero, x0.view(), 40, eps.view(), &cond, &s).unwrap(), 2.5);
    }

    #[test]
    fn posterior_beats_zero_predictor() {
        let s = make_schedule(1000, 1e-4, 2e-2).unwrap();
        let prior = GaussianPrior::isotropic(vec![0.4, -0.4, 1.0], 0.8).unwrap();
        let d = GaussianDenoiser::uniform(prior.clone(), s.clone());
        let zero = Exact(Array2::zeros((4, 3)));
        let cond = Conditions::new(MotionState::Stand);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..2000 {
            let t = 1 + (i * 37) % 1000;
            let x0 = Array2::from_shape_fn((4, 3), |(_, c)| {
                prior.components()[0].mean[c] + 0.8 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            });
            let eps: Array2<f64> = Array2::from_shape_fn((4, 3), |_| StandardNormal.sample(&mut rng));
            a += training_loss(&d, x0.view(), t, eps.view(), &cond, &s).unwrap();
            b += training_loss(&zero, x0.view(), t, eps.view(), &cond, &s).unwrap();
        }
        assert!(a < b, "posterior {a} vs zero {b}");
    }

    #[test]
    fn dropout_rate() {
        let cond = Conditions::new(MotionState::Stand);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20_000;
        let dropped = (0..n)
            .filter(|_| apply_condition_dropout(&cond, 0.2, &mut rng).null_flags.self_speech)
            .count();
        let rate = dropped as f64 / n as f64;
        assert!((rate - 0.2).abs() < 0.015, "rate {rate}");
        assert!(cond.unconditional().null_flags.partner_speech);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cfg_fixed_point(vals in proptest::collection::vec(-10.0f64..10.0, 6), lambda in -5.0f64..5.0) {
                let e = Array2::from_shape_vec((2, 3), vals).unwrap();
                let out = cfg_combine(e.view(), e.view(), lambda).unwrap();
                for (a, b) in out.iter().zip(&e) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + lambda.abs()) * (1.0 + b.abs()));
                }
            }
        }
    }
}
