//! Interaction metrics over two-character traces: the delayed motion
//! synchrony score (max lagged Pearson correlation of velocities) and the
//! Fréchet distance between cross-character distance-matrix distributions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{s, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{velocities, MotionError, SkeletonConfig, UPPER_BODY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("correlation undefined: every channel has zero variance")]
    UndefinedCorrelation,
    #[error("{frames} frames available, at least {required} required")]
    TooShort { frames: usize, required: usize },
    #[error("inputs disagree in shape: {0}")]
    ShapeMismatch(String),
    #[error("populations come from different skeletons")]
    SkeletonMismatch,
    #[error("invalid metric config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmssConfig {
    pub window: usize,
    pub max_lag: usize,
    pub stride: usize,
    /// Channels whose velocities are compared; `None` means the skeleton's
    /// upper-body group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<usize>>,
}

impl Default for DmssConfig {
    fn default() -> Self {
        Self {
            window: 30,
            max_lag: 5,
            stride: 15,
            channels: None,
        }
    }
}

impl DmssConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.window <= 2 * self.max_lag {
            return Err(MetricsError::InvalidConfig(format!(
                "window {} must exceed twice the max lag {}",
                self.window, self.max_lag
            )));
        }
        if self.stride == 0 {
            return Err(MetricsError::InvalidConfig("stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn selector(&self, skeleton: &SkeletonConfig) -> Result<Vec<usize>, MetricsError> {
        match &self.channels {
            Some(c) => Ok(c.clone()),
            None => Ok(skeleton.group(UPPER_BODY)?.to_vec()),
        }
    }
}

fn mean_std(v: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn degenerate(mean: f64, std: f64) -> bool {
    std <= 1e-12 * (1.0 + mean.abs())
}

/// Pearson correlation of the flattened, per-channel z-scored windows.
/// Channels that are constant on either side are left out.
fn zscored_pearson(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for c in 0..a.ncols() {
        let (ca, cb) = (a.column(c), b.column(c));
        let (ma, sa) = mean_std(ca);
        let (mb, sb) = mean_std(cb);
        if degenerate(ma, sa) || degenerate(mb, sb) {
            continue;
        }
        xs.extend(ca.iter().map(|x| (x - ma) / sa));
        ys.extend(cb.iter().map(|y| (y - mb) / sb));
    }
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Maximum over lags `-L..=L` of the z-scored Pearson correlation. A
/// positive lag pairs `a[lag..]` with `b[..T - lag]`.
pub fn dmss_window(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    max_lag: usize,
) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let t = a.nrows();
    if t < 2 || max_lag + 2 > t {
        return Err(MetricsError::TooShort {
            frames: t,
            required: (max_lag + 2).max(2),
        });
    }
    let lag = max_lag as isize;
    let mut best: Option<f64> = None;
    for tau in -lag..=lag {
        let k = tau.unsigned_abs();
        let (sa, sb) = if tau >= 0 {
            (a.slice(s![k..t, ..]), b.slice(s![0..t - k, ..]))
        } else {
            (a.slice(s![0..t - k, ..]), b.slice(s![k..t, ..]))
        };
        if let Some(r) = zscored_pearson(sa, sb) {
            best = Some(best.map_or(r, |m: f64| m.max(r)));
        }
    }
    best.ok_or(MetricsError::UndefinedCorrelation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmssWindowScore {
    pub start_frame: usize,
    /// `None` where every channel was constant.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmssReport {
    pub windows: Vec<DmssWindowScore>,
    pub mean: f64,
}

/// Sliding-window synchrony over two equally long frame matrices.
pub fn dmss_report(
    trace_i: ArrayView2<'_, f64>,
    trace_ii: ArrayView2<'_, f64>,
    selector: &[usize],
    config: &DmssConfig,
) -> Result<DmssReport, MetricsError> {
    config.validate()?;
    if trace_i.dim() != trace_ii.dim() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            trace_i.dim(),
            trace_ii.dim()
        )));
    }
    if trace_i.nrows() < config.window + 1 {
        return Err(MetricsError::TooShort {
            frames: trace_i.nrows(),
            required: config.window + 1,
        });
    }
    let va = velocities(trace_i, selector)?;
    let vb = velocities(trace_ii, selector)?;
    let mut windows = Vec::new();
    let mut start = 0;
    while start + config.window <= va.nrows() {
        let range = s![start..start + config.window, ..];
        let score = match dmss_window(va.slice(range), vb.slice(range), config.max_lag) {
            Ok(v) => Some(v),
            Err(MetricsError::UndefinedCorrelation) => None,
            Err(e) => return Err(e),
        };
        windows.push(DmssWindowScore {
            start_frame: start,
            score,
        });
        start += config.stride;
    }
    let valid: Vec<f64> = windows.iter().filter_map(|w| w.score).collect();
    if valid.is_empty() {
        return Err(MetricsError::UndefinedCorrelation);
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(DmssReport { windows, mean })
}

pub fn dmss(
    trace_i: ArrayView2<'_, f64>,
    trace_ii: ArrayView2<'_, f64>,
    selector: &[usize],
    config: &DmssConfig,
) -> Result<f64, MetricsError> {
    dmss_report(trace_i, trace_ii, selector, config).map(|r| r.mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianSummary {
    /// Sample mean and unbiased covariance of the rows of `samples`.
    pub fn fit(samples: ArrayView2<'_, f64>) -> Result<Self, MetricsError> {
        let (n, d) = samples.dim();
        if n < 2 {
            return Err(MetricsError::TooShort {
                frames: n,
                required: 2,
            });
        }
        let mut mean = DVector::zeros(d);
        for row in samples.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for row in samples.rows() {
            let c = DVector::from_iterator(d, row.iter().copied()) - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        Ok(Self {
            mean,
            covariance: cov,
        })
    }
}

const SINGULAR_TOL: f64 = 1e-12;
pub const REGULARIZATION: f64 = 1e-6;

/// Square root of a symmetric positive semidefinite matrix; negative
/// eigenvalues from rounding are clipped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn regularize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    if d == 0 {
        return cov.clone();
    }
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let top = eig.eigenvalues.max().abs().max(1.0);
    if eig.eigenvalues.min() <= SINGULAR_TOL * top {
        cov + DMatrix::identity(d, d) * REGULARIZATION
    } else {
        cov.clone()
    }
}

/// `||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)`, with a small
/// diagonal added to any singular covariance.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64, MetricsError> {
    if a.mean.len() != b.mean.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "dimension {} vs {}",
            a.mean.len(),
            b.mean.len()
        )));
    }
    let s1 = regularize(&a.covariance);
    let s2 = regularize(&b.covariance);
    let root1 = sqrtm_psd(&s1);
    let cross = sqrtm_psd(&(&root1 * &s2 * &root1));
    let diff = &a.mean - &b.mean;
    let value = diff.norm_squared() + s1.trace() + s2.trace() - 2.0 * cross.trace();
    Ok(value.max(0.0))
}

/// Fréchet distance between Gaussians fitted to two feature populations.
pub fn fdd_from_features(
    generated: ArrayView2<'_, f64>,
    real: ArrayView2<'_, f64>,
) -> Result<f64, MetricsError> {
    if generated.ncols() != real.ncols() {
        return Err(MetricsError::SkeletonMismatch);
    }
    frechet_distance(&GaussianSummary::fit(generated)?, &GaussianSummary::fit(real)?)
}

/// Points standing in for joint positions: the root position followed by
/// one 3-channel triple per listed joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointProxies {
    pub root_position: [usize; 3],
    pub joint_triples: Vec<[usize; 3]>,
}

impl JointProxies {
    /// Root position plus every non-root joint's rotation channels.
    pub fn for_skeleton(skeleton: &SkeletonConfig) -> Result<Self, MetricsError> {
        let q = skeleton.joint_dim;
        if q != 3 {
            return Err(MetricsError::InvalidConfig(format!(
                "joint proxies need 3 channels per joint, skeleton has {q}"
            )));
        }
        let joint_triples = (1..skeleton.joint_count())
            .map(|j| [j * 3, j * 3 + 1, j * 3 + 2])
            .collect();
        Ok(Self {
            root_position: skeleton.root_position_channels()?,
            joint_triples,
        })
    }

    pub fn len(&self) -> usize {
        1 + self.joint_triples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn points(&self, frame: &[f64]) -> Vec<[f64; 3]> {
        std::iter::once(&self.root_position)
            .chain(&self.joint_triples)
            .map(|t| [frame[t[0]], frame[t[1]], frame[t[2]]])
            .collect()
    }

    fn max_channel(&self) -> usize {
        std::iter::once(&self.root_position)
            .chain(&self.joint_triples)
            .flat_map(|t| t.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Flattened matrix of distances between every proxy of character I and
/// every proxy of character II.
pub fn distance_features(
    frame_i: &[f64],
    frame_ii: &[f64],
    proxies: &JointProxies,
) -> Result<Vec<f64>, MetricsError> {
    let need = proxies.max_channel() + 1;
    if frame_i.len() < need || frame_ii.len() < need {
        return Err(MetricsError::SkeletonMismatch);
    }
    let a = proxies.points(frame_i);
    let b = proxies.points(frame_ii);
    let mut out = Vec::with_capacity(a.len() * b.len());
    for p in &a {
        for q in &b {
            out.push(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt());
        }
    }
    Ok(out)
}

/// A frame of each character at the same instant, in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

fn feature_matrix(pairs: &[FramePair], proxies: &JointProxies) -> Result<Array2<f64>, MetricsError> {
    let dim = proxies.len() * proxies.len();
    let mut m = Array2::zeros((pairs.len(), dim));
    for (row, p) in m.rows_mut().into_iter().zip(pairs) {
        let f = distance_features(&p.first, &p.second, proxies)?;
        row.into_iter().zip(f).for_each(|(dst, v)| *dst = v);
    }
    Ok(m)
}

pub fn fdd(
    generated: &[FramePair],
    real: &[FramePair],
    proxies: &JointProxies,
) -> Result<f64, MetricsError> {
    let width = |ps: &[FramePair]| ps.first().map(|p| p.first.len());
    let all_same = |ps: &[FramePair], w: usize| {
        ps.iter().all(|p| p.first.len() == w && p.second.len() == w)
    };
    match (width(generated), width(real)) {
        (Some(a), Some(b)) if a == b && all_same(generated, a) && all_same(real, b) => {}
        (Some(_), Some(_)) => return Err(MetricsError::SkeletonMismatch),
        _ => {
            return Err(MetricsError::TooShort {
                frames: generated.len().min(real.len()),
                required: 2,
            })
        }
    }
    let g = feature_matrix(generated, proxies)?;
    let r = feature_matrix(real, proxies)?;
    fdd_from_features(g.view(), r.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
    }

    /// Independent loop: for every lag, trims per the shift rule, z-scores
    /// each channel with two-pass statistics and averages products.
    fn brute_force(a: &Array2<f64>, b: &Array2<f64>, max_lag: i64) -> f64 {
        let t = a.nrows() as i64;
        let d = a.ncols();
        let mut best = f64::NEG_INFINITY;
        for tau in -max_lag..=max_lag {
            let (a0, b0, len) = if tau > 0 {
                (tau, 0, t - tau)
            } else {
                (0, -tau, t + tau)
            };
            let mut prods = Vec::new();
            for c in 0..d {
                let xa: Vec<f64> = (0..len).map(|k| a[[(a0 + k) as usize, c]]).collect();
                let xb: Vec<f64> = (0..len).map(|k| b[[(b0 + k) as usize, c]]).collect();
                let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                let sd = |v: &[f64], mu: f64| (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / v.len() as f64).sqrt();
                let (ma, mb) = (m(&xa), m(&xb));
                let (sa, sb) = (sd(&xa, ma), sd(&xb, mb));
                for k in 0..len as usize {
                    prods.push(((xa[k] - ma) / sa) * ((xb[k] - mb) / sb));
                }
            }
            let r = prods.iter().sum::<f64>() / prods.len() as f64;
            best = best.max(r);
        }
        best
    }

    #[test]
    fn identical_windows_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = noise(&mut rng, 30, 4);
        assert_abs_diff_eq!(dmss_window(a.view(), a.view(), 5).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn delayed_copy_scores_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = noise(&mut rng, 33, 3);
        let a = base.slice(s![3..33, ..]).to_owned();
        let b = base.slice(s![0..30, ..]).to_owned();
        // b[k] = a[k - 3]: b lags a by three frames
        assert_abs_diff_eq!(dmss_window(a.view(), b.view(), 5).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dmss_window(b.view(), a.view(), 5).unwrap(), 1.0, epsilon = 1e-12);
        assert!(dmss_window(a.view(), b.view(), 2).unwrap() < 0.9);
    }

    #[test]
    fn six_frame_brute_force() {
        let a = Array2::from_shape_vec((6, 1), vec![0.1, 0.9, -0.4, 0.3, 1.2, -0.8]).unwrap();
        let b = Array2::from_shape_vec((6, 1), vec![0.5, -0.2, 0.7, 0.0, -1.1, 0.6]).unwrap();
        // lags up to 4 keep at least two samples per side
        let got = dmss_window(a.view(), b.view(), 4).unwrap();
        assert_abs_diff_eq!(got, brute_force(&a, &b, 4), epsilon = 1e-12);
    }

    #[test]
    fn constant_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = noise(&mut rng, 30, 2);
        a.column_mut(1).fill(4.0);
        let b = a.clone();
        assert_abs_diff_eq!(dmss_window(a.view(), b.view(), 5).unwrap(), 1.0, epsilon = 1e-12);
        let flat = Array2::from_elem((30, 2), 1.0);
        assert_eq!(
            dmss_window(flat.view(), b.view(), 5),
            Err(MetricsError::UndefinedCorrelation)
        );
    }

    #[test]
    fn trace_level_cases() {
        let skel = SkeletonConfig::reference();
        let sel = DmssConfig::default().selector(&skel).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = noise(&mut rng, 150, skel.width());
        let cfg = DmssConfig::default();
        let same = dmss_report(a.view(), a.view(), &sel, &cfg).unwrap();
        assert_abs_diff_eq!(same.mean, 1.0, epsilon = 1e-12);
        // 149 velocity rows: windows start at 0, 15, ..., 105
        assert_eq!(same.windows.len(), 8);

        let b = noise(&mut rng, 150, skel.width());
        let indep = dmss(a.view(), b.view(), &sel, &cfg).unwrap();
        assert!(indep < 0.3, "independent noise scored {indep}");

        let flat = Array2::from_elem((150, skel.width()), 0.5);
        assert_eq!(dmss(a.view(), flat.view(), &sel, &cfg), Err(MetricsError::UndefinedCorrelation));
        let short = Array2::zeros((30, skel.width()));
        assert!(matches!(
            dmss(short.view(), short.view(), &sel, &cfg),
            Err(MetricsError::TooShort { .. })
        ));
    }

    #[test]
    fn window_config_checked() {
        let bad = DmssConfig { window: 10, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = DmssConfig { stride: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    /// Sample set whose fitted mean and unbiased variance are exactly
    /// `(mu, sigma^2)` up to rounding.
    fn exact_population(rng: &mut ChaCha8Rng, n: usize, mu: f64, sigma: f64) -> Array2<f64> {
        let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let m = raw.iter().sum::<f64>() / n as f64;
        let sd = (raw.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        Array2::from_shape_fn((n, 1), |(i, _)| mu + sigma * (raw[i] - m) / sd)
    }

    #[test]
    fn one_dimensional_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = exact_population(&mut rng, 500, 0.0, 1.0);
        let b = exact_population(&mut rng, 700, 1.0, 2.0);
        assert_abs_diff_eq!(fdd_from_features(a.view(), b.view()).unwrap(), 2.0, epsilon = 1e-9);
        assert!(fdd_from_features(a.view(), a.view()).unwrap() < 1e-9);
    }

    #[test]
    fn mean_shift_adds_squared_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let real = noise(&mut rng, 400, 4);
        let gen = noise(&mut rng, 300, 4);
        let c = 0.37;
        let shifted = gen.mapv(|v| v + c);
        let before = GaussianSummary::fit(gen.view()).unwrap();
        let after = GaussianSummary::fit(shifted.view()).unwrap();
        let r = GaussianSummary::fit(real.view()).unwrap();
        let mean_term = |g: &GaussianSummary| (&g.mean - &r.mean).norm_squared();
        // ||(m + c1) - r||^2 - ||m - r||^2 = 2c * sum(m - r) + c^2 * dim
        let cross = 2.0 * c * (&before.mean - &r.mean).sum();
        assert_abs_diff_eq!(mean_term(&after) - mean_term(&before), cross + c * c * 4.0, epsilon = 1e-10);
        let d0 = frechet_distance(&before, &r).unwrap();
        let d1 = frechet_distance(&after, &r).unwrap();
        assert_abs_diff_eq!(d1 - d0, cross + c * c * 4.0, epsilon = 1e-9);
    }

    /// Denman-Beavers iteration, independent of any eigendecomposition.
    fn denman_beavers(a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = a.clone();
        let mut z = DMatrix::identity(a.nrows(), a.ncols());
        for _ in 0..100 {
            let yi = y.clone().try_inverse().unwrap();
            let zi = z.clone().try_inverse().unwrap();
            let ny = (&y + zi) * 0.5;
            let nz = (&z + yi) * 0.5;
            let done = (&ny - &y).norm() < 1e-15 * ny.norm();
            y = ny;
            z = nz;
            if done {
                break;
            }
        }
        y
    }

    #[test]
    fn sqrtm_matches_denman_beavers() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let d = rng.random_range(1..=8);
            let b = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
            let spd = &b * b.transpose() + DMatrix::identity(d, d) * 0.1;
            let got = sqrtm_psd(&spd);
            let want = denman_beavers(&spd);
            assert!((&got - &want).abs().max() < 1e-8);
            assert!((&got * &got - &spd).abs().max() < 1e-8 * spd.norm().max(1.0));
        }
    }

    #[test]
    fn singular_covariance_regularized() {
        // all samples on a line: rank-one covariance in 2-D
        let pts = Array2::from_shape_fn((50, 2), |(i, c)| i as f64 * if c == 0 { 1.0 } else { 2.0 });
        let d = fdd_from_features(pts.view(), pts.view()).unwrap();
        // the null direction carries only the regularization, so error stays at its scale
        assert!(d.is_finite() && d < 10.0 * REGULARIZATION, "{d}");
    }

    #[test]
    fn distance_features_and_mismatch() {
        let skel = SkeletonConfig::reference();
        let proxies = JointProxies::for_skeleton(&skel).unwrap();
        assert_eq!(proxies.len(), 8);
        let mut a = vec![0.0; skel.width()];
        let mut b = vec![0.0; skel.width()];
        a[24] = 0.0;
        b[24] = 3.0;
        b[25] = 4.0;
        let f = distance_features(&a, &b, &proxies).unwrap();
        assert_eq!(f.len(), 64);
        assert_eq!(f[0], 5.0);
        let short = vec![0.0; 10];
        assert_eq!(distance_features(&short, &b, &proxies), Err(MetricsError::SkeletonMismatch));

        let pair = |x: f64| FramePair { first: a.clone(), second: { let mut v = b.clone(); v[24] += x; v } };
        let gen: Vec<_> = (0..10).map(|i| pair(i as f64 * 0.1)).collect();
        let odd = vec![FramePair { first: vec![0.0; 12], second: vec![0.0; 12] }; 3];
        assert_eq!(fdd(&gen, &odd, &proxies), Err(MetricsError::SkeletonMismatch));
        assert!(fdd(&gen, &gen, &proxies).unwrap() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn symmetric_in_arguments(seed in 0u64..5000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = noise(&mut rng, 30, 3);
                let b = noise(&mut rng, 30, 3);
                let ab = dmss_window(a.view(), b.view(), 5).unwrap();
                let ba = dmss_window(b.view(), a.view(), 5).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
            }

            #[test]
            fn affine_invariant(seed in 0u64..5000, scale in 0.01f64..100.0, offset in -50.0f64..50.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = noise(&mut rng, 30, 3);
                let b = noise(&mut rng, 30, 3);
                let mut a2 = a.clone();
                a2.column_mut(1).mapv_inplace(|v| scale * v + offset);
                let r1 = dmss_window(a.view(), b.view(), 5).unwrap();
                let r2 = dmss_window(a2.view(), b.view(), 5).unwrap();
                prop_assert!((r1 - r2).abs() < 1e-9);
            }

            #[test]
            fn matches_brute_force(seed in 0u64..5000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = noise(&mut rng, 30, 4);
                let b = noise(&mut rng, 30, 4);
                let got = dmss_window(a.view(), b.view(), 5).unwrap();
                prop_assert!((got - brute_force(&a, &b, 5)).abs() < 1e-12);
            }

            #[test]
            fn fdd_symmetric_and_zero_on_self(seed in 0u64..2000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = noise(&mut rng, 40, 3);
                let b = noise(&mut rng, 60, 3).mapv(|v| 1.5 * v + 0.2);
                let ab = fdd_from_features(a.view(), b.view()).unwrap();
                let ba = fdd_from_features(b.view(), a.view()).unwrap();
                prop_assert!((ab - ba).abs() < 1e-8 * (1.0 + ab));
                prop_assert!(fdd_from_features(a.view(), a.view()).unwrap() < 1e-8);
            }
        }
    }
}
