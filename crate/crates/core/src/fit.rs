//! Growth exponents, curve rescaling, exponent populations and Gaussian fits.

use std::borrow::Borrow;
use std::hash::Hash;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::growth::{Assignment, EntityKind, GrowthCurve};
use crate::scalar::Scalar;
use crate::stats::{Histogram, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError<T: std::fmt::Debug> {
    #[error("exponent undefined for tau_max = {tau_max} (need at least 2)")]
    UndefinedExponent { tau_max: u64 },
    #[error("too few samples in fit window: found {found}, need {needed}")]
    TooFewSamples { found: usize, needed: usize },
    #[error("empty curve set")]
    EmptySet,
    #[error("too few non-empty bins for a Gaussian fit: found {found}, need {needed}")]
    TooFewBins { found: usize, needed: usize },
    #[error("Gaussian fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize, fallback: GaussianFit<T> },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Root-mean-square residual.
    pub residual: T,
    pub points: usize,
}

/// `None` for fewer than two points or constant `xs`.
pub fn linear_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Option<LineFit<T>> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let nf = T::of_u64(n as u64);
    let mx = xs[..n].iter().fold(T::zero(), |a, &x| a + x) / nf;
    let my = ys[..n].iter().fold(T::zero(), |a, &y| a + y) / nf;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for i in 0..n {
        let dx = xs[i] - mx;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * (ys[i] - my);
    }
    if sxx == T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = (0..n).fold(T::zero(), |a, i| {
        let r = ys[i] - (intercept + slope * xs[i]);
        a + r * r
    });
    Some(LineFit { slope, intercept, residual: (rss / nf).sqrt(), points: n })
}

/// Residual sum of squares of the least-squares parabola.
fn quadratic_rss<T: Scalar>(xs: &[T], ys: &[T]) -> Option<(T, T)> {
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let nf = T::of_u64(n as u64);
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / nf;
    let mut m = [[T::zero(); 3]; 3];
    let mut v = [T::zero(); 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let d = x - mx;
        let basis = [T::one(), d, d * d];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = m[r][c] + basis[r] * basis[c];
            }
            v[r] = v[r] + basis[r] * y;
        }
    }
    let coef = solve3(m, v)?;
    let rss = xs.iter().zip(ys).fold(T::zero(), |a, (&x, &y)| {
        let d = x - mx;
        let r = y - (coef[0] + coef[1] * d + coef[2] * d * d);
        a + r * r
    });
    Some((rss, coef[2]))
}

#[allow(clippy::needless_range_loop)]
fn solve3<T: Scalar>(mut m: [[T; 3]; 3], mut v: [T; 3]) -> Option<[T; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())?;
        if m[pivot][col].abs() <= T::min_positive_value() {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] = m[row][k] - f * m[col][k];
            }
            v[row] = v[row] - f * v[col];
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let mut s = v[row];
        for k in row + 1..3 {
            s = s - m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    x.iter().all(|c| c.is_finite()).then_some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMethod {
    Endpoint,
    LoglogRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate<T> {
    pub gamma: T,
    pub method: ExponentMethod,
    pub tau_max: u64,
    pub n_final: u64,
    pub fit_window: Option<(u64, u64)>,
    /// RMS residual of the log-log fit (natural log units).
    pub residual: Option<T>,
    /// Quadratic coefficient of a parabola fitted in log-log space.
    pub curvature: Option<T>,
    /// The log-log residuals follow a systematic bend rather than noise.
    pub curved: bool,
}

/// `γ = ln N(τ_max) / ln τ_max`.
pub fn endpoint_exponent<T: Scalar, Id>(curve: &GrowthCurve<Id>) -> Result<ExponentEstimate<T>, FitError<T>> {
    endpoint_from_values(curve.tau_max, curve.n_final)
}

pub fn endpoint_from_values<T: Scalar>(tau_max: u64, n_final: u64) -> Result<ExponentEstimate<T>, FitError<T>> {
    if tau_max < 2 {
        return Err(FitError::UndefinedExponent { tau_max });
    }
    let gamma = if n_final <= 1 { T::zero() } else { T::of_u64(n_final).ln() / T::of_u64(tau_max).ln() };
    Ok(ExponentEstimate {
        gamma,
        method: ExponentMethod::Endpoint,
        tau_max,
        n_final,
        fit_window: None,
        residual: None,
        curvature: None,
        curved: false,
    })
}

pub const MIN_REGRESSION_SAMPLES: usize = 5;

/// Last two decades of τ, `[max(1, τ_max / 100), τ_max]`.
pub fn default_regression_window(tau_max: u64) -> (u64, u64) {
    ((tau_max / 100).max(1), tau_max)
}

/// Least-squares slope of `ln N` against `ln τ` over the samples with
/// `lo <= τ <= hi`.
pub fn loglog_regression_exponent<T: Scalar, Id>(
    curve: &GrowthCurve<Id>,
    window: (u64, u64),
) -> Result<ExponentEstimate<T>, FitError<T>> {
    let (lo, hi) = window;
    let (xs, ys): (Vec<T>, Vec<T>) = curve
        .samples
        .iter()
        .filter(|&&(tau, n)| tau >= lo && tau <= hi && n > 0)
        .map(|&(tau, n)| (T::of_u64(tau).ln(), T::of_u64(n).ln()))
        .unzip();
    if xs.len() < MIN_REGRESSION_SAMPLES {
        return Err(FitError::TooFewSamples { found: xs.len(), needed: MIN_REGRESSION_SAMPLES });
    }
    let line = linear_fit(&xs, &ys).ok_or(FitError::TooFewSamples { found: 1, needed: MIN_REGRESSION_SAMPLES })?;
    let (curvature, curved) = match quadratic_rss(&xs, &ys) {
        Some((rss_q, c)) => {
            let rss_l = line.residual * line.residual * T::of_u64(xs.len() as u64);
            let tiny = T::of_f64(1e-9);
            let curved = line.residual > tiny && rss_q < rss_l * T::of_f64(0.1);
            (Some(c), curved)
        }
        None => (None, false),
    };
    Ok(ExponentEstimate {
        gamma: line.slope,
        method: ExponentMethod::LoglogRegression,
        tau_max: curve.tau_max,
        n_final: curve.n_final,
        fit_window: Some(window),
        residual: Some(line.residual),
        curvature,
        curved,
    })
}

/// Growth curve with both axes divided by their final values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledCurve<T> {
    pub samples: Vec<(T, T)>,
    pub tau_max: u64,
    pub n_final: u64,
}

impl<T: Scalar> RescaledCurve<T> {
    /// Multiplies back by `(τ_max, N(τ_max))`, rounding to integers.
    pub fn restore(&self) -> Vec<(u64, u64)> {
        let t = T::of_u64(self.tau_max);
        let n = T::of_u64(self.n_final);
        self.samples
            .iter()
            .map(|&(x, y)| ((x * t).round().to_u64().unwrap_or(0), (y * n).round().to_u64().unwrap_or(0)))
            .collect()
    }
}

pub fn rescale_curve<T: Scalar, Id>(curve: &GrowthCurve<Id>) -> RescaledCurve<T> {
    let t = T::of_u64(curve.tau_max);
    let n = T::of_u64(curve.n_final);
    let samples = curve.samples.iter().map(|&(tau, k)| (T::of_u64(tau) / t, T::of_u64(k) / n)).collect();
    RescaledCurve { samples, tau_max: curve.tau_max, n_final: curve.n_final }
}

type Owned<R> = <<R as Assignment>::Key as ToOwned>::Owned;

/// Streaming post counter behind [`rank_entities`].
#[derive(Debug, Clone)]
pub struct EntityRanker<K> {
    // (first appearance, posts, last post ordinal)
    state: FxHashMap<K, (usize, u64, u64)>,
    order: Vec<K>,
}

impl<K: Hash + Eq + Clone> Default for EntityRanker<K> {
    fn default() -> Self {
        Self { state: FxHashMap::default(), order: Vec::new() }
    }
}

impl<K: Hash + Eq + Clone> EntityRanker<K> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts `post` once for `key`, however many assignments it has.
    pub fn observe<Q>(&mut self, key: &Q, post: u64)
    where
        K: Borrow<Q>,
        Q: Hash + Eq + ToOwned<Owned = K> + ?Sized,
    {
        match self.state.get_mut(key) {
            Some(s) => {
                if s.2 != post {
                    s.1 += 1;
                    s.2 = post;
                }
            }
            None => {
                let owned = key.to_owned();
                self.state.insert(owned.clone(), (self.order.len(), 1, post));
                self.order.push(owned);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Descending post count; ties keep order of first appearance.
    pub fn finish(self) -> Vec<(K, u64)> {
        let Self { mut state, order } = self;
        let mut ranked: Vec<(usize, u64)> = order.iter().map(|id| (state[id].0, state[id].1)).collect();
        state.clear();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut slots: Vec<Option<K>> = order.into_iter().map(Some).collect();
        ranked.into_iter().map(|(i, c)| (slots[i].take().expect("each slot taken once"), c)).collect()
    }
}

/// Entities of one kind by descending post count; ties keep order of first
/// appearance.
pub fn rank_entities<R, I>(records: I, kind: EntityKind) -> Vec<(Owned<R>, u64)>
where
    R: Assignment,
    I: IntoIterator<Item = R>,
    Owned<R>: Hash + Eq + Clone + Borrow<R::Key>,
{
    let mut ranker = EntityRanker::<Owned<R>>::new();
    for r in records {
        ranker.observe(r.entity(kind), r.post());
    }
    ranker.finish()
}

/// 1-based ranks `start, start + step, ..., <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankSelection {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl RankSelection {
    pub fn top(k: usize) -> Self {
        Self { start: 1, end: k, step: 1 }
    }

    pub fn ranks(&self) -> Vec<usize> {
        if self.start == 0 || self.step == 0 {
            return Vec::new();
        }
        (self.start..=self.end).step_by(self.step).collect()
    }

    /// `(rank, id, posts)` for every selected rank present in `ranked`.
    pub fn apply<'a, Id>(&self, ranked: &'a [(Id, u64)]) -> Vec<(usize, &'a Id, u64)> {
        self.ranks()
            .into_iter()
            .filter(|&r| r <= ranked.len())
            .map(|r| (r, &ranked[r - 1].0, ranked[r - 1].1))
            .collect()
    }
}

/// Default `P(γ)` edges: width 0.02 over `[0, 1.2]`.
pub fn default_gamma_edges<T: Scalar>() -> Vec<T> {
    (0..=60).map(|i| T::of_u64(i) * T::of_f64(0.02)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentDistribution<T> {
    pub histogram: Histogram<T>,
    pub gammas: Vec<T>,
    /// Estimates above 1 are binned but counted here.
    pub above_one: usize,
}

/// Bins endpoint exponents of a population of curves.
pub fn exponent_distribution<T: Scalar, Id>(
    curves: &[GrowthCurve<Id>],
    edges: Vec<T>,
) -> Result<ExponentDistribution<T>, FitError<T>> {
    if curves.is_empty() {
        return Err(FitError::EmptySet);
    }
    let gammas =
        curves.iter().map(|c| endpoint_exponent::<T, Id>(c).map(|e| e.gamma)).collect::<Result<Vec<T>, _>>()?;
    let histogram = Histogram::from_samples(edges, gammas.iter().copied())?;
    let above_one = gammas.iter().filter(|&&g| g > T::one()).count();
    Ok(ExponentDistribution { histogram, gammas, above_one })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit<T> {
    pub mean: T,
    pub sigma: T,
    pub amplitude: T,
    /// `sqrt(Σ r² / Σ y²)` over all bins.
    pub residual: T,
    pub iterations: usize,
    pub high_residual: bool,
}

impl<T: Scalar> GaussianFit<T> {
    pub fn eval(&self, x: T) -> T {
        let z = (x - self.mean) / self.sigma;
        self.amplitude * (-(z * z) / T::of_f64(2.0)).exp()
    }

    /// `amplitude * sigma * sqrt(2π)`.
    pub fn integral(&self) -> T {
        self.amplitude * self.sigma * T::of_f64((2.0 * std::f64::consts::PI).sqrt())
    }
}

pub const MIN_GAUSSIAN_BINS: usize = 4;
/// Relative residual above which a fit is flagged as not Gaussian.
pub const GAUSSIAN_RESIDUAL_LIMIT: f64 = 0.35;
const MAX_LM_ITERATIONS: usize = 500;

/// Levenberg-Marquardt fit of `A exp(-(x-μ)²/2σ²)` to bin densities,
/// started from the sample moments of the histogram.
pub fn gaussian_fit<T: Scalar>(hist: &Histogram<T>) -> Result<GaussianFit<T>, FitError<T>> {
    let found = hist.non_empty_bins();
    if found < MIN_GAUSSIAN_BINS {
        return Err(FitError::TooFewBins { found, needed: MIN_GAUSSIAN_BINS });
    }
    let xs: Vec<T> = (0..hist.bins()).map(|i| hist.center(i)).collect();
    let ys = hist.densities();
    let two = T::of_f64(2.0);

    let mu0 = (0..hist.bins()).fold(T::zero(), |a, i| a + hist.probability(i) * xs[i]);
    let var0 = (0..hist.bins()).fold(T::zero(), |a, i| a + hist.probability(i) * (xs[i] - mu0) * (xs[i] - mu0));
    let mut sigma0 = var0.sqrt();
    if !(sigma0 > T::zero()) {
        sigma0 = hist.width(0);
    }
    let amp0 = ys.iter().fold(T::zero(), |a, &y| a.max(y));

    let cost = |p: &[T; 3]| -> T {
        xs.iter().zip(&ys).fold(T::zero(), |acc, (&x, &y)| {
            let z = (x - p[1]) / p[2];
            let r = p[0] * (-(z * z) / two).exp() - y;
            acc + r * r
        })
    };
    let norm = ys.iter().fold(T::zero(), |a, &y| a + y * y);
    let summarize = |p: [T; 3], iterations: usize| {
        let residual = (cost(&p) / norm).sqrt();
        GaussianFit {
            mean: p[1],
            sigma: p[2].abs(),
            amplitude: p[0],
            residual,
            iterations,
            high_residual: residual > T::of_f64(GAUSSIAN_RESIDUAL_LIMIT),
        }
    };

    let mut p = [amp0, mu0, sigma0];
    let mut c = cost(&p);
    let mut lambda = T::of_f64(1e-3);
    let tol = T::epsilon().sqrt() * T::of_f64(1e-2);
    for iter in 1..=MAX_LM_ITERATIONS {
        let mut jtj = [[T::zero(); 3]; 3];
        let mut jtr = [T::zero(); 3];
        for (&x, &y) in xs.iter().zip(&ys) {
            let d = x - p[1];
            let s2 = p[2] * p[2];
            let e = (-(d * d) / (two * s2)).exp();
            let r = p[0] * e - y;
            let j = [e, p[0] * e * d / s2, p[0] * e * d * d / (s2 * p[2])];
            for a in 0..3 {
                for b in 0..3 {
                    jtj[a][b] = jtj[a][b] + j[a] * j[b];
                }
                jtr[a] = jtr[a] + j[a] * r;
            }
        }
        loop {
            let mut m = jtj;
            for (k, row) in m.iter_mut().enumerate() {
                row[k] = row[k] + lambda * jtj[k][k].max(T::min_positive_value());
            }
            let step = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]);
            let Some(step) = step else {
                lambda = lambda * T::of_f64(10.0);
                if lambda > T::of_f64(1e12) {
                    return Err(FitError::NoConvergence {
                        iterations: iter,
                        fallback: summarize([amp0, mu0, sigma0], iter),
                    });
                }
                continue;
            };
            let cand = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            let cc = cost(&cand);
            if cc.is_finite() && cc <= c {
                let small_step = (0..3).all(|k| step[k].abs() <= tol * (p[k].abs() + tol));
                let small_gain = c - cc <= tol * tol * c.max(T::min_positive_value());
                p = cand;
                c = cc;
                lambda = (lambda / T::of_f64(10.0)).max(T::of_f64(1e-12));
                if small_step || small_gain || c == T::zero() {
                    return Ok(summarize(p, iter));
                }
                break;
            }
            lambda = lambda * T::of_f64(10.0);
            if lambda > T::of_f64(1e12) {
                // no downhill step left: at a minimum up to precision
                return Ok(summarize(p, iter));
            }
        }
    }
    Err(FitError::NoConvergence {
        iterations: MAX_LM_ITERATIONS,
        fallback: summarize([amp0, mu0, sigma0], MAX_LM_ITERATIONS),
    })
}
