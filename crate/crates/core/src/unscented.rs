//! Deterministic sigma-point approximations to the measurement-error law and
//! the Gaussian proposal algebra built on top of them.
//!
//! A `SigmaPointSet` is a small set of points and weights whose weighted
//! moments reproduce the first M-1 moments of the error distribution. Pushing
//! the points through the inverted measurement equation gives a Gaussian
//! summary of what a single observation says about the state
//! (`unscented_measurement_moments`); combining that with the Gaussian
//! transition prior (`conjugate_combine`) yields adapted particle proposals.

use crate::error::{Error, Result};
use crate::math::solve_linear_system;
use crate::models::{ErrorDist, ModelSpec};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Moment-matched quadrature rule for a measurement-error distribution.
/// `mean` and `variance` are those of the *target distribution* (which the
/// weighted point set reproduces by construction).
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

/// First two moments of a Gaussian summary (a proposal, a prior, or an
/// unscented measurement approximation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub mean: f64,
    pub variance: f64,
}

type CacheKey = (u8, u64, u64, usize);

fn cache() -> &'static Mutex<HashMap<CacheKey, SigmaPointSet>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, SigmaPointSet>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cache_key(dist: &ErrorDist, m: usize) -> CacheKey {
    match *dist {
        ErrorDist::StdNormal => (0, 0, 0, m),
        ErrorDist::HalfStdNormal => (1, 0, 0, m),
        ErrorDist::Gamma { shape, rate } => (2, shape.to_bits(), rate.to_bits(), m),
    }
}

/// Build (or fetch from the per-process cache) an M-point sigma set matching
/// the first M-1 moments of `dist`.
///
/// Points are placed at quantile levels spread evenly from 0.02 to 0.98 —
/// wide enough that skewed error laws (whose standardized fourth moment can
/// exceed 10) are matchable with moderate weights — except the classic
/// symmetric {-sqrt(3), 0, sqrt(3)} rule for the standard normal with M = 3.
/// The weights solve the moment-matching linear system, formulated in
/// standardized coordinates so the Vandermonde matrix stays well conditioned.
pub fn build_sigma_points(dist: ErrorDist, m: usize) -> Result<SigmaPointSet> {
    if m < 2 {
        return Err(Error::Input(format!("need at least 2 sigma points, got {m}")));
    }
    let key = cache_key(&dist, m);
    if let Some(hit) = cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let set = construct_sigma_points(dist, m)?;
    cache().lock().unwrap().insert(key, set.clone());
    Ok(set)
}

fn construct_sigma_points(dist: ErrorDist, m: usize) -> Result<SigmaPointSet> {
    let mean = dist.mean();
    let variance = dist.variance();
    let sd = variance.sqrt();
    let points: Vec<f64> = if matches!(dist, ErrorDist::StdNormal) && m == 3 {
        vec![-(3f64.sqrt()), 0.0, 3f64.sqrt()]
    } else {
        let p_min = 0.02;
        (0..m)
            .map(|i| {
                let p = p_min + (1.0 - 2.0 * p_min) * i as f64 / (m - 1) as f64;
                dist.quantile(p)
            })
            .collect()
    };
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Degenerate(
            "sigma point placement produced non-finite quantiles".into(),
        ));
    }
    for w in points.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Degenerate(format!(
                "coincident sigma points {} and {}",
                w[0], w[1]
            )));
        }
    }
    let weights = solve_moment_weights(&points, &dist, mean, sd).ok_or_else(|| {
        Error::Degenerate("singular sigma-point moment system".into())
    })?;
    Ok(SigmaPointSet {
        points,
        weights,
        mean,
        variance,
    })
}

/// Weights solving sum_k Q_k u_k^j = E[u^j] for j = 0..M-1, where u is the
/// standardized error (eta - mean)/sd. Matching standardized moments is
/// equivalent to matching raw moments (the monomial bases are related by an
/// invertible triangular map) but keeps the system entries O(1).
fn solve_moment_weights(points: &[f64], dist: &ErrorDist, mean: f64, sd: f64) -> Option<Vec<f64>> {
    let m = points.len();
    let u: Vec<f64> = points.iter().map(|p| (p - mean) / sd).collect();
    let central = dist.central_moments(m.max(2) - 1);
    let mut rhs = vec![1.0];
    for j in 1..m {
        rhs.push(central[j - 1] / sd.powi(j as i32));
    }
    let mut rows = Vec::with_capacity(m);
    let mut pow = vec![1.0; m];
    for _ in 0..m {
        rows.push(pow.clone());
        for (p, &ui) in pow.iter_mut().zip(&u) {
            *p *= ui;
        }
    }
    solve_linear_system(&rows, &rhs)
}

/// Gaussian summary of p(y | x) as a function of x, computed from the sigma
/// set: each point eta_k is mapped to the state x_k that reproduces y, and
/// the moments are ratio-form averages with weights Q_k * jac_k, where jac_k
/// is the inverse Jacobian of the measurement map at that point.
///
/// Moment-matched weights can be negative; when the resulting variance (or
/// the normalizer) degenerates the moments are recomputed with
/// absolute-value weights, which keeps the proposal usable at the cost of
/// exact moment matching. That fallback is logged; if even it degenerates
/// (impossible for distinct points, but checked) the call errors.
pub fn unscented_measurement_moments(
    model: &ModelSpec,
    y: f64,
    sigma: &SigmaPointSet,
) -> Result<GaussianMoments> {
    let n = sigma.points.len();
    let mut xs = Vec::with_capacity(n);
    let mut num = Vec::with_capacity(n);
    for (&eta, &q) in sigma.points.iter().zip(&sigma.weights) {
        let (x, jac_inv) = model.invert_measurement(y, eta)?;
        xs.push(x);
        num.push(q * jac_inv);
    }
    if let Some(m) = ratio_moments(&xs, &num) {
        return Ok(m);
    }
    log::warn!(
        "unscented measurement moments degenerated at y = {y}; retrying with absolute weights"
    );
    let abs: Vec<f64> = num.iter().map(|v| v.abs()).collect();
    ratio_moments(&xs, &abs).ok_or_else(|| {
        Error::Degenerate(format!(
            "unscented measurement moments are degenerate at y = {y}"
        ))
    })
}

fn ratio_moments(xs: &[f64], num: &[f64]) -> Option<GaussianMoments> {
    let total: f64 = num.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let mean = xs.iter().zip(num).map(|(x, w)| x * w).sum::<f64>() / total;
    let variance = xs
        .iter()
        .zip(num)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / total;
    if variance > 0.0 && variance.is_finite() {
        Some(GaussianMoments { mean, variance })
    } else {
        None
    }
}

/// Product of two Gaussian densities in x, renormalized: the posterior of a
/// normal prior combined with a normal likelihood whose mean is the
/// observation summary. Precision-weighted in the usual way.
pub fn conjugate_combine(
    prior: GaussianMoments,
    likelihood: GaussianMoments,
) -> Result<GaussianMoments> {
    if !(prior.variance > 0.0) || !(likelihood.variance > 0.0) {
        return Err(Error::Domain(format!(
            "conjugate_combine needs positive variances, got {} and {}",
            prior.variance, likelihood.variance
        )));
    }
    let denom = prior.variance + likelihood.variance;
    Ok(GaussianMoments {
        mean: (prior.variance * likelihood.mean + likelihood.variance * prior.mean) / denom,
        variance: likelihood.variance * prior.variance / denom,
    })
}
