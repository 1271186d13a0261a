//! Shared fixtures for the integration suites: the six benchmark parameter
//! designs (each model family at a low and a high signal-to-noise ratio),
//! the matching estimation priors, and an independent trigamma oracle.

#![allow(dead_code)]

use pmmh_filters::models::{LgParams, ModelSpec, ScdParams, SvParams};
use pmmh_filters::pmmh::{CoordLaw, Prior};

pub fn lg_low_snr() -> ModelSpec {
    ModelSpec::lg(LgParams {
        sigma_eta: 2.24,
        rho: 0.40,
        sigma_v: 0.92,
    })
    .unwrap()
}

pub fn lg_high_snr() -> ModelSpec {
    ModelSpec::lg(LgParams {
        sigma_eta: 0.45,
        rho: 0.40,
        sigma_v: 0.92,
    })
    .unwrap()
}

pub fn scd_low_snr() -> ModelSpec {
    ModelSpec::scd(ScdParams {
        alpha: 0.67,
        beta: 1.50,
        phi: -1.1,
        rho: 0.74,
        sigma_v: 0.65,
    })
    .unwrap()
}

pub fn scd_high_snr() -> ModelSpec {
    ModelSpec::scd(ScdParams {
        alpha: 6.67,
        beta: 0.15,
        phi: -1.1,
        rho: 0.74,
        sigma_v: 0.65,
    })
    .unwrap()
}

pub fn sv_low_snr() -> ModelSpec {
    ModelSpec::sv(SvParams {
        phi: -6.61,
        rho: 0.2,
        sigma_v: 0.70,
    })
    .unwrap()
}

pub fn sv_high_snr() -> ModelSpec {
    ModelSpec::sv(SvParams {
        phi: -4.24,
        rho: 0.6,
        sigma_v: 1.40,
    })
    .unwrap()
}

fn unit_normals(means: &[f64]) -> Prior {
    Prior::Independent {
        coords: means
            .iter()
            .map(|&mean| CoordLaw::Normal { mean, var: 1.0 })
            .collect(),
    }
}

/// Benchmark prior for the linear-Gaussian family, on the sampling scale
/// (log sigma_eta^2, rho, log sigma_v^2); unit prior variances.
pub fn lg_prior() -> Prior {
    unit_normals(&[0.7f64.ln(), 0.5, 0.475f64.ln()])
}

/// Benchmark prior for the duration family, on the sampling scale
/// (log alpha, log beta, phi, rho, log sigma_v^2).
pub fn scd_prior() -> Prior {
    unit_normals(&[-0.8, 0.5, 0.5f64.ln(), 2.0f64.ln(), 0.0])
}

/// Benchmark prior for the volatility family, on the sampling scale
/// (phi, rho, log sigma_v^2).
pub fn sv_prior() -> Prior {
    unit_normals(&[-4.6, 0.8, 0.5f64.ln()])
}

/// Trigamma function psi'(x) for x > 0: recurrence up to x >= 10, then the
/// standard asymptotic series (error below 1e-12 there). Serves as an
/// analytic oracle for the quadrature-based variance of a log-gamma error
/// term.
pub fn trigamma(mut x: f64) -> f64 {
    assert!(x > 0.0, "trigamma needs a positive argument");
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    // psi'(x) ~ 1/x + 1/(2x^2) + sum_k B_{2k} / x^{2k+1}
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv2 * inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)));
    acc + series
}

/// Mean and standard error of the mean.
pub fn mc_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One pass/fail line per acceptance criterion, in a fixed format the
/// whole suite shares.
pub fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[{}] {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}
