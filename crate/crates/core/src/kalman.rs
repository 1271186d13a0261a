//! Exact Kalman filtering for the linear Gaussian model.
//!
//! The particle filters in this toolkit all produce *estimates* of the
//! likelihood; for the LG model the likelihood is available in closed form
//! through the Kalman recursions, which makes this module the ground truth
//! that unbiasedness and sampler-correctness tests compare against.

use crate::error::{Error, Result};
use crate::math::ln_normal_pdf;
use crate::models::{LgParams, ModelSpec};

/// Filtered state after absorbing an observation: p(x_t | y_{1:t}) is
/// N(mean, variance), and `loglik` is log p(y_{1:t}) accumulated so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: f64,
    pub variance: f64,
    pub loglik: f64,
}

/// State before any data: the stationary law N(0, sigma_v^2 / (1 - rho^2)).
pub fn kalman_init(params: &LgParams) -> KalmanState {
    KalmanState {
        mean: 0.0,
        variance: params.sigma_v * params.sigma_v / (1.0 - params.rho * params.rho),
        loglik: 0.0,
    }
}

/// One predict-update cycle in innovation form.
pub fn kalman_step(params: &LgParams, state: &KalmanState, y: f64) -> Result<KalmanState> {
    if !y.is_finite() {
        return Err(Error::Input(format!("non-finite observation {y}")));
    }
    let pred_mean = params.rho * state.mean;
    let pred_var = params.rho * params.rho * state.variance + params.sigma_v * params.sigma_v;
    let innov_var = pred_var + params.sigma_eta * params.sigma_eta;
    let innov = y - pred_mean;
    let gain = pred_var / innov_var;
    Ok(KalmanState {
        mean: pred_mean + gain * innov,
        variance: (1.0 - gain) * pred_var,
        loglik: state.loglik + ln_normal_pdf(y, pred_mean, innov_var),
    })
}

/// Run the filter over a whole series, returning the state after each
/// observation (so `out[t].loglik` is log p(y_{1:t+1})).
pub fn kalman_filter(params: &LgParams, ys: &[f64]) -> Result<Vec<KalmanState>> {
    ModelSpec::lg(*params)?;
    if ys.is_empty() {
        return Err(Error::Input("Kalman filter needs at least one observation".into()));
    }
    let mut state = kalman_init(params);
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        state = kalman_step(params, &state, y)?;
        out.push(state);
    }
    Ok(out)
}

/// Exact log p(y_{1:T}) for the LG model.
pub fn kalman_loglik(params: &LgParams, ys: &[f64]) -> Result<f64> {
    Ok(kalman_filter(params, ys)?.last().unwrap().loglik)
}
