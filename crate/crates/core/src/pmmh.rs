//! Particle-marginal Metropolis-Hastings with an adaptive random-walk
//! proposal, plus the surrounding machinery: the prior library, the
//! particle-count calibration rule, and chain diagnostics (inefficiency
//! factors and average likelihood computing time).
//!
//! The sampler is pseudo-marginal: each candidate's likelihood is a particle
//! estimate from a fresh random stream, the current state's estimate is
//! retained (never recomputed) on rejection, and an unbiased estimator
//! leaves the exact posterior invariant regardless of the particle count.
//! Degenerate likelihood estimates (-inf) simply reject the candidate.
//!
//! Chains are parameterized on an unconstrained-ish sampling scale per model
//! family: variances enter as logs, persistence and shape parameters as
//! themselves with hard rejection outside their valid region. See
//! [`theta_names`] for the coordinate layout.

use crate::error::{Error, Result};
use crate::filters::{run_filter_with_rng, FilterId, FilterOptions};
use crate::kalman::kalman_loglik;
use crate::math::{cholesky, forward_solve, ln_normal_pdf, lower_tri_mul, mean_var, sample_var, LN_2PI};
use crate::models::{LgParams, ModelKind, ModelParams, ModelSpec, ScdParams, SvParams};
use crate::rng::derived_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::io::Write;
use std::time::Instant;

/// Per-replication variance of the log-likelihood estimator that the
/// particle-count calibration targets.
pub const LOGLIK_VARIANCE_TARGET: f64 = 0.85;

/// Marginal law of one sampling-scale coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum CoordLaw {
    Normal { mean: f64, var: f64 },
    Beta { a: f64, b: f64 },
}

impl CoordLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            CoordLaw::Normal { mean, .. } => mean,
            CoordLaw::Beta { a, b } => a / (a + b),
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            CoordLaw::Normal { mean, var } => ln_normal_pdf(x, mean, var),
            CoordLaw::Beta { a, b } => {
                if x <= 0.0 || x >= 1.0 || !x.is_finite() {
                    f64::NEG_INFINITY
                } else {
                    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CoordLaw::Normal { mean, var } => mean.is_finite() && var.is_finite() && var > 0.0,
            CoordLaw::Beta { a, b } => a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad prior coordinate {self:?}")))
        }
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Prior over the sampling-scale parameter vector: either independent
/// coordinates (normal or beta marginals) or a jointly normal law with a
/// full covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Independent { coords: Vec<CoordLaw> },
    MvNormal { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Independent { coords } => coords.len(),
            Prior::MvNormal { mean, .. } => mean.len(),
        }
    }

    /// Prior mean vector; chains initialize here.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Prior::Independent { coords } => coords.iter().map(|c| c.mean()).collect(),
            Prior::MvNormal { mean, .. } => mean.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Independent { coords } => {
                if coords.is_empty() {
                    return Err(Error::InvalidParameter("empty prior".into()));
                }
                coords.iter().try_for_each(CoordLaw::validate)
            }
            Prior::MvNormal { mean, cov } => {
                let d = mean.len();
                if d == 0 {
                    return Err(Error::InvalidParameter("empty prior".into()));
                }
                if cov.len() != d || cov.iter().any(|row| row.len() != d) {
                    return Err(Error::InvalidParameter(format!(
                        "prior covariance must be {d}x{d}"
                    )));
                }
                cholesky(cov).map(|_| ()).ok_or_else(|| {
                    Error::InvalidParameter("prior covariance is not positive definite".into())
                })
            }
        }
    }
}

/// Log prior density at `theta`; -inf outside the support.
pub fn log_prior(prior: &Prior, theta: &[f64]) -> Result<f64> {
    if theta.len() != prior.dim() {
        return Err(Error::Input(format!(
            "parameter vector has {} coordinates, prior expects {}",
            theta.len(),
            prior.dim()
        )));
    }
    match prior {
        Prior::Independent { coords } => Ok(coords
            .iter()
            .zip(theta)
            .map(|(c, &x)| c.log_density(x))
            .sum()),
        Prior::MvNormal { mean, cov } => {
            let d = mean.len();
            let l = cholesky(cov).ok_or_else(|| {
                Error::InvalidParameter("prior covariance is not positive definite".into())
            })?;
            let centered: Vec<f64> = theta.iter().zip(mean).map(|(t, m)| t - m).collect();
            let z = forward_solve(&l, &centered);
            let ln_det_half: f64 = l.iter().enumerate().map(|(i, row)| row[i].ln()).sum();
            let quad: f64 = z.iter().map(|v| v * v).sum();
            Ok(-0.5 * d as f64 * LN_2PI - ln_det_half - 0.5 * quad)
        }
    }
}

/// One point of the Metropolis-Hastings state: log-likelihood (estimate)
/// and log prior density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhPoint {
    pub loglik: f64,
    pub logprior: f64,
}

/// Log acceptance ratio for a symmetric random-walk proposal:
/// min(0, delta loglik + delta logprior). Any non-finite candidate component
/// (out-of-support prior, degenerate likelihood estimate, NaN) forces
/// certain rejection.
pub fn mh_accept_logratio(cand: &MhPoint, curr: &MhPoint) -> f64 {
    if !cand.loglik.is_finite() || !cand.logprior.is_finite() {
        return f64::NEG_INFINITY;
    }
    (cand.loglik + cand.logprior - curr.loglik - curr.logprior).min(0.0)
}

/// Adaptive random-walk proposal: during a warm-up phase the perturbation
/// covariance is a fixed diagonal; afterwards it is the running empirical
/// covariance of the chain, ridge-regularized and multiplied by a global
/// scale that is steered toward a target acceptance rate by a diminishing
/// (Robbins-Monro) update, so adaptation vanishes and the chain stays valid.
#[derive(Debug, Clone)]
pub struct AdaptiveProposal {
    dim: usize,
    warmup: usize,
    init_sd: f64,
    target: f64,
    count: usize,
    log_s: f64,
    mean: Vec<f64>,
    m2: Vec<Vec<f64>>,
    /// Test hook: replaces the covariance scale when set (0 gives a
    /// candidate identical to the current point).
    pub scale_override: Option<f64>,
}

impl AdaptiveProposal {
    pub fn new(dim: usize) -> Self {
        Self::with_settings(dim, 500, 0.1, 0.234)
    }

    pub fn with_settings(dim: usize, warmup: usize, init_sd: f64, target: f64) -> Self {
        AdaptiveProposal {
            dim,
            warmup,
            init_sd,
            target,
            count: 0,
            log_s: (2.38 * 2.38 / dim as f64).ln(),
            mean: vec![0.0; dim],
            m2: vec![vec![0.0; dim]; dim],
            scale_override: None,
        }
    }

    pub fn target_acceptance(&self) -> f64 {
        self.target
    }

    /// Empirical covariance of the observed draws (None before two draws).
    pub fn covariance(&self) -> Option<Vec<Vec<f64>>> {
        if self.count < 2 {
            return None;
        }
        let denom = (self.count - 1) as f64;
        Some(
            self.m2
                .iter()
                .map(|row| row.iter().map(|v| v / denom).collect())
                .collect(),
        )
    }

    /// Draw a candidate. Consumes exactly `dim` standard normals from `rng`
    /// regardless of phase, so chains with different adaptation states stay
    /// stream-aligned.
    pub fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        assert_eq!(current.len(), self.dim, "dimension mismatch");
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        if self.scale_override == Some(0.0) {
            return current.to_vec();
        }
        let s = self.scale_override.unwrap_or_else(|| self.log_s.exp());
        if self.count < self.warmup {
            let sd = self.init_sd * if self.scale_override.is_some() { s.sqrt() } else { 1.0 };
            return current.iter().zip(&z).map(|(c, zi)| c + sd * zi).collect();
        }
        if let Some(sigma) = self.covariance() {
            let trace: f64 = (0..self.dim).map(|i| sigma[i][i]).sum();
            let eps = 1e-6 * trace / self.dim as f64;
            let scaled: Vec<Vec<f64>> = (0..self.dim)
                .map(|i| {
                    (0..self.dim)
                        .map(|j| s * (sigma[i][j] + if i == j { eps } else { 0.0 }))
                        .collect()
                })
                .collect();
            if let Some(l) = cholesky(&scaled) {
                let pert = lower_tri_mul(&l, &z);
                return current.iter().zip(&pert).map(|(c, p)| c + p).collect();
            }
        }
        // Degenerate history (e.g. every draw identical): fall back to the
        // scaled warm-up diagonal rather than freezing the chain.
        let sd = s.sqrt() * self.init_sd;
        current.iter().zip(&z).map(|(c, zi)| c + sd * zi).collect()
    }

    /// Record the post-decision chain state and adapt the scale.
    pub fn observe(&mut self, draw: &[f64], accepted: bool) {
        assert_eq!(draw.len(), self.dim, "dimension mismatch");
        self.count += 1;
        let k = self.count as f64;
        let delta_old: Vec<f64> = draw.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta_old) {
            *m += d / k;
        }
        let delta_new: Vec<f64> = draw.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m2[i][j] +=
                    0.5 * (delta_old[i] * delta_new[j] + delta_old[j] * delta_new[i]);
            }
        }
        if self.count > self.warmup {
            let gamma = ((self.count - self.warmup) as f64).powf(-0.6);
            let indicator = if accepted { 1.0 } else { 0.0 };
            self.log_s = (self.log_s + gamma * (indicator - self.target)).clamp(-20.0, 5.0);
        }
    }
}

/// A finished sampler run. Rejected iterations repeat the previous draw and
/// carry its stored log-likelihood forward unchanged (the pseudo-marginal
/// rule). `timings` holds the likelihood evaluation wall-clock seconds per
/// iteration, zero when the candidate was rejected on prior support alone
/// and no evaluation happened.
#[derive(Debug, Clone)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    pub logliks: Vec<f64>,
    pub accepts: Vec<bool>,
    pub burn_in: usize,
    pub timings: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws after burn-in.
    pub fn post_burn(&self) -> &[Vec<f64>] {
        &self.draws[self.burn_in.min(self.draws.len())..]
    }

    /// One coordinate of the post-burn-in draws as a series.
    pub fn param_series(&self, k: usize) -> Vec<f64> {
        self.post_burn().iter().map(|d| d[k]).collect()
    }

    /// Fraction of accepted moves after burn-in.
    pub fn acceptance_rate(&self) -> f64 {
        let post = &self.accepts[self.burn_in.min(self.accepts.len())..];
        if post.is_empty() {
            return 0.0;
        }
        post.iter().filter(|&&a| a).count() as f64 / post.len() as f64
    }

    /// Write the chain as CSV: one row per iteration with the named
    /// parameter columns, the stored log-likelihood, and the accept flag.
    pub fn to_csv<W: Write>(&self, names: &[&str], mut w: W) -> Result<()> {
        let dim = self.draws.first().map_or(0, Vec::len);
        if names.len() != dim {
            return Err(Error::Input(format!(
                "{} column names for {dim}-dimensional draws",
                names.len()
            )));
        }
        write!(w, "iter")?;
        for name in names {
            write!(w, ",{name}")?;
        }
        writeln!(w, ",loglik,accept")?;
        for (i, draw) in self.draws.iter().enumerate() {
            write!(w, "{i}")?;
            for v in draw {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", self.logliks[i], u8::from(self.accepts[i]))?;
        }
        Ok(())
    }
}

/// Summary statistics of a chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub inefficiency: Vec<f64>,
    pub alct: f64,
    pub acceptance_rate: f64,
    pub n_particles: usize,
}

/// Compute per-parameter inefficiency factors (post burn-in), the average
/// likelihood computing time, and the acceptance rate.
pub fn diagnostics(chain: &Chain, n_particles: usize) -> Result<Diagnostics> {
    let dim = chain
        .draws
        .first()
        .map_or(0, Vec::len);
    let inefficiency = (0..dim)
        .map(|k| inefficiency_factor(&chain.param_series(k)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Diagnostics {
        inefficiency,
        alct: alct(chain)?,
        acceptance_rate: chain.acceptance_rate(),
        n_particles,
    })
}

/// Generic pseudo-marginal MH loop. `eval` maps (theta, stream index) to a
/// log-likelihood estimate and the seconds spent computing it; each
/// evaluation gets a distinct stream index so likelihood randomness never
/// overlaps the chain's own stream.
pub fn run_pmmh_core<F>(
    prior: &Prior,
    mh_iters: usize,
    burn_in: usize,
    seed: u64,
    mut eval: F,
) -> Result<Chain>
where
    F: FnMut(&[f64], u64) -> (f64, f64),
{
    prior.validate()?;
    if mh_iters == 0 {
        return Err(Error::Input("need at least one iteration".into()));
    }
    if burn_in >= mh_iters {
        return Err(Error::Input(format!(
            "burn-in {burn_in} must be smaller than the iteration count {mh_iters}"
        )));
    }
    let dim = prior.dim();
    let mut chain_rng = derived_rng(seed, 0);
    let mut proposal = AdaptiveProposal::new(dim);
    let mut current = prior.mean();
    let mut cur_lp = log_prior(prior, &current)?;
    if !cur_lp.is_finite() {
        return Err(Error::InvalidParameter(
            "prior mean lies outside the prior support".into(),
        ));
    }
    let mut next_stream: u64 = 1;
    let mut cur_ll = f64::NEG_INFINITY;
    for _ in 0..5 {
        let (ll, _) = eval(&current, next_stream);
        next_stream += 1;
        if ll.is_finite() {
            cur_ll = ll;
            break;
        }
    }
    if !cur_ll.is_finite() {
        return Err(Error::Degenerate(
            "likelihood estimate at the initial point is degenerate".into(),
        ));
    }
    let mut draws = Vec::with_capacity(mh_iters);
    let mut logliks = Vec::with_capacity(mh_iters);
    let mut accepts = Vec::with_capacity(mh_iters);
    let mut timings = Vec::with_capacity(mh_iters);
    for _ in 0..mh_iters {
        let cand = proposal.propose(&current, &mut chain_rng);
        let cand_lp = log_prior(prior, &cand)?;
        let (cand_ll, t_eval) = if cand_lp.is_finite() {
            let out = eval(&cand, next_stream);
            next_stream += 1;
            out
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        let logratio = mh_accept_logratio(
            &MhPoint {
                loglik: cand_ll,
                logprior: cand_lp,
            },
            &MhPoint {
                loglik: cur_ll,
                logprior: cur_lp,
            },
        );
        let u: f64 = chain_rng.gen();
        let accepted = u.ln() < logratio;
        if accepted {
            current = cand;
            cur_ll = cand_ll;
            cur_lp = cand_lp;
        }
        draws.push(current.clone());
        logliks.push(cur_ll);
        accepts.push(accepted);
        timings.push(t_eval);
        proposal.observe(&current, accepted);
    }
    Ok(Chain {
        draws,
        logliks,
        accepts,
        burn_in,
        timings,
    })
}

/// Particle-marginal MH: the likelihood estimate for each candidate comes
/// from one particle filter pass with `n` particles on its own random
/// stream. Parameter vectors out of the model's valid region (or with a
/// degenerate filter pass) are rejected automatically.
#[allow(clippy::too_many_arguments)]
pub fn run_pmmh(
    filter: FilterId,
    kind: ModelKind,
    prior: &Prior,
    ys: &[f64],
    n: usize,
    mh_iters: usize,
    burn_in: usize,
    options: &FilterOptions,
    seed: u64,
) -> Result<Chain> {
    if n < 2 {
        return Err(Error::Input(format!("need at least 2 particles, got {n}")));
    }
    if ys.is_empty() {
        return Err(Error::Input("need at least one observation".into()));
    }
    if filter == FilterId::Fapf && kind != ModelKind::Lg {
        return Err(Error::Unsupported(
            "full adaptation needs the linear Gaussian model".into(),
        ));
    }
    if prior.dim() != theta_dim(kind) {
        return Err(Error::Input(format!(
            "prior dimension {} does not match the {kind} parameter vector ({})",
            prior.dim(),
            theta_dim(kind)
        )));
    }
    let opts = *options;
    run_pmmh_core(prior, mh_iters, burn_in, seed, |theta, stream| {
        match model_from_theta(kind, theta) {
            Ok(model) => match run_filter_with_rng(
                filter,
                &model,
                ys,
                n,
                &opts,
                &mut derived_rng(seed, stream),
            ) {
                Ok(run) => (run.loglik, run.elapsed),
                Err(_) => (f64::NEG_INFINITY, 0.0),
            },
            Err(_) => (f64::NEG_INFINITY, 0.0),
        }
    })
}

/// MH with the exact linear Gaussian likelihood in place of a particle
/// estimate. Shares all proposal machinery with [`run_pmmh`], so the two are
/// directly comparable on the same data and prior.
pub fn run_mh_exact_lg(
    prior: &Prior,
    ys: &[f64],
    mh_iters: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Chain> {
    if prior.dim() != theta_dim(ModelKind::Lg) {
        return Err(Error::Input(format!(
            "prior dimension {} does not match the lg parameter vector (3)",
            prior.dim()
        )));
    }
    run_pmmh_core(prior, mh_iters, burn_in, seed, |theta, _stream| {
        match model_from_theta(ModelKind::Lg, theta) {
            Ok(model) => {
                let p = match model.params() {
                    ModelParams::Lg(p) => *p,
                    _ => unreachable!(),
                };
                let start = Instant::now();
                match kalman_loglik(&p, ys) {
                    Ok(ll) => (ll, start.elapsed().as_secs_f64()),
                    Err(_) => (f64::NEG_INFINITY, 0.0),
                }
            }
            Err(_) => (f64::NEG_INFINITY, 0.0),
        }
    })
}

/// Sampling-scale dimension per model family.
pub fn theta_dim(kind: ModelKind) -> usize {
    theta_names(kind).len()
}

/// Coordinate names of the sampling-scale parameter vector.
pub fn theta_names(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Lg => &["log_sigma_eta2", "rho", "log_sigma_v2"],
        ModelKind::Scd => &["log_alpha", "log_beta", "phi", "rho", "log_sigma_v2"],
        ModelKind::Sv => &["phi", "rho", "log_sigma_v2"],
    }
}

/// Build and validate a model from its sampling-scale vector.
pub fn model_from_theta(kind: ModelKind, theta: &[f64]) -> Result<ModelSpec> {
    if theta.len() != theta_dim(kind) {
        return Err(Error::Input(format!(
            "{kind} expects {} parameters, got {}",
            theta_dim(kind),
            theta.len()
        )));
    }
    match kind {
        ModelKind::Lg => ModelSpec::lg(LgParams {
            sigma_eta: (0.5 * theta[0]).exp(),
            rho: theta[1],
            sigma_v: (0.5 * theta[2]).exp(),
        }),
        ModelKind::Scd => ModelSpec::scd(ScdParams {
            alpha: theta[0].exp(),
            beta: theta[1].exp(),
            phi: theta[2],
            rho: theta[3],
            sigma_v: (0.5 * theta[4]).exp(),
        }),
        ModelKind::Sv => ModelSpec::sv(SvParams {
            phi: theta[0],
            rho: theta[1],
            sigma_v: (0.5 * theta[2]).exp(),
        }),
    }
}

/// Inverse of [`model_from_theta`].
pub fn theta_from_model(model: &ModelSpec) -> Vec<f64> {
    match model.params() {
        ModelParams::Lg(p) => vec![
            (p.sigma_eta * p.sigma_eta).ln(),
            p.rho,
            (p.sigma_v * p.sigma_v).ln(),
        ],
        ModelParams::Scd(p) => vec![
            p.alpha.ln(),
            p.beta.ln(),
            p.phi,
            p.rho,
            (p.sigma_v * p.sigma_v).ln(),
        ],
        ModelParams::Sv(p) => vec![p.phi, p.rho, (p.sigma_v * p.sigma_v).ln()],
    }
}

/// Particle count implied by a measured log-likelihood variance at `n_s`
/// particles: variance scales as 1/N, so hitting the target takes
/// round(n_s * sigma2 / target), floored at 2.
pub fn nopt_from_variance(n_s: usize, sigma2: f64) -> usize {
    ((n_s as f64 * sigma2 / LOGLIK_VARIANCE_TARGET).round() as usize).max(2)
}

/// Outcome of a particle-count calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub n_opt: usize,
    /// Sample variance of the finite replicated log-likelihood estimates.
    pub sigma2_hat: f64,
    /// Replications dropped for returning a degenerate (-inf) estimate.
    pub n_excluded: usize,
    pub n_s: usize,
    pub r0: usize,
}

/// Calibration arithmetic on already-computed replicated log-likelihoods.
/// Degenerate (-inf) replications are excluded and counted; fewer than two
/// usable values is a failure.
pub fn calibrate_from_logliks(n_s: usize, logliks: &[f64]) -> Result<CalibrationResult> {
    if logliks.len() < 2 {
        return Err(Error::Input("need at least 2 replications".into()));
    }
    let finite: Vec<f64> = logliks.iter().copied().filter(|ll| ll.is_finite()).collect();
    let n_excluded = logliks.len() - finite.len();
    if finite.len() < 2 {
        return Err(Error::Degenerate(format!(
            "calibration failed: {n_excluded} of {} replications degenerate",
            logliks.len()
        )));
    }
    if n_excluded > 0 {
        log::warn!("calibration excluded {n_excluded} degenerate replications");
    }
    let sigma2_hat = sample_var(&finite);
    Ok(CalibrationResult {
        n_opt: nopt_from_variance(n_s, sigma2_hat),
        sigma2_hat,
        n_excluded,
        n_s,
        r0: logliks.len(),
    })
}

/// Replicate the filter `r0` times at `theta0` with `n_s` particles
/// (independent streams), then size the production particle count from the
/// measured log-likelihood variance.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_nopt(
    filter: FilterId,
    kind: ModelKind,
    ys: &[f64],
    theta0: &[f64],
    n_s: usize,
    r0: usize,
    options: &FilterOptions,
    seed: u64,
) -> Result<CalibrationResult> {
    if r0 < 2 {
        return Err(Error::Input(format!("need at least 2 replications, got {r0}")));
    }
    let model = model_from_theta(kind, theta0)?;
    let logliks = (0..r0)
        .map(|r| {
            run_filter_with_rng(
                filter,
                &model,
                ys,
                n_s,
                options,
                &mut derived_rng(seed, r as u64),
            )
            .map(|run| run.loglik)
        })
        .collect::<Result<Vec<f64>>>()?;
    calibrate_from_logliks(n_s, &logliks)
}

/// Which truncated-autocorrelation estimator the inefficiency factor uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IfEstimator {
    /// Sum paired autocorrelations while the pair sums stay positive.
    #[default]
    InitialPositive,
    /// Bartlett-tapered sum with a deterministic n-dependent lag window.
    Bandwidth,
}

/// Inefficiency factor 1 + 2 * sum of autocorrelations: the factor by which
/// correlation inflates the variance of the series mean relative to an
/// independent sample of the same size.
pub fn inefficiency_factor(series: &[f64]) -> Result<f64> {
    inefficiency_factor_with(series, IfEstimator::InitialPositive)
}

pub fn inefficiency_factor_with(series: &[f64], estimator: IfEstimator) -> Result<f64> {
    let n = series.len();
    if n < 100 {
        return Err(Error::Input(format!(
            "need at least 100 draws for an inefficiency factor, got {n}"
        )));
    }
    // A constant series has no autocorrelation to speak of; roundoff in the
    // mean can still leave its computed variance a hair above zero, so test
    // for constancy directly.
    if series.iter().all(|&x| x == series[0]) {
        log::warn!("constant series: inefficiency factor defaulting to 1");
        return Ok(1.0);
    }
    let (mean, var) = mean_var(series);
    if !(var > 0.0) || !var.is_finite() {
        log::warn!("zero-variance series: inefficiency factor defaulting to 1");
        return Ok(1.0);
    }
    let rho = |k: usize| -> f64 {
        let mut acc = 0.0;
        for t in 0..n - k {
            acc += (series[t] - mean) * (series[t + k] - mean);
        }
        acc / (n as f64 * var)
    };
    let ifac = match estimator {
        IfEstimator::InitialPositive => {
            let mut total = 0.0;
            let mut m = 0usize;
            loop {
                let k1 = 2 * m;
                if k1 >= n {
                    break;
                }
                let k2 = k1 + 1;
                let pair = rho(k1) + if k2 < n { rho(k2) } else { 0.0 };
                if pair <= 0.0 {
                    break;
                }
                total += pair;
                m += 1;
            }
            2.0 * total - 1.0
        }
        IfEstimator::Bandwidth => {
            let lag = ((4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize)
                .clamp(1, n - 1);
            let mut total = 0.0;
            for k in 1..=lag {
                total += (1.0 - k as f64 / (lag + 1) as f64) * rho(k);
            }
            1.0 + 2.0 * total
        }
    };
    Ok(ifac.max(f64::EPSILON))
}

/// Average likelihood computing time: the mean of the per-iteration
/// likelihood evaluation times stored in the chain.
pub fn alct(chain: &Chain) -> Result<f64> {
    if chain.timings.is_empty() {
        return Err(Error::Input("empty chain".into()));
    }
    Ok(chain.timings.iter().sum::<f64>() / chain.timings.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;

    fn beta_prior() -> CoordLaw {
        CoordLaw::Beta { a: 20.0, b: 1.5 }
    }

    #[test]
    fn standard_normal_prior_at_its_mean() {
        let prior = Prior::Independent {
            coords: vec![CoordLaw::Normal { mean: 0.0, var: 1.0 }; 3],
        };
        let lp = log_prior(&prior, &[0.0, 0.0, 0.0]).unwrap();
        assert!((lp + 1.5 * LN_2PI).abs() < 1e-14);
        let mv = Prior::MvNormal {
            mean: vec![0.0; 3],
            cov: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        };
        let lp_mv = log_prior(&mv, &[0.0, 0.0, 0.0]).unwrap();
        assert!((lp_mv - lp).abs() < 1e-14);
    }

    #[test]
    fn beta_prior_support_and_density() {
        let prior = Prior::Independent {
            coords: vec![beta_prior()],
        };
        assert_eq!(log_prior(&prior, &[1.2]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_prior(&prior, &[-0.1]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_prior(&prior, &[0.0]).unwrap(), f64::NEG_INFINITY);
        // Half-integer beta function in closed form: B(20, 1.5) =
        // Gamma(20) Gamma(1.5) / Gamma(21.5) = 19! / prod_{j=1..20} (j + 1/2).
        let mut ln_b = 0.0;
        for k in 1..20 {
            ln_b += (k as f64).ln();
        }
        for j in 1..=20 {
            ln_b -= (j as f64 + 0.5).ln();
        }
        let x = 0.9f64;
        let direct = 19.0 * x.ln() + 0.5 * (1.0 - x).ln() - ln_b;
        let lp = log_prior(&prior, &[x]).unwrap();
        assert!((lp - direct).abs() < 1e-10, "{lp} vs {direct}");
        // Dimension mismatch is an error, not -inf.
        assert!(log_prior(&prior, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn correlated_normal_prior_matches_direct_bivariate_form() {
        let (s11, s22, s12) = (1.0, 2.0, 0.6);
        let prior = Prior::MvNormal {
            mean: vec![0.3, -0.7],
            cov: vec![vec![s11, s12], vec![s12, s22]],
        };
        let theta = [1.1, 0.4];
        let (d1, d2) = (theta[0] - 0.3, theta[1] + 0.7);
        let det = s11 * s22 - s12 * s12;
        let quad = (s22 * d1 * d1 - 2.0 * s12 * d1 * d2 + s11 * d2 * d2) / det;
        let direct = -LN_2PI - 0.5 * det.ln() - 0.5 * quad;
        let lp = log_prior(&prior, &theta).unwrap();
        assert!((lp - direct).abs() < 1e-12, "{lp} vs {direct}");
        // Diagonal covariance coincides with independent coordinates.
        let diag = Prior::MvNormal {
            mean: vec![0.3, -0.7],
            cov: vec![vec![s11, 0.0], vec![0.0, s22]],
        };
        let indep = Prior::Independent {
            coords: vec![
                CoordLaw::Normal { mean: 0.3, var: s11 },
                CoordLaw::Normal { mean: -0.7, var: s22 },
            ],
        };
        let a = log_prior(&diag, &theta).unwrap();
        let b = log_prior(&indep, &theta).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn accept_logratio_rules() {
        let point = |ll: f64, lp: f64| MhPoint {
            loglik: ll,
            logprior: lp,
        };
        assert_eq!(
            mh_accept_logratio(&point(-10.0, -2.0), &point(-10.0, -2.0)),
            0.0
        );
        assert_eq!(
            mh_accept_logratio(&point(-11.0, -2.0), &point(-10.0, -2.0)),
            -1.0
        );
        assert_eq!(
            mh_accept_logratio(&point(f64::NEG_INFINITY, -2.0), &point(-10.0, -2.0)),
            f64::NEG_INFINITY
        );
        assert_eq!(
            mh_accept_logratio(&point(f64::NAN, -2.0), &point(-10.0, -2.0)),
            f64::NEG_INFINITY
        );
        // Adding a common constant to both log-likelihoods cannot move the
        // ratio (exact with dyadic values).
        let base = mh_accept_logratio(&point(-3.25, -1.5), &point(-4.5, -0.75));
        for shift in [1024.0, -512.0, 0.125] {
            let shifted =
                mh_accept_logratio(&point(-3.25 + shift, -1.5), &point(-4.5 + shift, -0.75));
            assert_eq!(base, shifted);
        }
    }

    #[test]
    fn warmup_proposal_covariance_is_fixed_diagonal() {
        let proposal = AdaptiveProposal::new(2);
        let current = [0.0, 0.0];
        let mut rng = derived_rng(401, 0);
        let reps = 4000;
        let mut cands = Vec::with_capacity(reps);
        for _ in 0..reps {
            cands.push(proposal.propose(&current, &mut rng));
        }
        let mut cov = [[0.0f64; 2]; 2];
        let mean = [
            cands.iter().map(|c| c[0]).sum::<f64>() / reps as f64,
            cands.iter().map(|c| c[1]).sum::<f64>() / reps as f64,
        ];
        for c in &cands {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += (c[i] - mean[i]) * (c[j] - mean[j]);
                }
            }
        }
        for row in &mut cov {
            for v in row.iter_mut() {
                *v /= (reps - 1) as f64;
            }
        }
        assert!((cov[0][0] - 0.01).abs() < 0.001, "{}", cov[0][0]);
        assert!((cov[1][1] - 0.01).abs() < 0.001, "{}", cov[1][1]);
        assert!(cov[0][1].abs() < 6e-4, "{}", cov[0][1]);
    }

    #[test]
    fn zero_scale_hook_returns_current_point() {
        let mut proposal = AdaptiveProposal::new(3);
        proposal.scale_override = Some(0.0);
        let current = [1.5, -0.25, 7.0];
        let mut rng = derived_rng(402, 0);
        assert_eq!(proposal.propose(&current, &mut rng), current.to_vec());
        // Also after warm-up with a populated history.
        let mut hist_rng = derived_rng(402, 1);
        for _ in 0..600 {
            let draw: Vec<f64> = (0..3).map(|_| hist_rng.gen::<f64>()).collect();
            proposal.observe(&draw, true);
        }
        assert_eq!(proposal.propose(&current, &mut rng), current.to_vec());
    }

    #[test]
    fn nopt_arithmetic_and_monotonicity() {
        assert_eq!(nopt_from_variance(1000, 1.7), 2000);
        assert_eq!(nopt_from_variance(1000, 0.85), 1000);
        assert_eq!(nopt_from_variance(1000, 0.425), 500);
        // Doubling the measured variance doubles the particle count.
        assert_eq!(
            2 * nopt_from_variance(1000, 0.425),
            nopt_from_variance(1000, 0.85)
        );
        // Floor keeps the count usable even for tiny variances.
        assert_eq!(nopt_from_variance(10, 1e-9), 2);
    }

    #[test]
    fn calibration_matches_replayed_replications() {
        let theta0 = [
            (2.24f64 * 2.24).ln(),
            0.4,
            (0.92f64 * 0.92).ln(),
        ];
        let model = model_from_theta(ModelKind::Lg, &theta0).unwrap();
        let ys = model.simulate(30, 31).unwrap().y;
        let opts = FilterOptions::default();
        let cal = calibrate_nopt(
            FilterId::Bpf,
            ModelKind::Lg,
            &ys,
            &theta0,
            200,
            50,
            &opts,
            99,
        )
        .unwrap();
        let lls: Vec<f64> = (0..50)
            .map(|r| {
                run_filter_with_rng(
                    FilterId::Bpf,
                    &model,
                    &ys,
                    200,
                    &opts,
                    &mut derived_rng(99, r),
                )
                .unwrap()
                .loglik
            })
            .collect();
        let sigma2 = sample_var(&lls);
        assert!((cal.sigma2_hat - sigma2).abs() < 1e-12);
        assert_eq!(cal.n_opt, nopt_from_variance(200, sigma2));
        assert_eq!(cal.n_excluded, 0);
        assert_eq!((cal.n_s, cal.r0), (200, 50));
        assert!(calibrate_nopt(
            FilterId::Bpf,
            ModelKind::Lg,
            &ys,
            &theta0,
            200,
            1,
            &opts,
            99
        )
        .is_err());
    }

    #[test]
    fn calibration_excludes_degenerate_replications() {
        let lls = [-101.0, f64::NEG_INFINITY, -99.0, -100.0, f64::NEG_INFINITY];
        let cal = calibrate_from_logliks(500, &lls).unwrap();
        assert_eq!(cal.n_excluded, 2);
        let kept = [-101.0, -99.0, -100.0];
        assert!((cal.sigma2_hat - sample_var(&kept)).abs() < 1e-12);
        assert!(calibrate_from_logliks(500, &[f64::NEG_INFINITY; 4]).is_err());
        assert!(calibrate_from_logliks(500, &[-1.0, f64::NEG_INFINITY]).is_err());
        assert!(calibrate_from_logliks(500, &[-1.0]).is_err());
    }

    #[test]
    fn prior_only_chain_recovers_prior_moments() {
        // Likelihood forced flat: the chain must sample the prior itself.
        let prior = Prior::Independent {
            coords: vec![
                CoordLaw::Normal { mean: 1.5, var: 0.49 },
                beta_prior(),
                CoordLaw::Normal { mean: -0.5, var: 0.09 },
            ],
        };
        let chain = run_pmmh_core(&prior, 20_000, 2000, 2718, |_, _| (0.0, 0.0)).unwrap();
        let (a, b) = (20.0, 1.5);
        let beta_mean = a / (a + b);
        let beta_var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
        let targets = [(1.5, 0.49), (beta_mean, beta_var), (-0.5, 0.09)];
        for (k, (mu, var)) in targets.iter().enumerate() {
            let series = chain.param_series(k);
            let ifac = inefficiency_factor(&series).unwrap();
            let (m, _) = mean_var(&series);
            let se = (var * ifac / series.len() as f64).sqrt();
            assert!(
                (m - mu).abs() < 3.0 * se,
                "coordinate {k}: mean {m} vs {mu} +- {se} (IF {ifac})"
            );
        }
        let rate = chain.acceptance_rate();
        assert!(rate > 0.05 && rate < 0.95, "acceptance rate {rate}");
    }

    #[test]
    fn rejected_iterations_carry_over_bitwise() {
        let prior = Prior::Independent {
            coords: vec![
                CoordLaw::Normal { mean: 0.0, var: 1.0 },
                CoordLaw::Normal { mean: 2.0, var: 4.0 },
            ],
        };
        // A mildly informative fake likelihood so both accepts and rejects
        // occur.
        let chain = run_pmmh_core(&prior, 800, 0, 515, |theta, _| {
            (-0.5 * theta.iter().map(|t| t * t).sum::<f64>(), 0.0)
        })
        .unwrap();
        let n_accept = chain.accepts.iter().filter(|&&a| a).count();
        assert!(n_accept > 0 && n_accept < chain.len());
        for i in 1..chain.len() {
            if !chain.accepts[i] {
                assert_eq!(chain.draws[i], chain.draws[i - 1]);
                assert!(chain.logliks[i] == chain.logliks[i - 1]);
            }
        }
        assert_eq!(chain.len(), 800);
        assert_eq!(chain.timings.len(), 800);
    }

    #[test]
    fn pmmh_agrees_with_exact_likelihood_sampler_on_lg() {
        let truth = LgParams {
            sigma_eta: 2.24,
            rho: 0.4,
            sigma_v: 0.92,
        };
        let model = ModelSpec::lg(truth).unwrap();
        let ys = model.simulate(50, 7001).unwrap().y;
        let prior = Prior::Independent {
            coords: vec![
                CoordLaw::Normal { mean: (2.24f64 * 2.24).ln(), var: 1.0 },
                CoordLaw::Normal { mean: 0.4, var: 0.25 },
                CoordLaw::Normal { mean: (0.92f64 * 0.92).ln(), var: 1.0 },
            ],
        };
        let oracle = run_mh_exact_lg(&prior, &ys, 6000, 1000, 881).unwrap();
        let rate = oracle.acceptance_rate();
        assert!((0.15..=0.40).contains(&rate), "acceptance rate {rate}");
        let chain = run_pmmh(
            FilterId::Bpf,
            ModelKind::Lg,
            &prior,
            &ys,
            600,
            3000,
            500,
            &FilterOptions::default(),
            882,
        )
        .unwrap();
        for k in 0..3 {
            let s_oracle = oracle.param_series(k);
            let s_chain = chain.param_series(k);
            let (m_o, v_o) = mean_var(&s_oracle);
            let (m_c, v_c) = mean_var(&s_chain);
            let if_o = inefficiency_factor(&s_oracle).unwrap();
            let if_c = inefficiency_factor(&s_chain).unwrap();
            let se = (v_o * if_o / s_oracle.len() as f64 + v_c * if_c / s_chain.len() as f64)
                .sqrt();
            assert!(
                (m_o - m_c).abs() < 3.0 * se,
                "coordinate {k}: exact {m_o} vs particle {m_c} +- {se}"
            );
        }
    }

    #[test]
    fn run_pmmh_validates_inputs() {
        let prior = Prior::Independent {
            coords: vec![CoordLaw::Normal { mean: 0.0, var: 1.0 }; 3],
        };
        let ys = [0.1, -0.2, 0.3];
        let opts = FilterOptions::default();
        assert!(
            run_pmmh(FilterId::Bpf, ModelKind::Lg, &prior, &ys, 1, 10, 0, &opts, 1).is_err()
        );
        assert!(
            run_pmmh(FilterId::Bpf, ModelKind::Lg, &prior, &[], 10, 10, 0, &opts, 1).is_err()
        );
        assert!(
            run_pmmh(FilterId::Fapf, ModelKind::Sv, &prior, &ys, 10, 10, 0, &opts, 1).is_err()
        );
        assert!(
            run_pmmh(FilterId::Bpf, ModelKind::Scd, &prior, &ys, 10, 10, 0, &opts, 1).is_err()
        );
        assert!(
            run_pmmh(FilterId::Bpf, ModelKind::Lg, &prior, &ys, 10, 10, 10, &opts, 1).is_err()
        );
        assert!(
            run_pmmh(FilterId::Bpf, ModelKind::Lg, &prior, &ys, 10, 0, 0, &opts, 1).is_err()
        );
    }

    #[test]
    fn theta_round_trips_and_rejects_bad_vectors() {
        let cases: Vec<ModelSpec> = vec![
            ModelSpec::lg(LgParams {
                sigma_eta: 0.45,
                rho: 0.4,
                sigma_v: 0.92,
            })
            .unwrap(),
            ModelSpec::scd(ScdParams {
                alpha: 6.67,
                beta: 0.15,
                phi: -1.1,
                rho: 0.74,
                sigma_v: 0.65,
            })
            .unwrap(),
            ModelSpec::sv(SvParams {
                phi: -6.61,
                rho: 0.2,
                sigma_v: 0.7,
            })
            .unwrap(),
        ];
        for model in cases {
            let theta = theta_from_model(&model);
            assert_eq!(theta.len(), theta_dim(model.kind()));
            assert_eq!(theta.len(), theta_names(model.kind()).len());
            let rebuilt = model_from_theta(model.kind(), &theta).unwrap();
            let back = theta_from_model(&rebuilt);
            for (a, b) in theta.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // Wrong dimension and out-of-region persistence both fail.
        assert!(model_from_theta(ModelKind::Lg, &[0.0, 0.0]).is_err());
        assert!(model_from_theta(ModelKind::Lg, &[0.0, 1.05, 0.0]).is_err());
        assert!(model_from_theta(ModelKind::Sv, &[0.0, -1.0, 0.0]).is_err());
        assert!(model_from_theta(ModelKind::Scd, &[0.0, 0.0, 0.0, 1.2, 0.0]).is_err());
    }

    fn ar1_series(a: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = derived_rng(seed, 0);
        let innov_sd = (1.0 - a * a).sqrt();
        let mut x: f64 = rng.sample(StandardNormal);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(x);
            let z: f64 = rng.sample(StandardNormal);
            x = a * x + innov_sd * z;
        }
        out
    }

    #[test]
    fn inefficiency_factor_reference_series() {
        let iid = ar1_series(0.0, 100_000, 601);
        let if_iid = inefficiency_factor(&iid).unwrap();
        assert!((0.9..=1.1).contains(&if_iid), "iid IF {if_iid}");

        // AR(1) with coefficient a has integrated autocorrelation time
        // (1 + a) / (1 - a).
        let ar = ar1_series(0.9, 100_000, 602);
        let if_ar = inefficiency_factor(&ar).unwrap();
        assert!(
            (if_ar - 19.0).abs() < 0.15 * 19.0,
            "AR(0.9) IF {if_ar} vs 19"
        );

        // Repeating every element doubles the autocorrelation time.
        let base = ar1_series(0.5, 50_000, 603);
        let if_base = inefficiency_factor(&base).unwrap();
        let doubled: Vec<f64> = base.iter().flat_map(|&x| [x, x]).collect();
        let if_doubled = inefficiency_factor(&doubled).unwrap();
        let ratio = if_doubled / if_base;
        assert!(
            (ratio - 2.0).abs() < 0.2 * 2.0,
            "duplication ratio {ratio} (IF {if_base} -> {if_doubled})"
        );
    }

    #[test]
    fn inefficiency_factor_edge_cases() {
        assert!(inefficiency_factor(&vec![0.5; 50]).is_err());
        assert_eq!(inefficiency_factor(&vec![3.7; 200]).unwrap(), 1.0);
        // The bandwidth variant agrees roughly on a moderately correlated
        // series (its fixed window truncates heavier tails).
        let ar = ar1_series(0.5, 100_000, 604);
        let bw = inefficiency_factor_with(&ar, IfEstimator::Bandwidth).unwrap();
        assert!((2.0..=4.0).contains(&bw), "bandwidth IF {bw}");
    }

    #[test]
    fn alct_is_mean_of_timings() {
        let chain = Chain {
            draws: vec![vec![0.0]; 3],
            logliks: vec![-1.0; 3],
            accepts: vec![true; 3],
            burn_in: 0,
            timings: vec![0.001, 0.002, 0.003],
        };
        assert!((alct(&chain).unwrap() - 0.002).abs() < 1e-15);
        let empty = Chain {
            draws: vec![],
            logliks: vec![],
            accepts: vec![],
            burn_in: 0,
            timings: vec![],
        };
        assert!(alct(&empty).is_err());
    }

    #[test]
    fn alct_scales_with_work() {
        let truth = LgParams {
            sigma_eta: 2.24,
            rho: 0.4,
            sigma_v: 0.92,
        };
        let model = ModelSpec::lg(truth).unwrap();
        let ys = model.simulate(100, 811).unwrap().y;
        let prior = Prior::Independent {
            coords: vec![
                CoordLaw::Normal { mean: (2.24f64 * 2.24).ln(), var: 0.04 },
                CoordLaw::Normal { mean: 0.4, var: 0.01 },
                CoordLaw::Normal { mean: (0.92f64 * 0.92).ln(), var: 0.04 },
            ],
        };
        let opts = FilterOptions::default();
        let small = run_pmmh(
            FilterId::Bpf, ModelKind::Lg, &prior, &ys, 100, 30, 0, &opts, 10,
        )
        .unwrap();
        let large = run_pmmh(
            FilterId::Bpf, ModelKind::Lg, &prior, &ys, 2000, 30, 0, &opts, 10,
        )
        .unwrap();
        assert!(
            alct(&large).unwrap() > alct(&small).unwrap(),
            "{} vs {}",
            alct(&large).unwrap(),
            alct(&small).unwrap()
        );
        // More matching rotations cost more per likelihood evaluation.
        let l1 = run_pmmh(
            FilterId::Dpf, ModelKind::Lg, &prior, &ys, 300, 20, 0,
            &FilterOptions { match_l: 1, ..opts }, 11,
        )
        .unwrap();
        let l30 = run_pmmh(
            FilterId::Dpf, ModelKind::Lg, &prior, &ys, 300, 20, 0,
            &FilterOptions { match_l: 30, ..opts }, 11,
        )
        .unwrap();
        assert!(alct(&l30).unwrap() > alct(&l1).unwrap());
    }

    #[test]
    fn chain_csv_layout() {
        let chain = Chain {
            draws: vec![vec![1.0, 2.5], vec![1.0, 2.5], vec![0.75, -3.0]],
            logliks: vec![-10.0, -10.0, -9.5],
            accepts: vec![true, false, true],
            burn_in: 1,
            timings: vec![0.0; 3],
        };
        let mut buf = Vec::new();
        chain.to_csv(&["a", "b"], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "iter,a,b,loglik,accept");
        assert_eq!(lines[1], "0,1,2.5,-10,1");
        assert_eq!(lines[2], "1,1,2.5,-10,0");
        assert_eq!(lines[3], "2,0.75,-3,-9.5,1");
        let mut sink = Vec::new();
        assert!(chain.to_csv(&["a"], &mut sink).is_err());
        // Diagnostics on a longer chain produce finite fields.
        let prior = Prior::Independent {
            coords: vec![CoordLaw::Normal { mean: 0.0, var: 1.0 }],
        };
        let long = run_pmmh_core(&prior, 400, 100, 5, |t, _| (-t[0] * t[0], 0.001)).unwrap();
        let diag = diagnostics(&long, 64).unwrap();
        assert_eq!(diag.inefficiency.len(), 1);
        assert!(diag.inefficiency[0] > 0.0);
        assert!((diag.alct - 0.001).abs() < 1e-12);
        assert!(diag.acceptance_rate > 0.0 && diag.acceptance_rate < 1.0);
        assert_eq!(diag.n_particles, 64);
    }
}
