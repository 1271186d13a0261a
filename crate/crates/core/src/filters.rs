//! Five particle filters sharing one runner: the bootstrap filter (BPF), the
//! data-driven filter (DPF) with cyclic multiple matching, its unscented
//! variant (UDPF), the unscented particle filter (UPF), and the fully
//! adapted auxiliary filter (FAPF, linear Gaussian only).
//!
//! Each filter is a step kernel mapping (cloud, next observation) to a new
//! cloud plus the log of that period's likelihood increment — the sum over
//! particles of the unnormalized weights. The runner resamples multinomially
//! after every step (the FAPF resamples internally through its auxiliary
//! indices and is left alone), so kernels always see incoming weights of
//! 1/N, but every kernel is written against general normalized weights.
//!
//! All weight arithmetic is in log space: T-length products of per-period
//! increments underflow long before T reaches the series lengths used here.

use crate::error::{Error, Result};
use crate::math::{ln_normal_pdf, log_sum_exp};
use crate::models::{ErrorDist, ModelKind, ModelParams, ModelSpec};
use crate::unscented::{
    build_sigma_points, conjugate_combine, unscented_measurement_moments, GaussianMoments,
    SigmaPointSet,
};
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Which filter to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterId {
    Bpf,
    Dpf,
    Udpf,
    Upf,
    Fapf,
}

impl FilterId {
    pub const ALL: [FilterId; 5] = [
        FilterId::Bpf,
        FilterId::Dpf,
        FilterId::Udpf,
        FilterId::Upf,
        FilterId::Fapf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FilterId::Bpf => "bpf",
            FilterId::Dpf => "dpf",
            FilterId::Udpf => "udpf",
            FilterId::Upf => "upf",
            FilterId::Fapf => "fapf",
        }
    }
}

impl std::fmt::Display for FilterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FilterId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpf" => Ok(FilterId::Bpf),
            "dpf" => Ok(FilterId::Dpf),
            "udpf" => Ok(FilterId::Udpf),
            "upf" => Ok(FilterId::Upf),
            "fapf" => Ok(FilterId::Fapf),
            other => Err(Error::Config(format!("unknown filter '{other}'"))),
        }
    }
}

/// How to resample. Multinomial is the default everywhere; the unbiasedness
/// guarantees are stated for it. Systematic is lower-variance but kept
/// opt-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResampleScheme {
    #[default]
    Multinomial,
    Systematic,
}

/// Per-run filter options. `match_l` only affects the DPF; `sigma_points`
/// only the UDPF (None picks 3 points for Gaussian errors, 5 otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub match_l: usize,
    pub sigma_points: Option<usize>,
    pub resample: ResampleScheme,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            match_l: 1,
            sigma_points: None,
            resample: ResampleScheme::Multinomial,
        }
    }
}

/// Sigma-point count the UDPF uses when none is configured.
pub fn default_sigma_point_count(model: &ModelSpec) -> usize {
    match model.error_dist() {
        ErrorDist::StdNormal => 3,
        _ => 5,
    }
}

/// Weighted particle approximation of the filtered state at time `t`
/// (number of observations absorbed).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub particles: Vec<f64>,
    pub weights: Vec<f64>,
    pub t: usize,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Weighted mean of the particles.
    pub fn mean(&self) -> f64 {
        self.particles
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }
}

/// Everything a full filter pass produces. `loglik` is the sum of the logged
/// per-period increments; if any step degenerates (all weights zero) the run
/// is cut short with `loglik = -inf` and the flag set, which the samplers
/// treat as an automatic rejection.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub loglik: f64,
    pub increments: Vec<f64>,
    pub cloud: ParticleCloud,
    /// Wall-clock seconds; the only field exempt from determinism.
    pub elapsed: f64,
    pub degenerate: bool,
}

/// The DPF's cyclic matching plan: L distinct rotations of (0, .., N-1).
/// Rotation l matches new particle j with previous particle (j + l) mod N,
/// so l = 0 is the identity matching and L = N pairs every previous index
/// with every j exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchPlan {
    n: usize,
    l: usize,
}

impl MatchPlan {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Previous-particle index matched with new particle `j` under rotation
    /// `l` (both zero-based).
    #[inline]
    pub fn prev_index(&self, l: usize, j: usize) -> usize {
        (j + l) % self.n
    }

    /// Materialize the rotations as index rows (row l, column j).
    pub fn permutations(&self) -> Vec<Vec<usize>> {
        (0..self.l)
            .map(|l| (0..self.n).map(|j| self.prev_index(l, j)).collect())
            .collect()
    }
}

/// The L distinct cyclic rotations of (0, .., n-1) used by DPF matching.
pub fn cyclic_permutations(n: usize, l: usize) -> Result<MatchPlan> {
    if n == 0 {
        return Err(Error::Input("need at least one particle".into()));
    }
    if l == 0 || l > n {
        return Err(Error::Domain(format!(
            "match count must lie in [1, {n}], got {l}"
        )));
    }
    Ok(MatchPlan { n, l })
}

/// Fresh cloud from the stationary state law, uniform weights, t = 0.
pub fn init_cloud<R: Rng + ?Sized>(model: &ModelSpec, n: usize, rng: &mut R) -> ParticleCloud {
    let sd = model.stationary_var().sqrt();
    let mean = model.stationary_mean();
    let particles = (0..n)
        .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ParticleCloud {
        particles,
        weights: vec![1.0 / n as f64; n],
        t: 0,
    }
}

/// Normalize log weights into a cloud + increment pair. A fully degenerate
/// step (all log weights -inf) yields uniform weights and a -inf increment,
/// which the runner turns into a flagged dead run.
fn finish_step(particles: Vec<f64>, log_w: &[f64], t_next: usize) -> (ParticleCloud, f64) {
    let n = particles.len();
    let increment = log_sum_exp(log_w);
    let weights = if increment.is_finite() {
        log_w.iter().map(|lw| (lw - increment).exp()).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    (
        ParticleCloud {
            particles,
            weights,
            t: t_next,
        },
        increment,
    )
}

/// Bootstrap step: propose from the transition, weight by the measurement
/// density. Consumes exactly one standard normal draw per particle, in
/// particle order.
pub fn bpf_step<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    model: &ModelSpec,
    y_next: f64,
    rng: &mut R,
) -> Result<(ParticleCloud, f64)> {
    model.check_observation(y_next)?;
    let sv = model.sigma_v();
    let mut particles = Vec::with_capacity(cloud.len());
    let mut log_w = Vec::with_capacity(cloud.len());
    for (&x_prev, &pi) in cloud.particles.iter().zip(&cloud.weights) {
        let z: f64 = rng.sample(StandardNormal);
        let x = model.transition_mean(x_prev) + sv * z;
        particles.push(x);
        log_w.push(pi.ln() + model.ln_meas(x, y_next));
    }
    Ok(finish_step(particles, &log_w, cloud.t + 1))
}

/// Data-driven step: draw measurement errors, invert the measurement
/// equation to get particles, and weight by Jacobian times the matched
/// average of transition densities (the L = 1 case being plain
/// previous-particle matching).
///
/// An individual error draw outside the invertible region — possible only as
/// a floating-point corner case, e.g. a gamma variate underflowing to zero —
/// zeroes that particle's weight rather than failing the step.
pub fn dpf_step<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    model: &ModelSpec,
    y_next: f64,
    plan: &MatchPlan,
    rng: &mut R,
) -> Result<(ParticleCloud, f64)> {
    let n = cloud.len();
    if plan.n() != n {
        return Err(Error::Input(format!(
            "match plan built for {} particles, cloud has {n}",
            plan.n()
        )));
    }
    model.check_invertible_observation(y_next)?;
    let ln_l = (plan.l() as f64).ln();
    let ln_pi: Vec<f64> = cloud.weights.iter().map(|w| w.ln()).collect();
    let mut particles = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    let mut matched = vec![0.0; plan.l()];
    for j in 0..n {
        let eta = model.sample_error(rng);
        match model.invert_measurement(y_next, eta) {
            Ok((x, jac_inv)) => {
                for (l, slot) in matched.iter_mut().enumerate() {
                    let k = plan.prev_index(l, j);
                    *slot = ln_pi[k] + model.log_transition_density(cloud.particles[k], x);
                }
                particles.push(x);
                log_w.push(jac_inv.ln() - ln_l + log_sum_exp(&matched));
            }
            Err(_) => {
                particles.push(model.stationary_mean());
                log_w.push(f64::NEG_INFINITY);
            }
        }
    }
    Ok(finish_step(particles, &log_w, cloud.t + 1))
}

/// Unscented data-driven step: the shared measurement summary comes from the
/// sigma set, each particle's transition prior is exact (the state equation
/// is linear Gaussian for every model here), and the proposal is their
/// conjugate combination.
pub fn udpf_step<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    model: &ModelSpec,
    y_next: f64,
    sigma: &SigmaPointSet,
    rng: &mut R,
) -> Result<(ParticleCloud, f64)> {
    model.check_invertible_observation(y_next)?;
    let meas = unscented_measurement_moments(model, y_next, sigma)?;
    udpf_step_with_moments(cloud, model, y_next, meas, rng)
}

/// UDPF step with the measurement summary supplied directly. Split out so
/// limiting behavior (e.g. an uninformative summary with huge variance) can
/// be exercised without going through a sigma set. Consumes one standard
/// normal per particle, in particle order.
pub fn udpf_step_with_moments<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    model: &ModelSpec,
    y_next: f64,
    meas: GaussianMoments,
    rng: &mut R,
) -> Result<(ParticleCloud, f64)> {
    model.check_observation(y_next)?;
    let sv = model.sigma_v();
    let var_v = sv * sv;
    let mut particles = Vec::with_capacity(cloud.len());
    let mut log_w = Vec::with_capacity(cloud.len());
    for (&x_prev, &pi) in cloud.particles.iter().zip(&cloud.weights) {
        let prior = GaussianMoments {
            mean: model.transition_mean(x_prev),
            variance: var_v,
        };
        let prop = conjugate_combine(prior, meas)?;
        let z: f64 = rng.sample(StandardNormal);
        let x = prop.mean + prop.variance.sqrt() * z;
        let lw = pi.ln() + model.ln_meas(x, y_next) + model.log_transition_density(x_prev, x)
            - ln_normal_pdf(x, prop.mean, prop.variance);
        particles.push(x);
        log_w.push(lw);
    }
    Ok(finish_step(particles, &log_w, cloud.t + 1))
}

/// Unscented particle filter step: per particle, symmetric sigma points over
/// the joint (next state, measurement error) pair predict the observation;
/// Gaussian conditioning on the realized observation gives the proposal.
///
/// The joint is 2-dimensional, so the conventional scaling kappa = 3 - dim
/// puts the five points at the mean and +/- sqrt(3) marginal deviations with
/// weights 1/3 (center) and 1/6. Consumes one standard normal per particle.
pub fn upf_step<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    model: &ModelSpec,
    y_next: f64,
    rng: &mut R,
) -> Result<(ParticleCloud, f64)> {
    model.check_observation(y_next)?;
    let (mu_e, var_e) = model.signed_error_moments();
    let sd_e = var_e.sqrt();
    let sv = model.sigma_v();
    let var_v = sv * sv;
    let spread = 3f64.sqrt();
    const W_CENTER: f64 = 1.0 / 3.0;
    const W_WING: f64 = 1.0 / 6.0;
    let mut particles = Vec::with_capacity(cloud.len());
    let mut log_w = Vec::with_capacity(cloud.len());
    for (&x_prev, &pi) in cloud.particles.iter().zip(&cloud.weights) {
        let m = model.transition_mean(x_prev);
        let pts = [
            (m, mu_e, W_CENTER),
            (m + spread * sv, mu_e, W_WING),
            (m - spread * sv, mu_e, W_WING),
            (m, mu_e + spread * sd_e, W_WING),
            (m, mu_e - spread * sd_e, W_WING),
        ];
        let mut y_hat = 0.0;
        let mut y_pred = [0.0; 5];
        for (i, &(x, e, w)) in pts.iter().enumerate() {
            y_pred[i] = model.measurement_fn(x, e);
            y_hat += w * y_pred[i];
        }
        let mut s = 0.0;
        let mut c = 0.0;
        for (i, &(x, _, w)) in pts.iter().enumerate() {
            let dy = y_pred[i] - y_hat;
            s += w * dy * dy;
            c += w * (x - m) * dy;
        }
        if !(s > 0.0) {
            return Err(Error::Degenerate(format!(
                "predicted measurement variance {s} not positive at t = {}",
                cloud.t + 1
            )));
        }
        let gain = c / s;
        let prop_mean = m + gain * (y_next - y_hat);
        let prop_var = var_v - gain * c;
        if !(prop_var > 0.0) {
            return Err(Error::Degenerate(format!(
                "conditioned proposal variance {prop_var} not positive at t = {}",
                cloud.t + 1
            )));
        }
        let z: f64 = rng.sample(StandardNormal);
        let x = prop_mean + prop_var.sqrt() * z;
        let lw = pi.ln() + model.ln_meas(x, y_next) + model.log_transition_density(x_prev, x)
            - ln_normal_pdf(x, prop_mean, prop_var);
        particles.push(x);
        log_w.push(lw);
    }
    Ok(finish_step(particles, &log_w, cloud.t + 1))
}

/// Fully adapted auxiliary step, available only for the linear Gaussian
/// model where both the one-step predictive p(y_next | x_t) and the
/// conditional posterior p(x_next | x_t, y_next) are exact Gaussians.
/// Ancestors are resampled by predictive weight inside the step, so output
/// weights are uniform and the runner performs no further resampling.
/// Consumes, per output particle: one index draw, then one standard normal.
pub fn fapf_step<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    model: &ModelSpec,
    y_next: f64,
    rng: &mut R,
) -> Result<(ParticleCloud, f64)> {
    let p = match model.params() {
        ModelParams::Lg(p) => *p,
        _ => {
            return Err(Error::Unsupported(format!(
                "full adaptation needs the linear Gaussian model, got {}",
                model.kind()
            )))
        }
    };
    model.check_observation(y_next)?;
    let n = cloud.len();
    let var_v = p.sigma_v * p.sigma_v;
    let var_e = p.sigma_eta * p.sigma_eta;
    let pred_var = var_v + var_e;
    let ln_aux: Vec<f64> = cloud
        .particles
        .iter()
        .zip(&cloud.weights)
        .map(|(&x, &pi)| pi.ln() + ln_normal_pdf(y_next, p.rho * x, pred_var))
        .collect();
    let increment = log_sum_exp(&ln_aux);
    if !increment.is_finite() {
        return Ok((
            ParticleCloud {
                particles: cloud.particles.clone(),
                weights: vec![1.0 / n as f64; n],
                t: cloud.t + 1,
            },
            f64::NEG_INFINITY,
        ));
    }
    let probs: Vec<f64> = ln_aux.iter().map(|la| (la - increment).exp()).collect();
    let pick = WeightedIndex::new(&probs)
        .map_err(|e| Error::Degenerate(format!("auxiliary resampling failed: {e}")))?;
    let post_var = var_v * var_e / pred_var;
    let post_sd = post_var.sqrt();
    let mut particles = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick.sample(rng);
        let cond_mean = (var_e * p.rho * cloud.particles[k] + var_v * y_next) / pred_var;
        let z: f64 = rng.sample(StandardNormal);
        particles.push(cond_mean + post_sd * z);
    }
    Ok((
        ParticleCloud {
            particles,
            weights: vec![1.0 / n as f64; n],
            t: cloud.t + 1,
        },
        increment,
    ))
}

/// Multinomial resampling: N independent categorical draws by weight, output
/// weights reset to 1/N.
pub fn resample<R: Rng + ?Sized>(cloud: &ParticleCloud, rng: &mut R) -> Result<ParticleCloud> {
    resample_with(cloud, ResampleScheme::Multinomial, rng)
}

/// Resample under the chosen scheme.
pub fn resample_with<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    scheme: ResampleScheme,
    rng: &mut R,
) -> Result<ParticleCloud> {
    let n = cloud.len();
    let particles = match scheme {
        ResampleScheme::Multinomial => {
            let pick = WeightedIndex::new(&cloud.weights)
                .map_err(|e| Error::Degenerate(format!("resampling failed: {e}")))?;
            (0..n)
                .map(|_| cloud.particles[pick.sample(rng)])
                .collect()
        }
        ResampleScheme::Systematic => {
            let total: f64 = cloud.weights.iter().sum();
            if !(total > 0.0) {
                return Err(Error::Degenerate("resampling failed: zero total weight".into()));
            }
            let step = total / n as f64;
            let mut u = rng.gen::<f64>() * step;
            let mut cum = 0.0;
            let mut idx = 0usize;
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                while cum + cloud.weights[idx] < u && idx + 1 < n {
                    cum += cloud.weights[idx];
                    idx += 1;
                }
                out.push(cloud.particles[idx]);
                u += step;
            }
            out
        }
    };
    Ok(ParticleCloud {
        particles,
        weights: vec![1.0 / n as f64; n],
        t: cloud.t,
    })
}

/// Run one filter over the whole series from a stationary initialization,
/// resampling every step (except after FAPF steps, which resample
/// internally). Deterministic in the seed apart from `elapsed`.
pub fn run_filter(
    filter: FilterId,
    model: &ModelSpec,
    ys: &[f64],
    n: usize,
    options: &FilterOptions,
    seed: u64,
) -> Result<FilterRun> {
    run_filter_with_rng(
        filter,
        model,
        ys,
        n,
        options,
        &mut ChaCha12Rng::seed_from_u64(seed),
    )
}

/// `run_filter` against a caller-owned random stream (replication harnesses
/// derive one stream per run).
pub fn run_filter_with_rng<R: Rng + ?Sized>(
    filter: FilterId,
    model: &ModelSpec,
    ys: &[f64],
    n: usize,
    options: &FilterOptions,
    rng: &mut R,
) -> Result<FilterRun> {
    model.validate()?;
    if n == 0 {
        return Err(Error::Input("need at least one particle".into()));
    }
    if ys.is_empty() {
        return Err(Error::Input("need at least one observation".into()));
    }
    if filter == FilterId::Fapf && model.kind() != ModelKind::Lg {
        return Err(Error::Unsupported(
            "full adaptation needs the linear Gaussian model".into(),
        ));
    }
    let plan = if filter == FilterId::Dpf {
        Some(cyclic_permutations(n, options.match_l)?)
    } else {
        None
    };
    let sigma = if filter == FilterId::Udpf {
        let m = options
            .sigma_points
            .unwrap_or_else(|| default_sigma_point_count(model));
        Some(build_sigma_points(model.error_dist(), m)?)
    } else {
        None
    };
    let start = Instant::now();
    let mut cloud = init_cloud(model, n, rng);
    let mut increments = Vec::with_capacity(ys.len());
    let mut loglik = 0.0;
    let mut degenerate = false;
    for &y in ys {
        let (next, inc) = match filter {
            FilterId::Bpf => bpf_step(&cloud, model, y, rng)?,
            FilterId::Dpf => dpf_step(&cloud, model, y, plan.as_ref().unwrap(), rng)?,
            FilterId::Udpf => udpf_step(&cloud, model, y, sigma.as_ref().unwrap(), rng)?,
            FilterId::Upf => upf_step(&cloud, model, y, rng)?,
            FilterId::Fapf => fapf_step(&cloud, model, y, rng)?,
        };
        increments.push(inc);
        loglik += inc;
        cloud = next;
        if !inc.is_finite() {
            degenerate = true;
            loglik = f64::NEG_INFINITY;
            break;
        }
        if filter != FilterId::Fapf {
            cloud = resample_with(&cloud, options.resample, rng)?;
        }
    }
    Ok(FilterRun {
        loglik,
        increments,
        cloud,
        elapsed: start.elapsed().as_secs_f64(),
        degenerate,
    })
}
