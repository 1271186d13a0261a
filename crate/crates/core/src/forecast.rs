//! One-step-ahead predictive densities of the transformed observable and
//! the log-score comparison metrics built on them.
//!
//! Forecasts target z = log(y^2) for the stochastic volatility model and
//! z = log(y) for the duration model (both transforms avoid the square-root
//! singularity of the raw observable's density at zero); the linear
//! Gaussian model forecasts y itself. A conditional predictive propagates
//! the filtered particle cloud one step and mixes the transformed
//! measurement density over particles; a marginal predictive averages
//! conditionals over retained posterior parameter draws, pointwise on a
//! fixed grid.
//!
//! Filters are compared by the average log score (ALS) of their marginal
//! predictives and by the average absolute difference in per-period log
//! scores (ADLS) against the bootstrap filter as baseline.

use crate::error::{Error, Result};
use crate::filters::{run_filter_with_rng, FilterId, FilterOptions, ParticleCloud};
use crate::math::mean_var;
use crate::models::{ModelKind, ModelSpec};
use crate::pmmh::{model_from_theta, run_pmmh, theta_dim, Chain, Prior};
use crate::rng::{derived_rng, sub_seed};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// Number of points in the default forecast grid.
pub const GRID_POINTS: usize = 400;
/// Half-width of the default grid in in-sample standard deviations.
pub const GRID_HALF_WIDTH_SDS: f64 = 8.0;

/// A one-step-ahead predictive density on a fixed grid of the transformed
/// observable, with the realized value and its log score attached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictiveDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub realized: f64,
    pub log_score: f64,
    /// Posterior draws dropped because their filter pass degenerated.
    pub excluded_draws: usize,
}

impl PredictiveDensity {
    /// Trapezoid mass over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Two-column CSV (grid value, density value).
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "z,density")?;
        for (z, d) in self.grid.iter().zip(&self.density) {
            writeln!(w, "{z},{d}")?;
        }
        Ok(())
    }
}

/// Per-filter scoring summary inside a [`ForecastReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterScores {
    pub scores: Vec<f64>,
    pub als: f64,
    pub adls: f64,
}

/// Rolling-forecast outcome: per-period log scores, their average (ALS),
/// and the average absolute log-score difference to the bootstrap filter
/// (ADLS), keyed by filter name. `densities` holds each filter's marginal
/// predictive for the first forecast period, the overlay usually plotted to
/// compare filters visually.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastReport {
    pub per_filter: BTreeMap<String, FilterScores>,
    #[serde(default)]
    pub densities: BTreeMap<String, PredictiveDensity>,
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

/// Equally spaced grid of [`GRID_POINTS`] points spanning the in-sample
/// mean of the transformed observations plus/minus [`GRID_HALF_WIDTH_SDS`]
/// standard deviations.
pub fn default_grid(model: &ModelSpec, ys: &[f64]) -> Result<Vec<f64>> {
    grid_spanning(model, ys, GRID_POINTS, GRID_HALF_WIDTH_SDS)
}

/// Equally spaced grid of `points` values spanning the in-sample mean of
/// the transformed observations plus/minus `half_width_sds` standard
/// deviations.
pub fn grid_spanning(
    model: &ModelSpec,
    ys: &[f64],
    points: usize,
    half_width_sds: f64,
) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Input(format!("grid needs at least 2 points, got {points}")));
    }
    if !(half_width_sds > 0.0) || !half_width_sds.is_finite() {
        return Err(Error::Input(format!(
            "grid half-width must be positive, got {half_width_sds}"
        )));
    }
    if ys.len() < 2 {
        return Err(Error::Input("need at least 2 observations for a grid".into()));
    }
    let zs: Vec<f64> = ys
        .iter()
        .map(|&y| model.transform_observation(y))
        .collect::<Result<_>>()?;
    let (m, var) = mean_var(&zs);
    let s = var.sqrt();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Input(
            "transformed observations have no spread; cannot build a grid".into(),
        ));
    }
    let lo = m - half_width_sds * s;
    let step = 2.0 * half_width_sds * s / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

/// Predictive density conditional on one parameter value: propagate each
/// particle one step through the transition (one draw per particle, in
/// particle order) and mix the transformed measurement densities by particle
/// weight, pointwise on the grid.
pub fn conditional_predictive<R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    model: &ModelSpec,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if cloud.particles.is_empty() {
        return Err(Error::Input("empty particle cloud".into()));
    }
    if grid.is_empty() {
        return Err(Error::Input("empty grid".into()));
    }
    let sv = model.sigma_v();
    let mut density = vec![0.0; grid.len()];
    for (&x_prev, &pi) in cloud.particles.iter().zip(&cloud.weights) {
        let z: f64 = rng.sample(StandardNormal);
        let x_next = model.transition_mean(x_prev) + sv * z;
        for (d, &g) in density.iter_mut().zip(grid) {
            *d += pi * model.ln_transformed_meas(x_next, g).exp();
        }
    }
    Ok(density)
}

/// Stream index for a parameter draw, derived from its bit pattern so that
/// identical draws (e.g. rejected-iteration repeats) reuse identical filter
/// randomness and the average over them collapses to a single conditional.
fn theta_stream(theta: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in theta {
        for b in v.to_bits().to_le_bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Marginal predictive: for every `thin`-th post-burn-in draw, re-run the
/// filter over the data, extend the final cloud one step, and average the
/// resulting conditional densities pointwise. Draws whose filter pass
/// degenerates are excluded and counted. The log score at `realized` is
/// attached.
#[allow(clippy::too_many_arguments)]
pub fn marginal_predictive(
    chain: &Chain,
    kind: ModelKind,
    ys: &[f64],
    filter: FilterId,
    n: usize,
    grid: &[f64],
    options: &FilterOptions,
    thin: usize,
    realized: f64,
    seed: u64,
) -> Result<PredictiveDensity> {
    if thin == 0 {
        return Err(Error::Input("thinning stride must be at least 1".into()));
    }
    let post = chain.post_burn();
    if post.is_empty() {
        return Err(Error::Input("chain has no post-burn-in draws".into()));
    }
    if post[0].len() != theta_dim(kind) {
        return Err(Error::Input(format!(
            "chain draws have {} coordinates, {kind} expects {}",
            post[0].len(),
            theta_dim(kind)
        )));
    }
    let retained: Vec<&Vec<f64>> = post.iter().step_by(thin).collect();
    let conditionals: Vec<Option<Vec<f64>>> = retained
        .par_iter()
        .map(|theta| {
            let model = match model_from_theta(kind, theta) {
                Ok(m) => m,
                Err(_) => return None,
            };
            let mut rng = derived_rng(seed, theta_stream(theta));
            let run =
                match run_filter_with_rng(filter, &model, ys, n, options, &mut rng) {
                    Ok(run) => run,
                    Err(_) => return None,
                };
            if run.degenerate {
                return None;
            }
            conditional_predictive(&run.cloud, &model, grid, &mut rng).ok()
        })
        .collect();
    let mut density = vec![0.0; grid.len()];
    let mut kept = 0usize;
    for cond in conditionals.iter().flatten() {
        for (acc, v) in density.iter_mut().zip(cond) {
            *acc += v;
        }
        kept += 1;
    }
    let excluded_draws = retained.len() - kept;
    if kept == 0 {
        return Err(Error::Degenerate(format!(
            "all {} retained draws degenerate",
            retained.len()
        )));
    }
    if excluded_draws > 0 {
        log::warn!(
            "marginal predictive excluded {excluded_draws} of {} draws",
            retained.len()
        );
    }
    for v in &mut density {
        *v /= kept as f64;
    }
    let ls = log_density_at(grid, &density, realized)?;
    Ok(PredictiveDensity {
        grid: grid.to_vec(),
        density,
        realized,
        log_score: ls,
        excluded_draws,
    })
}

/// Linearly interpolated log density at `z`; -inf where the interpolated
/// density is zero, an error if `z` lies outside the grid.
fn log_density_at(grid: &[f64], density: &[f64], z: f64) -> Result<f64> {
    let last = grid.len() - 1;
    if z < grid[0] || z > grid[last] {
        return Err(Error::Domain(format!(
            "realized value {z} outside the grid [{}, {}]",
            grid[0], grid[last]
        )));
    }
    let hi = grid.partition_point(|&g| g < z).min(last).max(1);
    let (g0, g1) = (grid[hi - 1], grid[hi]);
    let w = if g1 > g0 { (z - g0) / (g1 - g0) } else { 0.0 };
    Ok(((1.0 - w) * density[hi - 1] + w * density[hi]).ln())
}

/// Log score of a stored predictive density at its realized value.
pub fn log_score(pd: &PredictiveDensity) -> Result<f64> {
    log_density_at(&pd.grid, &pd.density, pd.realized)
}

/// Assemble a report from per-filter score series. The bootstrap filter
/// must be present: it anchors the ADLS comparison.
pub fn report_from_scores(per_filter: &[(FilterId, Vec<f64>)]) -> Result<ForecastReport> {
    let baseline = per_filter
        .iter()
        .find(|(f, _)| *f == FilterId::Bpf)
        .map(|(_, s)| s.clone())
        .ok_or_else(|| {
            Error::Input("score table must include the bootstrap filter baseline".into())
        })?;
    let mut out = BTreeMap::new();
    for (filter, scores) in per_filter {
        if scores.len() != baseline.len() {
            return Err(Error::Input(format!(
                "{filter} has {} scores, baseline has {}",
                scores.len(),
                baseline.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::Input("empty score series".into()));
        }
        let als = scores.iter().sum::<f64>() / scores.len() as f64;
        let adls = scores
            .iter()
            .zip(&baseline)
            .map(|(s, b)| (s - b).abs())
            .sum::<f64>()
            / scores.len() as f64;
        out.insert(filter.to_string(), FilterScores {
            scores: scores.clone(),
            als,
            adls,
        });
    }
    Ok(ForecastReport {
        per_filter: out,
        densities: BTreeMap::new(),
    })
}

/// Sizing of a rolling forecast exercise: estimation window, particle
/// count (shared across filters), chain length, chain refresh cadence,
/// draw thinning, and grid shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingPlan {
    pub t_est: usize,
    pub n: usize,
    pub mh_iters: usize,
    pub burn_in: usize,
    pub refresh_every: usize,
    pub thin: usize,
    pub grid_points: usize,
    pub grid_half_width_sds: f64,
}

impl RollingPlan {
    /// A plan with the default refresh cadence, thinning, and grid shape.
    pub fn new(t_est: usize, n: usize, mh_iters: usize, burn_in: usize) -> Self {
        RollingPlan {
            t_est,
            n,
            mh_iters,
            burn_in,
            refresh_every: 50,
            thin: 5,
            grid_points: GRID_POINTS,
            grid_half_width_sds: GRID_HALF_WIDTH_SDS,
        }
    }
}

/// Expanding-window one-step-ahead forecasting over the last
/// `data.len() - plan.t_est` periods. Posterior chains are re-estimated on
/// the current window every `refresh_every` periods and reused in between;
/// filters always re-run on the full current window, so each forecast
/// conditions on all data to date. Each filter carries its own options so
/// e.g. the matching count can differ per filter.
pub fn rolling_forecast(
    data: &[f64],
    kind: ModelKind,
    prior: &Prior,
    filters: &[(FilterId, FilterOptions)],
    plan: &RollingPlan,
    seed: u64,
) -> Result<ForecastReport> {
    if plan.refresh_every == 0 {
        return Err(Error::Input("refresh interval must be at least 1".into()));
    }
    if plan.t_est < 2 || plan.t_est >= data.len() {
        return Err(Error::Input(format!(
            "estimation window {} must leave at least one forecast period of {}",
            plan.t_est,
            data.len()
        )));
    }
    if !filters.iter().any(|(f, _)| *f == FilterId::Bpf) {
        return Err(Error::Input(
            "filter list must include the bootstrap filter baseline".into(),
        ));
    }
    let horizon = data.len() - plan.t_est;
    let mut per_filter = Vec::with_capacity(filters.len());
    let mut densities = BTreeMap::new();
    for (fi, &(filter, ref options)) in filters.iter().enumerate() {
        let mut chain: Option<Chain> = None;
        let mut scores = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let window = &data[..plan.t_est + k];
            if k % plan.refresh_every == 0 {
                chain = Some(run_pmmh(
                    filter,
                    kind,
                    prior,
                    window,
                    plan.n,
                    plan.mh_iters,
                    plan.burn_in,
                    options,
                    sub_seed(seed, 1_000_000 + (fi as u64) * 10_000 + k as u64),
                )?);
            }
            let model_probe = model_from_theta(kind, &prior.mean())?;
            let grid = grid_spanning(
                &model_probe,
                window,
                plan.grid_points,
                plan.grid_half_width_sds,
            )?;
            let realized = model_probe.transform_observation(data[plan.t_est + k])?;
            let pd = marginal_predictive(
                chain.as_ref().expect("chain estimated on period 0"),
                kind,
                window,
                filter,
                plan.n,
                &grid,
                options,
                plan.thin,
                realized,
                sub_seed(seed, 2_000_000 + (fi as u64) * 10_000 + k as u64),
            )?;
            scores.push(pd.log_score);
            if k == 0 {
                densities.insert(filter.to_string(), pd);
            }
        }
        per_filter.push((filter, scores));
    }
    let mut report = report_from_scores(&per_filter)?;
    report.densities = densities;
    Ok(report)
}
