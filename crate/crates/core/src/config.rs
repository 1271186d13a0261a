//! JSON experiment configuration: one file drives a whole run, and the
//! parsed form round-trips losslessly so a stored config plus its seed
//! reproduces every artifact.
//!
//! The `model` block always carries concrete parameters: they are the
//! data-generating values for `simulate`, the calibration point for
//! `calibrate`, and the reference parameterization whose family selects the
//! sampling-scale layout for `pmmh` and `forecast` (estimation itself is
//! governed by the prior in the `pmmh` block).
//!
//! Every unknown field is rejected: a typo in an experiment file should be
//! a loud configuration error, not a silently ignored knob.

use crate::error::{Error, Result};
use crate::filters::{FilterId, FilterOptions, ResampleScheme};
use crate::forecast::{GRID_HALF_WIDTH_SDS, GRID_POINTS};
use crate::models::{ModelKind, ModelParams, ModelSpec, SvijParams};
use crate::pmmh::{theta_dim, Prior};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};

/// Full experiment description. `seed` is mandatory: every random quantity
/// in a run derives from it, so there is no implicit entropy anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSettings>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<FilterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmmh: Option<PmmhSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

/// Where to read observed data from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSettings {
    pub path: PathBuf,
}

/// Which process generates synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DgpKind {
    /// The configured model itself.
    #[default]
    Model,
    /// The jump-diffusion volatility process (deliberate misspecification
    /// relative to the estimated stochastic volatility model).
    Svij,
}

/// Synthetic-data block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    pub t: usize,
    #[serde(default)]
    pub dgp: DgpKind,
    /// Jump-process parameters; defaults used when absent and `dgp` is
    /// `svij`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svij: Option<SvijParams>,
}

/// Particle count for one filter: a fixed integer or the string
/// `"calibrate"` to size it from the measured log-likelihood variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NSpec {
    Fixed(usize),
    Keyword(CalibrateKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrateKeyword {
    Calibrate,
}

impl Default for NSpec {
    fn default() -> Self {
        NSpec::Keyword(CalibrateKeyword::Calibrate)
    }
}

impl NSpec {
    pub fn fixed(&self) -> Option<usize> {
        match self {
            NSpec::Fixed(n) => Some(*n),
            NSpec::Keyword(_) => None,
        }
    }

    pub fn is_calibrate(&self) -> bool {
        matches!(self, NSpec::Keyword(_))
    }
}

impl fmt::Display for NSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NSpec::Fixed(n) => write!(f, "{n}"),
            NSpec::Keyword(_) => f.write_str("calibrate"),
        }
    }
}

fn default_match_l() -> usize {
    1
}

/// One filter to run, with its options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub id: FilterId,
    #[serde(default)]
    pub n: NSpec,
    #[serde(default = "default_match_l")]
    pub match_l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_points: Option<usize>,
    #[serde(default)]
    pub resample: ResampleScheme,
}

impl FilterConfig {
    pub fn options(&self) -> FilterOptions {
        FilterOptions {
            match_l: self.match_l,
            sigma_points: self.sigma_points,
            resample: self.resample,
        }
    }
}

fn default_n_s() -> usize {
    1000
}

fn default_r0() -> usize {
    100
}

/// Sizing of the particle-count calibration pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    #[serde(default = "default_n_s")]
    pub n_s: usize,
    #[serde(default = "default_r0")]
    pub r0: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            n_s: default_n_s(),
            r0: default_r0(),
        }
    }
}

/// Sampler block: chain length, burn-in, the prior, and calibration sizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmmhSettings {
    pub mh_iters: usize,
    #[serde(default)]
    pub burn_in: usize,
    pub prior: Prior,
    #[serde(default)]
    pub calibration: CalibrationSettings,
}

fn default_refresh_every() -> usize {
    50
}

fn default_thin() -> usize {
    5
}

fn default_grid_points() -> usize {
    GRID_POINTS
}

fn default_grid_half_width() -> f64 {
    GRID_HALF_WIDTH_SDS
}

/// Forecast block: estimation window, the shared particle count, refresh
/// cadence, chain thinning, and grid shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSettings {
    pub t_est: usize,
    pub n: usize,
    #[serde(default = "default_refresh_every")]
    pub refresh_every: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_grid_half_width")]
    pub grid_half_width_sds: f64,
}

impl ExperimentConfig {
    pub fn kind(&self) -> ModelKind {
        ModelSpec::new_unchecked(self.model).kind()
    }

    /// Canonical JSON form (pretty-printed, stable field order).
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serializing config: {e}")))
    }

    /// SHA-256 of the canonical JSON form, hex-encoded; recorded in run
    /// manifests so artifacts are traceable to the exact configuration.
    pub fn sha256_hex(&self) -> Result<String> {
        let json = self.to_json()?;
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Cross-field consistency checks; every violation is a configuration
    /// error regardless of which module would eventually trip over it.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        ModelSpec::new(self.model).map_err(|e| Error::Config(format!("model block: {e}")))?;
        let kind = self.kind();
        if self.data.is_some() && self.simulate.is_some() {
            return bad("provide either a data block or a simulate block, not both".into());
        }
        if let Some(data) = &self.data {
            if data.path.as_os_str().is_empty() {
                return bad("data path is empty".into());
            }
        }
        if let Some(sim) = &self.simulate {
            if sim.t == 0 {
                return bad("simulation length must be at least 1".into());
            }
            match sim.dgp {
                DgpKind::Svij => {
                    if kind != ModelKind::Sv {
                        return bad(format!(
                            "the svij process mimics the sv family; model family is {kind}"
                        ));
                    }
                    if let Some(p) = &sim.svij {
                        crate::models::validate_svij(p)
                            .map_err(|e| Error::Config(format!("svij block: {e}")))?;
                    }
                }
                DgpKind::Model => {
                    if sim.svij.is_some() {
                        return bad(
                            "svij parameters given but the dgp is the model itself".into(),
                        );
                    }
                }
            }
        }
        let mut seen = Vec::new();
        for fc in &self.filters {
            if seen.contains(&fc.id) {
                return bad(format!("filter {} listed twice", fc.id));
            }
            seen.push(fc.id);
            if fc.id == FilterId::Fapf && kind != ModelKind::Lg {
                return bad(format!(
                    "fapf requires the lg family; model family is {kind}"
                ));
            }
            if fc.match_l == 0 {
                return bad(format!("filter {}: match_l must be at least 1", fc.id));
            }
            if let Some(n) = fc.n.fixed() {
                if n < 2 {
                    return bad(format!("filter {}: need at least 2 particles", fc.id));
                }
                if fc.id == FilterId::Dpf && fc.match_l > n {
                    return bad(format!(
                        "filter dpf: match_l {} exceeds the particle count {n}",
                        fc.match_l
                    ));
                }
            }
            if let Some(m) = fc.sigma_points {
                if m < 2 {
                    return bad(format!(
                        "filter {}: sigma-point count must be at least 2",
                        fc.id
                    ));
                }
            }
        }
        if let Some(pmmh) = &self.pmmh {
            if pmmh.mh_iters == 0 {
                return bad("pmmh: need at least one iteration".into());
            }
            if pmmh.burn_in >= pmmh.mh_iters {
                return bad(format!(
                    "pmmh: burn-in {} must be smaller than mh_iters {}",
                    pmmh.burn_in, pmmh.mh_iters
                ));
            }
            pmmh.prior
                .validate()
                .map_err(|e| Error::Config(format!("pmmh prior: {e}")))?;
            if pmmh.prior.dim() != theta_dim(kind) {
                return bad(format!(
                    "pmmh prior has {} coordinates, the {kind} family needs {}",
                    pmmh.prior.dim(),
                    theta_dim(kind)
                ));
            }
            if pmmh.calibration.n_s < 2 || pmmh.calibration.r0 < 2 {
                return bad("pmmh calibration: n_s and r0 must both be at least 2".into());
            }
        }
        if let Some(fc) = &self.forecast {
            if self.pmmh.is_none() {
                return bad("forecast requires a pmmh block for its posterior draws".into());
            }
            if !self.filters.iter().any(|f| f.id == FilterId::Bpf) {
                return bad(
                    "forecast requires the bootstrap filter in the filter list (ADLS baseline)"
                        .into(),
                );
            }
            if fc.t_est < 2 {
                return bad("forecast: estimation window must be at least 2".into());
            }
            if fc.n < 2 {
                return bad("forecast: need at least 2 particles".into());
            }
            if fc.refresh_every == 0 || fc.thin == 0 {
                return bad("forecast: refresh_every and thin must be at least 1".into());
            }
            if fc.grid_points < 2 {
                return bad("forecast: grid needs at least 2 points".into());
            }
            if !(fc.grid_half_width_sds > 0.0) || !fc.grid_half_width_sds.is_finite() {
                return bad("forecast: grid half-width must be positive".into());
            }
        }
        Ok(())
    }
}

/// Parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("parsing {}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LgParams, SvParams};
    use crate::pmmh::CoordLaw;

    fn lg_model() -> ModelParams {
        ModelParams::Lg(LgParams {
            sigma_eta: 0.45,
            rho: 0.4,
            sigma_v: 0.92,
        })
    }

    fn sv_model() -> ModelParams {
        ModelParams::Sv(SvParams {
            phi: -0.5,
            rho: 0.9,
            sigma_v: 0.4,
        })
    }

    fn lg_prior() -> Prior {
        Prior::Independent {
            coords: vec![
                CoordLaw::Normal { mean: -1.6, var: 1.0 },
                CoordLaw::Normal { mean: 0.4, var: 0.25 },
                CoordLaw::Normal { mean: -0.17, var: 1.0 },
            ],
        }
    }

    fn full_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 42,
            model: lg_model(),
            data: None,
            simulate: Some(SimulateSettings {
                t: 100,
                dgp: DgpKind::Model,
                svij: None,
            }),
            filters: vec![
                FilterConfig {
                    id: FilterId::Bpf,
                    n: NSpec::Fixed(200),
                    match_l: 1,
                    sigma_points: None,
                    resample: ResampleScheme::Multinomial,
                },
                FilterConfig {
                    id: FilterId::Dpf,
                    n: NSpec::default(),
                    match_l: 5,
                    sigma_points: None,
                    resample: ResampleScheme::Multinomial,
                },
            ],
            pmmh: Some(PmmhSettings {
                mh_iters: 500,
                burn_in: 100,
                prior: lg_prior(),
                calibration: CalibrationSettings::default(),
            }),
            forecast: Some(ForecastSettings {
                t_est: 80,
                n: 100,
                refresh_every: 10,
                thin: 5,
                grid_points: 400,
                grid_half_width_sds: 8.0,
            }),
            output_dir: Some(PathBuf::from("out")),
            jobs: Some(2),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let config = full_config();
        config.validate().unwrap();
        let json = config.to_json().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
        // And once more through the string form.
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn literal_json_parses_with_defaults() {
        let text = r#"{
            "seed": 7,
            "model": {"family": "lg", "sigma_eta": 0.45, "rho": 0.4, "sigma_v": 0.92},
            "filters": [{"id": "bpf"}, {"id": "dpf", "n": 500, "match_l": 3}]
        }"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.kind(), ModelKind::Lg);
        assert!(config.filters[0].n.is_calibrate());
        assert_eq!(config.filters[0].match_l, 1);
        assert_eq!(config.filters[1].n.fixed(), Some(500));
        assert_eq!(config.filters[1].match_l, 3);
        assert_eq!(config.filters[0].resample, ResampleScheme::Multinomial);
        assert_eq!(format!("{}", config.filters[0].n), "calibrate");
        assert_eq!(format!("{}", config.filters[1].n), "500");
    }

    #[test]
    fn missing_seed_and_unknown_fields_are_rejected() {
        let no_seed = r#"{"model": {"family": "lg", "sigma_eta": 1.0, "rho": 0.0, "sigma_v": 1.0}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(no_seed).is_err());
        let typo = r#"{
            "seed": 1,
            "model": {"family": "lg", "sigma_eta": 1.0, "rho": 0.0, "sigma_v": 1.0},
            "fliters": []
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(typo).is_err());
        let bad_n = r#"{
            "seed": 1,
            "model": {"family": "lg", "sigma_eta": 1.0, "rho": 0.0, "sigma_v": 1.0},
            "filters": [{"id": "bpf", "n": "bogus"}]
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad_n).is_err());
    }

    #[test]
    fn validation_catches_cross_field_conflicts() {
        // FAPF outside the lg family.
        let mut config = full_config();
        config.model = sv_model();
        config.filters[0].id = FilterId::Fapf;
        config.pmmh = None;
        config.forecast = None;
        assert!(config.validate().is_err());

        // Prior dimension vs family (lg needs 3 coordinates).
        let mut config = full_config();
        config.pmmh.as_mut().unwrap().prior = Prior::Independent {
            coords: vec![CoordLaw::Normal { mean: 0.0, var: 1.0 }; 2],
        };
        assert!(config.validate().is_err());

        // match_l above a fixed particle count.
        let mut config = full_config();
        config.filters[1].n = NSpec::Fixed(3);
        assert!(config.validate().is_err());

        // Duplicate filter.
        let mut config = full_config();
        config.filters[1] = config.filters[0];
        assert!(config.validate().is_err());

        // Burn-in at least the chain length.
        let mut config = full_config();
        config.pmmh.as_mut().unwrap().burn_in = 500;
        assert!(config.validate().is_err());

        // Forecast without the bootstrap baseline.
        let mut config = full_config();
        config.filters[0].id = FilterId::Upf;
        assert!(config.validate().is_err());

        // Forecast without a pmmh block.
        let mut config = full_config();
        config.pmmh = None;
        assert!(config.validate().is_err());

        // Data and simulate together.
        let mut config = full_config();
        config.data = Some(DataSettings {
            path: PathBuf::from("returns.csv"),
        });
        assert!(config.validate().is_err());

        // Svij process under a non-sv family.
        let mut config = full_config();
        config.simulate.as_mut().unwrap().dgp = DgpKind::Svij;
        assert!(config.validate().is_err());

        // Svij parameters with a plain model dgp.
        let mut config = full_config();
        config.simulate.as_mut().unwrap().svij = Some(SvijParams::default());
        assert!(config.validate().is_err());

        // Invalid model parameters are configuration errors here.
        let mut config = full_config();
        config.model = ModelParams::Lg(LgParams {
            sigma_eta: -1.0,
            rho: 0.4,
            sigma_v: 0.92,
        });
        let err = config.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let config = full_config();
        let h1 = config.sha256_hex().unwrap();
        let h2 = config.sha256_hex().unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 64);
        let mut other = config.clone();
        other.seed = 43;
        assert_ne!(h1, other.sha256_hex().unwrap());
    }

    #[test]
    fn load_config_reports_path_on_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing.json");
        let err = load_config(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("missing.json"));

        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, "{not json").unwrap();
        let err = load_config(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let good = dir.path().join("good.json");
        std::fs::write(&good, full_config().to_json().unwrap()).unwrap();
        let loaded = load_config(&good).unwrap();
        assert_eq!(loaded, full_config());
    }
}
