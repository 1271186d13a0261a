//! Experiment orchestration: observed-data ingestion, the five stages
//! (simulate, calibrate, pmmh, forecast, report), and artifact persistence.
//!
//! Artifacts are staged with a `.partial` suffix and renamed to their final
//! names only once the whole stage has succeeded, so a failed run never
//! leaves a final-looking file with incomplete contents. Every stage also
//! writes a `manifest.json` with the configuration hash and seed, which is
//! enough to rerun the exact same command; manifests carry no timestamps,
//! so reruns produce identical bytes.
//!
//! Seed discipline: all randomness in a stage derives from the configured
//! seed through fixed stream tags. In particular the synthetic-data tag is
//! shared by every stage, so `calibrate`, `pmmh` and `forecast` operate on
//! exactly the series that `simulate` writes to disk.

use crate::config::{
    CalibrationSettings, DgpKind, ExperimentConfig, FilterConfig, NSpec, SimulateSettings,
};
use crate::error::{Error, Result};
use crate::filters::{FilterId, FilterOptions};
use crate::forecast::rolling_forecast;
use crate::forecast::RollingPlan;
use crate::math::mean_var;
use crate::models::{simulate_svij, ModelSpec};
use crate::pmmh::{
    calibrate_nopt, diagnostics, inefficiency_factor, run_pmmh, theta_from_model, theta_names,
    CalibrationResult, Chain, Diagnostics,
};
use crate::rng::sub_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Stream tag for synthetic data; shared across stages (see module docs).
const TAG_DATA: u64 = 1;
/// Base stream tag for per-filter particle-count calibration.
const TAG_CALIBRATE: u64 = 100;
/// Base stream tag for per-filter posterior chains.
const TAG_PMMH: u64 = 200;

/// An observation series with optional dates and its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsSeries {
    pub dates: Option<Vec<String>>,
    pub returns: Vec<f64>,
    pub source: PathBuf,
}

/// Read a returns CSV. Accepts exactly two layouts: a single `return`
/// column, or `date,return` with ISO-8601 dates. Every malformed, empty, or
/// non-finite value is rejected with its line number (the header is line 1).
/// Out-of-order dates only warn: some vendors export newest-first and the
/// values themselves are still usable.
pub fn load_returns(path: &Path) -> Result<ReturnsSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("opening {}: {e}", path.display())))?;
    let cols: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let (has_dates, ret_col) = match cols.as_slice() {
        [r] if r == "return" => (false, 0),
        [d, r] if d == "date" && r == "return" => (true, 1),
        _ => {
            return Err(Error::Data(format!(
                "{}: expected columns `return` or `date,return`, found `{}`",
                path.display(),
                cols.join(",")
            )))
        }
    };
    let mut returns = Vec::new();
    let mut dates = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| Error::Data(format!("{} line {line}: {e}", path.display())))?;
        if record.len() != cols.len() {
            return Err(Error::Data(format!(
                "{} line {line}: expected {} fields, found {}",
                path.display(),
                cols.len(),
                record.len()
            )));
        }
        let raw = record.get(ret_col).unwrap_or("");
        if raw.is_empty() {
            return Err(Error::Data(format!(
                "{} line {line}: empty return",
                path.display()
            )));
        }
        let value: f64 = raw.parse().map_err(|_| {
            Error::Data(format!(
                "{} line {line}: unparseable return `{raw}`",
                path.display()
            ))
        })?;
        if !value.is_finite() {
            return Err(Error::Data(format!(
                "{} line {line}: non-finite return `{raw}`",
                path.display()
            )));
        }
        returns.push(value);
        if has_dates {
            dates.push(record.get(0).unwrap_or("").to_string());
        }
    }
    if returns.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    if has_dates && dates.windows(2).any(|w| w[1] < w[0]) {
        log::warn!("{}: dates are not in increasing order", path.display());
    }
    Ok(ReturnsSeries {
        dates: if has_dates { Some(dates) } else { None },
        returns,
        source: path.to_path_buf(),
    })
}

/// Staged artifact writer: files land as `<name>.partial` and are renamed
/// in one pass by `finalize`, which runs only after the stage succeeds.
pub struct ArtifactSet {
    dir: PathBuf,
    staged: Vec<String>,
}

impl ArtifactSet {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactSet {
            dir: dir.to_path_buf(),
            staged: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Names staged so far, in write order.
    pub fn names(&self) -> &[String] {
        &self.staged
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        if self.staged.iter().any(|s| s == name) {
            return Err(Error::Input(format!("artifact {name} staged twice")));
        }
        std::fs::write(self.dir.join(format!("{name}.partial")), contents)?;
        self.staged.push(name.to_string());
        Ok(())
    }

    /// Promote every staged file to its final name, returning final paths.
    pub fn finalize(self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.staged.len());
        for name in &self.staged {
            let target = self.dir.join(name);
            std::fs::rename(self.dir.join(format!("{name}.partial")), &target)?;
            out.push(target);
        }
        Ok(out)
    }
}

/// Rerun provenance written next to every stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
}

/// The five experiment stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Calibrate,
    Pmmh,
    Forecast,
    Report,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::Pmmh => "pmmh",
            Command::Forecast => "forecast",
            Command::Report => "report",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Input(format!("serializing artifact: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Execute one stage of the configured experiment and persist its
/// artifacts plus a manifest. On error, anything already staged is left
/// behind with the `.partial` suffix.
pub fn run_experiment(command: Command, config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let dir = config.output_dir.clone().ok_or_else(|| {
        Error::Config("no output directory: set output_dir in the config or pass --out".into())
    })?;
    let mut artifacts = ArtifactSet::new(&dir)?;
    match command {
        Command::Simulate => stage_simulate(config, &mut artifacts)?,
        Command::Calibrate => stage_calibrate(config, &mut artifacts)?,
        Command::Pmmh => stage_pmmh(config, &mut artifacts)?,
        Command::Forecast => stage_forecast(config, &mut artifacts)?,
        Command::Report => stage_report(config, &mut artifacts)?,
    }
    let manifest = Manifest {
        command: command.to_string(),
        config_sha256: config.sha256_hex()?,
        seed: config.seed,
        artifacts: artifacts.names().to_vec(),
    };
    artifacts.write("manifest.json", &to_pretty_json(&manifest)?)?;
    let paths = artifacts.finalize()?;
    Ok(RunOutcome {
        dir,
        artifacts: paths,
    })
}

/// Observations for an estimation stage: loaded from disk when a data
/// block is present, otherwise regenerated from the simulate block. Loaded
/// series must have at least 50 observations when `for_estimation` is set;
/// simulated lengths are whatever the experiment asked for.
fn stage_data(config: &ExperimentConfig, for_estimation: bool) -> Result<Vec<f64>> {
    if let Some(data) = &config.data {
        let series = load_returns(&data.path)?;
        if for_estimation && series.returns.len() < 50 {
            return Err(Error::Data(format!(
                "{}: {} observations; estimation needs at least 50",
                data.path.display(),
                series.returns.len()
            )));
        }
        Ok(series.returns)
    } else if let Some(sim) = &config.simulate {
        Ok(simulated_observations(config, sim)?.0)
    } else {
        Err(Error::Config(
            "this stage needs a data or simulate block".into(),
        ))
    }
}

/// Draw the synthetic path; the states CSV comes along for the simulate
/// stage. For the plain model the state column starts at t=0 with the
/// initial state; the jump process starts at t=1 and adds indicator and
/// jump-size columns.
fn simulated_observations(
    config: &ExperimentConfig,
    sim: &SimulateSettings,
) -> Result<(Vec<f64>, String)> {
    let seed = sub_seed(config.seed, TAG_DATA);
    match sim.dgp {
        DgpKind::Model => {
            let path = ModelSpec::new(config.model)?.simulate(sim.t, seed)?;
            let mut states = String::from("t,x\n");
            for (t, x) in path.x.iter().enumerate() {
                let _ = writeln!(states, "{t},{x}");
            }
            Ok((path.y, states))
        }
        DgpKind::Svij => {
            let path = simulate_svij(&sim.svij.unwrap_or_default(), sim.t, seed)?;
            let mut states = String::from("t,x,price_jump,vol_jump,vol_jump_size\n");
            let mut sizes = path.vol_jump_sizes.iter();
            for t in 0..path.x.len() {
                let size = if path.vol_jumps[t] {
                    *sizes.next().unwrap_or(&0.0)
                } else {
                    0.0
                };
                let _ = writeln!(
                    states,
                    "{},{},{},{},{}",
                    t + 1,
                    path.x[t],
                    u8::from(path.price_jumps[t]),
                    u8::from(path.vol_jumps[t]),
                    size
                );
            }
            Ok((path.y, states))
        }
    }
}

fn stage_simulate(config: &ExperimentConfig, artifacts: &mut ArtifactSet) -> Result<()> {
    let sim = config
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("simulate stage needs a simulate block".into()))?;
    let (y, states) = simulated_observations(config, sim)?;
    let mut ycsv = String::from("t,y\n");
    for (i, v) in y.iter().enumerate() {
        let _ = writeln!(ycsv, "{},{v}", i + 1);
    }
    artifacts.write("simulated.csv", &ycsv)?;
    artifacts.write("states.csv", &states)?;
    Ok(())
}

/// Calibrate each listed filter's particle count at the configured model
/// parameters; filters run in parallel with independent streams.
fn calibrate_filters(
    config: &ExperimentConfig,
    filters: &[FilterConfig],
    ys: &[f64],
    settings: &CalibrationSettings,
) -> Result<BTreeMap<String, CalibrationResult>> {
    let kind = config.kind();
    let theta0 = theta_from_model(&ModelSpec::new(config.model)?);
    let results: Vec<(String, CalibrationResult)> = filters
        .par_iter()
        .map(|fc| {
            let fi = config
                .filters
                .iter()
                .position(|c| c.id == fc.id)
                .unwrap_or(0) as u64;
            let result = calibrate_nopt(
                fc.id,
                kind,
                ys,
                &theta0,
                settings.n_s,
                settings.r0,
                &fc.options(),
                sub_seed(config.seed, TAG_CALIBRATE + fi),
            )?;
            Ok((fc.id.to_string(), result))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().collect())
}

fn stage_calibrate(config: &ExperimentConfig, artifacts: &mut ArtifactSet) -> Result<()> {
    if config.filters.is_empty() {
        return Err(Error::Config(
            "calibrate stage needs at least one filter".into(),
        ));
    }
    let ys = stage_data(config, false)?;
    let settings = config
        .pmmh
        .as_ref()
        .map(|p| p.calibration)
        .unwrap_or_default();
    let results = calibrate_filters(config, &config.filters, &ys, &settings)?;
    artifacts.write("calibration.json", &to_pretty_json(&results)?)?;
    Ok(())
}

/// Final particle count for one filter: its fixed setting, or the
/// calibrated size. A calibrated count below the matching depth would make
/// the cyclic pairings impossible, so it is raised to the depth.
fn resolve_n(fc: &FilterConfig, calibration: &BTreeMap<String, CalibrationResult>) -> Result<usize> {
    let n = match fc.n {
        NSpec::Fixed(n) => n,
        NSpec::Keyword(_) => {
            calibration
                .get(fc.id.as_str())
                .map(|c| c.n_opt)
                .ok_or_else(|| {
                    Error::Config(format!("no calibration result for filter {}", fc.id))
                })?
        }
    };
    if fc.id == FilterId::Dpf && n < fc.match_l {
        log::warn!(
            "dpf: calibrated particle count {n} is below the matching depth {}; raising it",
            fc.match_l
        );
        return Ok(fc.match_l);
    }
    Ok(n)
}

fn stage_pmmh(config: &ExperimentConfig, artifacts: &mut ArtifactSet) -> Result<()> {
    let pmmh = config
        .pmmh
        .as_ref()
        .ok_or_else(|| Error::Config("pmmh stage needs a pmmh block".into()))?;
    if config.filters.is_empty() {
        return Err(Error::Config("pmmh stage needs at least one filter".into()));
    }
    let ys = stage_data(config, true)?;
    let kind = config.kind();
    let names = theta_names(kind);

    let to_calibrate: Vec<FilterConfig> = config
        .filters
        .iter()
        .filter(|fc| fc.n.is_calibrate())
        .copied()
        .collect();
    let calibration = if to_calibrate.is_empty() {
        BTreeMap::new()
    } else {
        calibrate_filters(config, &to_calibrate, &ys, &pmmh.calibration)?
    };

    let outputs: Vec<(String, String, Diagnostics)> = config
        .filters
        .par_iter()
        .enumerate()
        .map(|(fi, fc)| {
            let n = resolve_n(fc, &calibration)?;
            let chain = run_pmmh(
                fc.id,
                kind,
                &pmmh.prior,
                &ys,
                n,
                pmmh.mh_iters,
                pmmh.burn_in,
                &fc.options(),
                sub_seed(config.seed, TAG_PMMH + fi as u64),
            )?;
            let diag = diagnostics(&chain, n)?;
            let mut csv = Vec::new();
            chain.to_csv(names, &mut csv)?;
            let csv = String::from_utf8(csv)
                .map_err(|_| Error::Input("chain CSV is not UTF-8".into()))?;
            Ok((fc.id.to_string(), csv, diag))
        })
        .collect::<Result<_>>()?;

    let mut diags = BTreeMap::new();
    for (name, csv, diag) in outputs {
        artifacts.write(&format!("chain_{name}.csv"), &csv)?;
        diags.insert(name, diag);
    }
    artifacts.write("diagnostics.json", &to_pretty_json(&diags)?)?;
    if !calibration.is_empty() {
        artifacts.write("calibration.json", &to_pretty_json(&calibration)?)?;
    }
    Ok(())
}

fn stage_forecast(config: &ExperimentConfig, artifacts: &mut ArtifactSet) -> Result<()> {
    let fs = config
        .forecast
        .as_ref()
        .ok_or_else(|| Error::Config("forecast stage needs a forecast block".into()))?;
    let pmmh = config
        .pmmh
        .as_ref()
        .ok_or_else(|| Error::Config("forecast stage needs a pmmh block".into()))?;
    let ys = stage_data(config, true)?;
    let plan = RollingPlan {
        t_est: fs.t_est,
        n: fs.n,
        mh_iters: pmmh.mh_iters,
        burn_in: pmmh.burn_in,
        refresh_every: fs.refresh_every,
        thin: fs.thin,
        grid_points: fs.grid_points,
        grid_half_width_sds: fs.grid_half_width_sds,
    };
    let filters: Vec<(FilterId, FilterOptions)> = config
        .filters
        .iter()
        .map(|fc| (fc.id, fc.options()))
        .collect();
    let report = rolling_forecast(&ys, config.kind(), &pmmh.prior, &filters, &plan, config.seed)?;
    artifacts.write("forecast_report.json", &to_pretty_json(&report)?)?;

    let missing = |what: &str, id: FilterId| {
        Error::Input(format!("forecast report is missing {what} for {id}"))
    };
    let mut summary = String::from("filter,als,adls\n");
    for &(id, _) in &filters {
        let sc = report
            .per_filter
            .get(id.as_str())
            .ok_or_else(|| missing("scores", id))?;
        let _ = writeln!(summary, "{id},{},{}", sc.als, sc.adls);
    }
    artifacts.write("forecast_summary.csv", &summary)?;

    let horizon = ys.len() - plan.t_est;
    let mut scores = String::from("period");
    for &(id, _) in &filters {
        let _ = write!(scores, ",{id}");
    }
    scores.push('\n');
    for k in 0..horizon {
        let _ = write!(scores, "{}", k + 1);
        for &(id, _) in &filters {
            let sc = report
                .per_filter
                .get(id.as_str())
                .ok_or_else(|| missing("scores", id))?;
            let _ = write!(scores, ",{}", sc.scores[k]);
        }
        scores.push('\n');
    }
    artifacts.write("log_scores.csv", &scores)?;

    // First-period density overlays: one file per filter plus a combined
    // grid (all filters share the grid, which is built from the data
    // window, not from filter output).
    for &(id, _) in &filters {
        let pd = report
            .densities
            .get(id.as_str())
            .ok_or_else(|| missing("a density", id))?;
        let mut csv = Vec::new();
        pd.to_csv(&mut csv)?;
        let csv =
            String::from_utf8(csv).map_err(|_| Error::Input("density CSV is not UTF-8".into()))?;
        artifacts.write(&format!("density_{id}.csv"), &csv)?;
    }
    let grid = &report
        .densities
        .get(filters[0].0.as_str())
        .ok_or_else(|| missing("a density", filters[0].0))?
        .grid;
    let mut combined = String::from("z");
    for &(id, _) in &filters {
        let _ = write!(combined, ",{id}");
    }
    combined.push('\n');
    for (gi, z) in grid.iter().enumerate() {
        let _ = write!(combined, "{z}");
        for &(id, _) in &filters {
            let pd = report
                .densities
                .get(id.as_str())
                .ok_or_else(|| missing("a density", id))?;
            let _ = write!(combined, ",{}", pd.density[gi]);
        }
        combined.push('\n');
    }
    artifacts.write("densities.csv", &combined)?;
    Ok(())
}

/// Parse a chain CSV written by the pmmh stage back into a chain. Wall
/// time is not persisted, so the reloaded chain carries zero timings and
/// must not feed timing diagnostics.
pub fn read_chain_csv(path: &Path, dim: usize, burn_in: usize) -> Result<Chain> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let shape_ok = cols.len() == dim + 3
        && cols[0] == "iter"
        && cols[dim + 1] == "loglik"
        && cols[dim + 2] == "accept";
    if !shape_ok {
        return Err(Error::Data(format!(
            "{}: unexpected chain header `{header}`",
            path.display()
        )));
    }
    let mut draws = Vec::new();
    let mut logliks = Vec::new();
    let mut accepts = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(Error::Data(format!(
                "{} line {line_no}: expected {} fields, found {}",
                path.display(),
                dim + 3,
                fields.len()
            )));
        }
        let number = |raw: &str, what: &str| -> Result<f64> {
            raw.parse().map_err(|_| {
                Error::Data(format!(
                    "{} line {line_no}: unparseable {what} `{raw}`",
                    path.display()
                ))
            })
        };
        draws.push(
            fields[1..=dim]
                .iter()
                .map(|raw| number(raw, "draw"))
                .collect::<Result<Vec<f64>>>()?,
        );
        logliks.push(number(fields[dim + 1], "log-likelihood")?);
        accepts.push(match fields[dim + 2] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Data(format!(
                    "{} line {line_no}: accept flag must be 0 or 1, found `{other}`",
                    path.display()
                )))
            }
        });
    }
    if draws.is_empty() {
        return Err(Error::Data(format!("{}: no chain rows", path.display())));
    }
    if burn_in >= draws.len() {
        return Err(Error::Data(format!(
            "{}: burn-in {burn_in} leaves no post-burn draws out of {}",
            path.display(),
            draws.len()
        )));
    }
    let timings = vec![0.0; draws.len()];
    Ok(Chain {
        draws,
        logliks,
        accepts,
        burn_in,
        timings,
    })
}

/// Rebuild the posterior summary table from chains already on disk; no
/// filtering or sampling is rerun.
fn stage_report(config: &ExperimentConfig, artifacts: &mut ArtifactSet) -> Result<()> {
    let pmmh = config.pmmh.as_ref().ok_or_else(|| {
        Error::Config("report stage needs the pmmh block that produced the chains".into())
    })?;
    if config.filters.is_empty() {
        return Err(Error::Config(
            "report stage needs at least one filter".into(),
        ));
    }
    let names = theta_names(config.kind());
    let mut summary = String::from("filter,param,mean,sd,if\n");
    for fc in &config.filters {
        let path = artifacts.dir().join(format!("chain_{}.csv", fc.id));
        let chain = read_chain_csv(&path, names.len(), pmmh.burn_in)?;
        for (k, name) in names.iter().enumerate() {
            let series = chain.param_series(k);
            let (mean, var) = mean_var(&series);
            let inef = inefficiency_factor(&series)?;
            let _ = writeln!(summary, "{},{name},{mean},{},{inef}", fc.id, var.sqrt());
        }
    }
    artifacts.write("posterior_summary.csv", &summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DataSettings, PmmhSettings};
    use crate::models::{LgParams, ModelParams};
    use crate::pmmh::{CoordLaw, Prior};

    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn load_returns_single_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(dir.path(), "r.csv", "return\n0.01\n-0.02\n");
        let series = load_returns(&path).unwrap();
        assert_eq!(series.returns, vec![0.01, -0.02]);
        assert!(series.dates.is_none());
        assert_eq!(series.source, path);
    }

    #[test]
    fn load_returns_with_dates_and_order_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "r.csv",
            "date,return\n2020-01-03,0.5\n2020-01-02,-0.5\n",
        );
        // Out-of-order dates warn but still load.
        let series = load_returns(&path).unwrap();
        assert_eq!(series.returns, vec![0.5, -0.5]);
        assert_eq!(
            series.dates.as_deref(),
            Some(&["2020-01-03".to_string(), "2020-01-02".to_string()][..])
        );
    }

    #[test]
    fn load_returns_rejects_bad_rows_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let nan = write_file(dir.path(), "nan.csv", "return\n0.01\nNaN\n");
        let err = load_returns(&nan).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("line 3"), "{err}");

        let garbage = write_file(dir.path(), "bad.csv", "return\nabc\n");
        let err = load_returns(&garbage).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let empty_field = write_file(dir.path(), "empty.csv", "date,return\n2020-01-02,\n");
        let err = load_returns(&empty_field).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let no_rows = write_file(dir.path(), "none.csv", "return\n");
        assert!(load_returns(&no_rows).is_err());

        let bad_header = write_file(dir.path(), "header.csv", "ret\n0.01\n");
        let err = load_returns(&bad_header).unwrap_err();
        assert!(err.to_string().contains("expected columns"), "{err}");

        assert!(load_returns(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn bundled_fixture_loads() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sp500_synthetic.csv");
        let series = load_returns(&path).unwrap();
        assert_eq!(series.returns.len(), 754);
        let dates = series.dates.unwrap();
        assert_eq!(dates.len(), 754);
        // Dates must be in order for the bundled file.
        assert!(dates.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn artifact_staging_and_finalize() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut set = ArtifactSet::new(&out).unwrap();
        set.write("a.csv", "x\n1\n").unwrap();
        set.write("b.json", "{}\n").unwrap();
        assert!(set.write("a.csv", "again").is_err());
        assert!(out.join("a.csv.partial").exists());
        assert!(!out.join("a.csv").exists());
        assert_eq!(set.names(), ["a.csv", "b.json"]);
        let paths = set.finalize().unwrap();
        assert_eq!(paths, vec![out.join("a.csv"), out.join("b.json")]);
        assert!(!out.join("a.csv.partial").exists());
        assert_eq!(std::fs::read_to_string(out.join("a.csv")).unwrap(), "x\n1\n");
    }

    fn lg_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            seed: 4242,
            model: ModelParams::Lg(LgParams {
                sigma_eta: 0.45,
                rho: 0.4,
                sigma_v: 0.92,
            }),
            data: None,
            simulate: Some(crate::config::SimulateSettings {
                t: 40,
                dgp: DgpKind::Model,
                svij: None,
            }),
            filters: vec![FilterConfig {
                id: FilterId::Bpf,
                n: NSpec::Fixed(30),
                match_l: 1,
                sigma_points: None,
                resample: crate::filters::ResampleScheme::Multinomial,
            }],
            pmmh: Some(PmmhSettings {
                // The diagnostics pass needs at least 100 post-burn draws.
                mh_iters: 160,
                burn_in: 20,
                prior: Prior::Independent {
                    coords: vec![
                        CoordLaw::Normal { mean: -1.6, var: 1.0 },
                        CoordLaw::Normal { mean: 0.4, var: 0.25 },
                        CoordLaw::Normal { mean: -0.17, var: 1.0 },
                    ],
                },
                calibration: CalibrationSettings { n_s: 40, r0: 6 },
            }),
            forecast: None,
            output_dir: Some(dir.to_path_buf()),
            jobs: None,
        }
    }

    #[test]
    fn simulate_stage_writes_deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("one");
        let out2 = dir.path().join("two");
        let mut config = lg_config(&out1);
        let outcome = run_experiment(Command::Simulate, &config).unwrap();
        assert_eq!(outcome.dir, out1);
        let ycsv = std::fs::read_to_string(out1.join("simulated.csv")).unwrap();
        assert_eq!(ycsv.lines().count(), 41); // header + 40 rows
        assert!(out1.join("states.csv").exists());
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(out1.join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.command, "simulate");
        assert_eq!(manifest.seed, 4242);
        assert_eq!(manifest.config_sha256.len(), 64);
        assert_eq!(manifest.artifacts, ["simulated.csv", "states.csv"]);

        config.output_dir = Some(out2.clone());
        run_experiment(Command::Simulate, &config).unwrap();
        // Same seed, same bytes (the manifest differs: the output_dir is
        // part of the hashed config).
        assert_eq!(
            ycsv,
            std::fs::read_to_string(out2.join("simulated.csv")).unwrap()
        );
        assert_eq!(
            std::fs::read_to_string(out1.join("states.csv")).unwrap(),
            std::fs::read_to_string(out2.join("states.csv")).unwrap()
        );
    }

    #[test]
    fn pmmh_then_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let config = lg_config(&out);
        run_experiment(Command::Pmmh, &config).unwrap();
        assert!(out.join("chain_bpf.csv").exists());
        let diags: BTreeMap<String, Diagnostics> = serde_json::from_str(
            &std::fs::read_to_string(out.join("diagnostics.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(diags["bpf"].n_particles, 30);
        assert_eq!(diags["bpf"].inefficiency.len(), 3);
        // Fixed particle count, so no calibration artifact.
        assert!(!out.join("calibration.json").exists());

        let chain = read_chain_csv(&out.join("chain_bpf.csv"), 3, 20).unwrap();
        assert_eq!(chain.len(), 160);
        assert_eq!(chain.burn_in, 20);
        assert!(chain.logliks.iter().all(|ll| ll.is_finite()));

        run_experiment(Command::Report, &config).unwrap();
        let summary = std::fs::read_to_string(out.join("posterior_summary.csv")).unwrap();
        let mut lines = summary.lines();
        assert_eq!(lines.next(), Some("filter,param,mean,sd,if"));
        assert_eq!(summary.lines().count(), 4); // header + 3 parameters
        assert!(summary.contains("bpf,"));
    }

    #[test]
    fn calibrate_stage_emits_results() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let config = lg_config(&out);
        run_experiment(Command::Calibrate, &config).unwrap();
        let results: BTreeMap<String, CalibrationResult> = serde_json::from_str(
            &std::fs::read_to_string(out.join("calibration.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(results["bpf"].n_s, 40);
        assert_eq!(results["bpf"].r0, 6);
        assert!(results["bpf"].n_opt >= 2);
    }

    #[test]
    fn chain_csv_round_trip_is_lossless() {
        let chain = Chain {
            draws: vec![
                vec![0.1, -2.5, 1.0 / 3.0],
                vec![std::f64::consts::PI, -2.5e-17, 0.7],
            ],
            logliks: vec![-41.25, -40.75],
            accepts: vec![false, true],
            burn_in: 1,
            timings: vec![0.0, 0.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        let mut bytes = Vec::new();
        chain.to_csv(&["a", "b", "c"], &mut bytes).unwrap();
        std::fs::write(&path, &bytes).unwrap();
        let back = read_chain_csv(&path, 3, 1).unwrap();
        assert_eq!(back.draws, chain.draws);
        assert_eq!(back.logliks, chain.logliks);
        assert_eq!(back.accepts, chain.accepts);

        assert!(read_chain_csv(&path, 2, 0).is_err()); // wrong dimension
        assert!(read_chain_csv(&path, 3, 2).is_err()); // burn-in too large
    }

    #[test]
    fn run_experiment_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");

        // No output directory.
        let mut config = lg_config(&out);
        config.output_dir = None;
        assert_eq!(
            run_experiment(Command::Simulate, &config)
                .unwrap_err()
                .exit_code(),
            2
        );

        // Simulate without a simulate block.
        let mut config = lg_config(&out);
        config.simulate = None;
        config.data = Some(DataSettings {
            path: dir.path().join("absent.csv"),
        });
        assert_eq!(
            run_experiment(Command::Simulate, &config)
                .unwrap_err()
                .exit_code(),
            2
        );
        // Pmmh with a missing data file is a data error.
        assert_eq!(
            run_experiment(Command::Pmmh, &config).unwrap_err().exit_code(),
            3
        );
        // Failed stages leave no final artifacts behind.
        assert!(!out.join("manifest.json").exists());

        // Short loaded series cannot feed estimation.
        let short = write_file(dir.path(), "short.csv", "return\n0.01\n0.02\n");
        let mut config = lg_config(&out);
        config.simulate = None;
        config.data = Some(DataSettings { path: short });
        let err = run_experiment(Command::Pmmh, &config).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("at least 50"), "{err}");

        // Report before pmmh: chains are missing.
        let config = lg_config(&out);
        assert_eq!(
            run_experiment(Command::Report, &config)
                .unwrap_err()
                .exit_code(),
            3
        );
    }
}
