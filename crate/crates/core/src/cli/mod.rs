//! Command implementations behind the `hazbias` binary. Each command is a
//! plain function from parsed inputs to tables so it can be driven from
//! tests without spawning a process.

pub mod config;
pub mod dataset;
pub mod table;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::aalen::{self, AalenError, AalenFit, Coefficient};
use crate::closedform::{self, ClosedFormError};
use crate::curve::{CurveError, StepCurve};
use crate::model::{EffectSpec, ModifierDistribution};
use crate::simulator::{self, SimulationError};
use crate::stochastics::RngStream;

pub use config::{ConfigError, ScenarioConfig};
pub use dataset::{read_trial_data, write_trial_data, DataError};
pub use table::{CurveRow, CurveTable, TableError};

/// Default horizon of `curves-closed`.
pub const CLOSED_HORIZON: f64 = 4.0;
/// Default horizon of `simulate-copula`.
pub const COPULA_HORIZON: f64 = 5.0;
/// Smallest population accepted by `simulate-copula`.
pub const MIN_SIMULATION_SIZE: usize = 100;
/// Draws per random substream when sampling a population in parallel.
pub const SAMPLING_CHUNK: usize = 4096;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const DATA: i32 = 4;
    pub const TRUNCATED: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: ConfigError,
    },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("truncated: {0}")]
    Truncated(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Aalen(#[from] AalenError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Data { .. } | CliError::Aalen(_) => exit::DATA,
            CliError::Usage(_) => exit::USAGE,
            CliError::Truncated(_) => exit::TRUNCATED,
            _ => exit::RUNTIME,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Wraps configuration errors with the file they came from.
pub fn config_error(path: &Path) -> impl Fn(ConfigError) -> CliError + '_ {
    move |source| CliError::Config {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).map_err(config_error(path))
}

/// Closed-form `B(t)` (series `B`) and the reference line `g(t) = t E[U1]`
/// (series `g`) on the configured grid.
pub fn cmd_curves_closed(cfg: &ScenarioConfig, cfg_path: &Path) -> Result<CurveTable> {
    let err = config_error(cfg_path);
    let effect = cfg.effect().map_err(&err)?;
    let modifier = cfg.modifier().map_err(&err)?;
    let grid = cfg.grid(CLOSED_HORIZON).map_err(&err)?;
    let b = closedform::integrated_mchd_curve(&effect, &modifier, &grid)?;
    let g = reference_curve(&modifier, &grid)?;
    Ok(CurveTable::from_series(&[("B".into(), &b), ("g".into(), &g)])?)
}

fn reference_curve(modifier: &ModifierDistribution, grid: &[f64]) -> Result<StepCurve> {
    let values = grid.iter().map(|&t| closedform::reference_line(modifier, t)).collect();
    Ok(StepCurve::new(grid.to_vec(), values)?)
}

/// Tables produced by `simulate-copula`.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaOutput {
    /// `B(t)` per dependence setting plus the reference series `g`.
    pub integrated: CurveTable,
    /// `S1` and `S0` per dependence setting, series `<label>:S1`, `<label>:S0`.
    pub survival: CurveTable,
    /// Series whose integrand ran out of subjects at risk, with the time.
    pub truncations: Vec<(String, f64)>,
}

/// Monte Carlo `B(t)` for each dependence setting in `[copula]`. Setting `i`
/// samples from substreams starting at `i << 32`, so each series is
/// reproducible on its own and independent of the others.
pub fn cmd_simulate_copula(cfg: &ScenarioConfig, cfg_path: &Path) -> Result<CopulaOutput> {
    let err = config_error(cfg_path);
    let settings = cfg.dependence_settings().map_err(&err)?;
    let n = cfg.sample_size().map_err(&err)?;
    if n < MIN_SIMULATION_SIZE {
        return Err(err(ConfigError::Field {
            field: "simulation.n".into(),
            reason: format!("must be >= {MIN_SIMULATION_SIZE}"),
        }));
    }
    let seed = cfg.seed().map_err(&err)?;
    let grid = cfg.grid(COPULA_HORIZON).map_err(&err)?;
    let min_at_risk = cfg.min_at_risk();
    let scms = settings
        .iter()
        .map(|s| cfg.scm(s.copula).map_err(&err))
        .collect::<Result<Vec<_>>>()?;

    let runs = scms
        .par_iter()
        .enumerate()
        .map(|(i, scm)| {
            let samples = simulator::sample_population_partitioned(scm, n, seed, (i as u64) << 32, SAMPLING_CHUNK)?;
            let integrated = simulator::integrated_ohd_curve(&samples, scm, &grid, min_at_risk)?;
            let survival = simulator::survival_curves(&samples, &grid)?;
            Ok((integrated, survival))
        })
        .collect::<std::result::Result<Vec<_>, SimulationError>>()?;

    let g = reference_curve(&scms[0].modifier, &grid)?;
    let mut integrated_series: Vec<(String, &StepCurve)> = Vec::new();
    let mut survival_series: Vec<(String, &StepCurve)> = Vec::new();
    let mut truncations = Vec::new();
    for (setting, (integrated, (s1, s0))) in settings.iter().zip(&runs) {
        integrated_series.push((setting.label.clone(), &integrated.curve));
        survival_series.push((format!("{}:S1", setting.label), s1));
        survival_series.push((format!("{}:S0", setting.label), s0));
        if let Some(t) = integrated.truncated_at {
            truncations.push((setting.label.clone(), t));
        }
    }
    integrated_series.push(("g".into(), &g));
    Ok(CopulaOutput {
        integrated: CurveTable::from_series(&integrated_series)?,
        survival: CurveTable::from_series(&survival_series)?,
        truncations,
    })
}

/// Options of `fit`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitOptions {
    /// Column holding stratum labels; one fit per label.
    pub strata: Option<String>,
    /// Modifier law whose closed-form `B(t)` is added as series `expected`.
    pub overlay: Option<ModifierDistribution>,
}

/// Result of `fit`: one table per stratum (`None` when unstratified), and the
/// estimation truncation time of each.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub tables: Vec<(Option<String>, CurveTable)>,
    pub truncations: Vec<(Option<String>, f64)>,
}

impl FitOutput {
    /// All strata in one table, series prefixed with `<stratum>:`.
    pub fn combined(&self) -> Result<CurveTable> {
        if let [(None, table)] = self.tables.as_slice() {
            return Ok(table.clone());
        }
        let mut rows = Vec::new();
        let mut with_bounds = false;
        for (label, table) in &self.tables {
            with_bounds |= table.with_bounds;
            let prefix = label.as_deref().unwrap_or("");
            rows.extend(table.rows.iter().map(|r| CurveRow {
                series: Some(format!("{prefix}:{}", r.series.as_deref().unwrap_or(""))),
                ..r.clone()
            }));
        }
        rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(CurveTable {
            with_bounds,
            with_series: true,
            rows,
        })
    }
}

/// Aalen fit of a trial data file: series `treatment` (when both arms are
/// present), `intercept`, and optionally `expected`.
pub fn cmd_fit(data_path: &Path, options: &FitOptions) -> Result<FitOutput> {
    let file = std::fs::File::open(data_path).map_err(|source| CliError::Io {
        path: data_path.to_path_buf(),
        source,
    })?;
    let records =
        read_trial_data(std::io::BufReader::new(file), options.strata.as_deref()).map_err(|source| CliError::Data {
            path: data_path.to_path_buf(),
            source,
        })?;
    let fits: Vec<(Option<String>, AalenFit)> = match options.strata {
        Some(_) => aalen::fit_stratified(&records)?
            .into_iter()
            .map(|(label, fit)| (Some(label), fit))
            .collect(),
        None => vec![(None, aalen::fit(&records)?)],
    };
    let effect = EffectSpec::constant();
    let mut tables = Vec::new();
    let mut truncations = Vec::new();
    for (label, fit) in fits {
        let mut series: Vec<(String, StepCurve)> = Vec::new();
        if let Some(c) = fit.curve(Coefficient::Treatment) {
            series.push(("treatment".into(), c));
        }
        if let Some(c) = fit.curve(Coefficient::Intercept) {
            series.push(("intercept".into(), c));
        }
        if let Some(dist) = &options.overlay {
            series.push(("expected".into(), aalen::overlay_expected_curve(&fit, &effect, dist)?));
        }
        let refs: Vec<(String, &StepCurve)> = series.iter().map(|(l, c)| (l.clone(), c)).collect();
        tables.push((label.clone(), CurveTable::from_series(&refs)?));
        if let Some(t) = fit.truncation_time {
            truncations.push((label, t));
        }
    }
    Ok(FitOutput { tables, truncations })
}

/// Simulated randomized trial from the scenario, using substream 0.
pub fn cmd_generate(cfg: &ScenarioConfig, cfg_path: &Path) -> Result<Vec<simulator::TrialRecord>> {
    let err = config_error(cfg_path);
    let copula = match cfg.dependence_settings().map_err(&err)?.as_slice() {
        [one] => one.copula,
        _ => {
            return Err(err(ConfigError::Field {
                field: "copula".into(),
                reason: "generate needs a single dependence setting".into(),
            }))
        }
    };
    let scm = cfg.scm(copula).map_err(&err)?;
    let n = cfg.sample_size().map_err(&err)?;
    let treat_prob = cfg.treat_prob().map_err(&err)?;
    let censoring = cfg.censoring().map_err(&err)?;
    let mut rng = RngStream::new(cfg.seed().map_err(&err)?, 0);
    Ok(simulator::simulate_rct(&scm, n, treat_prob, censoring, &mut rng)?)
}

/// Writes `bytes` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ScenarioConfig {
        ScenarioConfig::parse(text).unwrap()
    }

    #[test]
    fn closed_curves_gamma_log2() {
        let c = cfg("[modifier]\nfamily = \"shifted-gamma\"\nk = 1\ntheta = 1\n[simulation]\ngrid_end = 2\n");
        let table = cmd_curves_closed(&c, Path::new("x.toml")).unwrap();
        let at1 = table.series("B").find(|r| (r.t - 1.0).abs() < 1e-12).unwrap();
        assert!((at1.value - 2f64.ln()).abs() < 1e-12);
        assert!(table.series("B").next().unwrap().value == 0.0);
        let g1 = table.series("g").find(|r| (r.t - 1.0).abs() < 1e-12).unwrap();
        assert!((g1.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_curves_reject_power_profile() {
        let c = cfg("[effect]\nprofile = \"power\"\nexponent = 1\n[modifier]\nfamily = \"degenerate\"\nc = 0.1\n");
        assert!(cmd_curves_closed(&c, Path::new("x.toml")).is_err());
    }

    #[test]
    fn config_errors_map_to_exit_code() {
        let c = cfg("[simulation]\nn = 10\n");
        let e = cmd_curves_closed(&c, Path::new("x.toml")).unwrap_err();
        assert_eq!(e.exit_code(), exit::CONFIG);
    }
}
