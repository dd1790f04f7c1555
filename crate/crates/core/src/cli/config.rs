//! Scenario configuration files (TOML).
//!
//! ```toml
//! [baseline]
//! ell = 0.0
//! power = 2.0
//! scale_div = 1.0
//!
//! [modifier]
//! family = "shifted-gamma"   # or "bhn", "degenerate"
//! k = 1.0
//! theta = 1.0
//! ell_shift = 0.0
//!
//! [frailty]
//! family = "gamma"           # or "degenerate"
//! k = 1.0
//! theta = 1.0
//!
//! [copula]
//! kind = "gaussian"          # or "independence"
//! tau = [-1, -0.5, 0, 0.5, 1]
//!
//! [simulation]
//! n = 10000
//! seed = 1
//! grid_start = 0.0
//! grid_end = 5.0
//! grid_step = 0.1
//! ```
//!
//! Optional sections: `[effect]` (`profile = "constant" | "power"`,
//! `exponent`), `[trial]` (`treat_prob`, `admin_time`, `censoring_rate`) and
//! `[output]` (`path`). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::curve::uniform_grid;
use crate::model::{
    BaselineSpec, EffectProfile, EffectSpec, FrailtyDistribution, ModelError, ModifierDistribution, ScmSpec,
};
use crate::simulator::{Censoring, DEFAULT_MIN_AT_RISK};
use crate::stochastics::{kendall_to_pearson, CopulaSpec};

/// Environment variable consulted when the configuration carries no seed.
pub const SEED_ENV: &str = "HAZBIAS_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
}

fn field_error(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

fn model_error(section: &str, e: ModelError) -> ConfigError {
    match e {
        ModelError::InvalidParameter { name, reason } => field_error(format!("{section}.{name}"), reason),
        other => field_error(section, other.to_string()),
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(default)]
    pub ell: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_scale_div")]
    pub scale_div: f64,
}

fn default_power() -> f64 {
    2.0
}

fn default_scale_div() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EffectSection {
    pub profile: String,
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModifierSection {
    pub family: String,
    pub p1: Option<f64>,
    pub mu1: Option<f64>,
    pub p2: Option<f64>,
    pub mu2: Option<f64>,
    pub k: Option<f64>,
    pub theta: Option<f64>,
    pub ell_shift: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FrailtySection {
    pub family: String,
    pub k: Option<f64>,
    pub theta: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CopulaSection {
    pub kind: String,
    pub tau: Option<OneOrMany>,
    pub rho: Option<OneOrMany>,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub grid_start: Option<f64>,
    pub grid_end: Option<f64>,
    pub grid_step: Option<f64>,
    pub min_at_risk: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct TrialSection {
    pub treat_prob: Option<f64>,
    pub admin_time: Option<f64>,
    pub censoring_rate: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
}

/// A parsed scenario document. Sections are validated lazily so that a
/// command only requires the sections it uses.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub baseline: Option<BaselineSection>,
    pub effect: Option<EffectSection>,
    pub modifier: Option<ModifierSection>,
    pub frailty: Option<FrailtySection>,
    pub copula: Option<CopulaSection>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub trial: TrialSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// One dependence setting of a copula sweep, with its series label.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceSetting {
    pub label: String,
    pub copula: CopulaSpec,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn baseline(&self) -> Result<BaselineSpec, ConfigError> {
        let b = self.baseline.as_ref().ok_or(ConfigError::MissingSection("baseline"))?;
        BaselineSpec::new(b.ell, b.power, b.scale_div).map_err(|e| model_error("baseline", e))
    }

    pub fn effect(&self) -> Result<EffectSpec, ConfigError> {
        let Some(e) = &self.effect else {
            return Ok(EffectSpec::constant());
        };
        let profile = match e.profile.as_str() {
            "constant" => {
                if e.exponent.is_some() {
                    return Err(field_error("effect.exponent", "not used by the constant profile"));
                }
                EffectProfile::Constant
            }
            "power" => EffectProfile::Power {
                exponent: e
                    .exponent
                    .ok_or_else(|| field_error("effect.exponent", "required for the power profile"))?,
            },
            other => return Err(field_error("effect.profile", format!("unknown profile `{other}`"))),
        };
        let spec = EffectSpec { profile };
        spec.validate().map_err(|e| model_error("effect", e))?;
        Ok(spec)
    }

    pub fn modifier(&self) -> Result<ModifierDistribution, ConfigError> {
        let m = self.modifier.as_ref().ok_or(ConfigError::MissingSection("modifier"))?;
        let allowed: &[&str] = match m.family.as_str() {
            "bhn" => &["p1", "mu1", "p2", "mu2"],
            "shifted-gamma" => &["k", "theta", "ell_shift"],
            "degenerate" => &["c"],
            other => return Err(field_error("modifier.family", format!("unknown family `{other}`"))),
        };
        let present = [
            ("p1", m.p1),
            ("mu1", m.mu1),
            ("p2", m.p2),
            ("mu2", m.mu2),
            ("k", m.k),
            ("theta", m.theta),
            ("ell_shift", m.ell_shift),
            ("c", m.c),
        ];
        for (name, value) in present {
            if value.is_some() && !allowed.contains(&name) {
                return Err(field_error(
                    format!("modifier.{name}"),
                    format!("not a parameter of family `{}`", m.family),
                ));
            }
        }
        let req = |name: &str, v: Option<f64>| v.ok_or_else(|| field_error(format!("modifier.{name}"), "required"));
        let dist = match m.family.as_str() {
            "bhn" => ModifierDistribution::Bhn {
                p1: req("p1", m.p1)?,
                mu1: req("mu1", m.mu1)?,
                p2: req("p2", m.p2)?,
                mu2: req("mu2", m.mu2)?,
            },
            "shifted-gamma" => ModifierDistribution::ShiftedGamma {
                k: req("k", m.k)?,
                theta: req("theta", m.theta)?,
                ell_shift: m.ell_shift.unwrap_or(0.0),
            },
            _ => ModifierDistribution::Degenerate { c: req("c", m.c)? },
        };
        dist.validate().map_err(|e| model_error("modifier", e))?;
        Ok(dist)
    }

    pub fn frailty(&self) -> Result<FrailtyDistribution, ConfigError> {
        let f = self.frailty.as_ref().ok_or(ConfigError::MissingSection("frailty"))?;
        let dist = match f.family.as_str() {
            "gamma" => {
                if f.c.is_some() {
                    return Err(field_error("frailty.c", "not a parameter of family `gamma`"));
                }
                FrailtyDistribution::Gamma {
                    k: f.k.ok_or_else(|| field_error("frailty.k", "required"))?,
                    theta: f.theta.ok_or_else(|| field_error("frailty.theta", "required"))?,
                }
            }
            "degenerate" => {
                if f.k.is_some() || f.theta.is_some() {
                    return Err(field_error("frailty", "family `degenerate` takes only `c`"));
                }
                FrailtyDistribution::Degenerate {
                    c: f.c.ok_or_else(|| field_error("frailty.c", "required"))?,
                }
            }
            other => return Err(field_error("frailty.family", format!("unknown family `{other}`"))),
        };
        dist.validate().map_err(|e| model_error("frailty", e))?;
        Ok(dist)
    }

    /// The dependence settings listed in `[copula]`; independence when the
    /// section is absent.
    pub fn dependence_settings(&self) -> Result<Vec<DependenceSetting>, ConfigError> {
        let Some(c) = &self.copula else {
            return Ok(vec![DependenceSetting {
                label: "independence".into(),
                copula: CopulaSpec::Independence,
            }]);
        };
        match c.kind.as_str() {
            "independence" => {
                if c.tau.is_some() || c.rho.is_some() {
                    return Err(field_error("copula", "independence takes neither tau nor rho"));
                }
                Ok(vec![DependenceSetting {
                    label: "independence".into(),
                    copula: CopulaSpec::Independence,
                }])
            }
            "gaussian" => {
                let (name, values) = match (&c.tau, &c.rho) {
                    (Some(t), None) => ("tau", t.to_vec()),
                    (None, Some(r)) => ("rho", r.to_vec()),
                    _ => return Err(field_error("copula", "exactly one of `tau` or `rho` must be given")),
                };
                if values.is_empty() {
                    return Err(field_error(format!("copula.{name}"), "empty list"));
                }
                values
                    .into_iter()
                    .map(|v| {
                        let rho = if name == "tau" {
                            kendall_to_pearson(v).map_err(|e| field_error("copula.tau", e.to_string()))?
                        } else {
                            v
                        };
                        let copula = CopulaSpec::gaussian(rho)
                            .map_err(|e| field_error(format!("copula.{name}"), e.to_string()))?;
                        Ok(DependenceSetting {
                            label: format!("{name}={v}"),
                            copula,
                        })
                    })
                    .collect()
            }
            other => Err(field_error("copula.kind", format!("unknown kind `{other}`"))),
        }
    }

    /// Validated structural model for one dependence setting.
    pub fn scm(&self, dependence: CopulaSpec) -> Result<ScmSpec, ConfigError> {
        ScmSpec::new(
            self.baseline()?,
            self.effect()?,
            self.modifier()?,
            self.frailty()?,
            dependence,
        )
        .map_err(|e| model_error("scenario", e))
    }

    pub fn sample_size(&self) -> Result<usize, ConfigError> {
        let n = self.simulation.n.unwrap_or(10_000);
        if n == 0 {
            return Err(field_error("simulation.n", "must be >= 1"));
        }
        Ok(n)
    }

    /// Seed from the configuration, else from `HAZBIAS_SEED`, else 0.
    pub fn seed(&self) -> Result<u64, ConfigError> {
        if let Some(seed) = self.simulation.seed {
            return Ok(seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| field_error(SEED_ENV, format!("not an unsigned integer: `{v}`"))),
            Err(_) => Ok(0),
        }
    }

    pub fn min_at_risk(&self) -> usize {
        self.simulation.min_at_risk.unwrap_or(DEFAULT_MIN_AT_RISK)
    }

    /// Grid from `[simulation]`, with the command's default horizon.
    pub fn grid(&self, default_end: f64) -> Result<Vec<f64>, ConfigError> {
        let start = self.simulation.grid_start.unwrap_or(0.0);
        let end = self.simulation.grid_end.unwrap_or(default_end);
        let step = self.simulation.grid_step.unwrap_or(0.1);
        if !(start.is_finite() && start >= 0.0) {
            return Err(field_error("simulation.grid_start", "must be finite and >= 0"));
        }
        if !(end.is_finite() && end >= start) {
            return Err(field_error("simulation.grid_end", "must be finite and >= grid_start"));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(field_error("simulation.grid_step", "must be finite and > 0"));
        }
        Ok(uniform_grid(start, end, step))
    }

    pub fn treat_prob(&self) -> Result<f64, ConfigError> {
        let p = self.trial.treat_prob.unwrap_or(0.5);
        if !(p > 0.0 && p < 1.0) {
            return Err(field_error("trial.treat_prob", "must lie in (0, 1)"));
        }
        Ok(p)
    }

    pub fn censoring(&self) -> Result<Option<Censoring>, ConfigError> {
        match (self.trial.admin_time, self.trial.censoring_rate) {
            (Some(_), Some(_)) => Err(field_error(
                "trial",
                "give at most one of `admin_time` or `censoring_rate`",
            )),
            (Some(time), None) if time > 0.0 && time.is_finite() => Ok(Some(Censoring::Administrative { time })),
            (Some(_), None) => Err(field_error("trial.admin_time", "must be finite and > 0")),
            (None, Some(rate)) if rate > 0.0 && rate.is_finite() => Ok(Some(Censoring::Exponential { rate })),
            (None, Some(_)) => Err(field_error("trial.censoring_rate", "must be finite and > 0")),
            (None, None) => Ok(None),
        }
    }
}
