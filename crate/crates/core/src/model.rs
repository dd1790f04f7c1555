//! Structural hazard model: baseline and effect families, individual hazards,
//! cumulative hazards and their inverse.
//!
//! The individual hazard in world `a` is
//! `f0(t, u0) + f1(t, u1, a)` with `f0(t, u0) = ell + u0 * t^q / d` and the
//! separable effect `f1(t, u1, a) = a * u1 * m(t)`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::stochastics::CopulaSpec;

/// Hazards below this (negative) value are treated as genuine violations
/// rather than rounding noise.
const NEGATIVE_HAZARD_SLACK: f64 = 1e-12;

/// Absolute tolerance on `Λ(t*) - target` used by the inversion.
pub const INVERSION_TOLERANCE: f64 = 1e-10;

/// Iteration budget for the safeguarded Newton inversion.
pub const INVERSION_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("hazard is negative ({value}) at t = {t}")]
    NegativeHazard { t: f64, value: f64 },
    #[error(
        "hazard positivity violated: baseline floor {floor} plus smallest modifier value {modifier_min} is negative"
    )]
    PositivityViolated { floor: f64, modifier_min: f64 },
    #[error("effect profile {profile} requires a nonnegative modifier support, smallest value is {modifier_min}")]
    ProfileNeedsNonnegativeModifier { profile: String, modifier_min: f64 },
    #[error("time must be finite and nonnegative, got {0}")]
    InvalidTime(f64),
    #[error("cumulative hazard target must be finite and nonnegative, got {0}")]
    InvalidTarget(f64),
}

pub type Result<T> = std::result::Result<T, ModelError>;

fn check(name: &'static str, ok: bool, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: reason.into(),
        })
    }
}

/// Exposure level of a potential-outcome world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn indicator(self) -> f64 {
        match self {
            Arm::Control => 0.0,
            Arm::Treated => 1.0,
        }
    }

    pub fn from_indicator(a: u8) -> Option<Arm> {
        match a {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }
}

/// Baseline hazard `f0(t, u0) = ell + u0 * t^power / scale_div`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSpec {
    pub ell: f64,
    pub power: f64,
    pub scale_div: f64,
}

impl BaselineSpec {
    pub fn new(ell: f64, power: f64, scale_div: f64) -> Result<Self> {
        let spec = BaselineSpec { ell, power, scale_div };
        spec.validate()?;
        Ok(spec)
    }

    /// `ell + u0 * t^2`, the baseline of the dependent-modifier experiments.
    pub fn quadratic(ell: f64) -> Self {
        BaselineSpec {
            ell,
            power: 2.0,
            scale_div: 1.0,
        }
    }

    /// `ell + u0 * t^2 / 20`, the damped variant.
    pub fn damped_quadratic(ell: f64) -> Self {
        BaselineSpec {
            ell,
            power: 2.0,
            scale_div: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(
            "ell",
            self.ell.is_finite() && self.ell >= 0.0,
            format!("must be finite and >= 0, got {}", self.ell),
        )?;
        // A negative power would put an infinite discontinuity at t = 0.
        check(
            "power",
            self.power.is_finite() && self.power >= 0.0,
            format!("must be finite and >= 0, got {}", self.power),
        )?;
        check(
            "scale_div",
            self.scale_div.is_finite() && self.scale_div > 0.0,
            format!("must be finite and > 0, got {}", self.scale_div),
        )
    }

    /// `t^q / d`, the multiplier of the frailty.
    pub fn frailty_factor(&self, t: f64) -> f64 {
        t.powf(self.power) / self.scale_div
    }

    pub fn eval(&self, t: f64, u0: f64) -> f64 {
        self.ell + u0 * self.frailty_factor(t)
    }

    /// Infimum over `t >= 0` of `f0(t, u0)`.
    pub fn floor(&self, u0: f64) -> f64 {
        if self.power == 0.0 {
            self.ell + u0 / self.scale_div
        } else {
            self.ell + (u0 / self.scale_div).min(0.0)
        }
    }
}

/// Time profile `m(t)` of the separable effect `f1(t, u1, 1) = u1 * m(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EffectProfile {
    /// `m(t) = 1`.
    #[default]
    Constant,
    /// `m(t) = t^exponent`. Closed-form integrated curves are not available
    /// for this profile; it is handled by the Monte Carlo path.
    Power { exponent: f64 },
}

impl fmt::Display for EffectProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectProfile::Constant => write!(f, "constant"),
            EffectProfile::Power { exponent } => write!(f, "power({exponent})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EffectSpec {
    pub profile: EffectProfile,
}

impl EffectSpec {
    pub fn constant() -> Self {
        EffectSpec {
            profile: EffectProfile::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.profile {
            EffectProfile::Constant => Ok(()),
            EffectProfile::Power { exponent } => check(
                "effect.exponent",
                exponent.is_finite() && exponent >= 0.0,
                format!("must be finite and >= 0, got {exponent}"),
            ),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.profile, EffectProfile::Constant)
    }

    /// `m(t)`.
    pub fn time_factor(&self, t: f64) -> f64 {
        match self.profile {
            EffectProfile::Constant => 1.0,
            EffectProfile::Power { exponent } => t.powf(exponent),
        }
    }

    /// `∫_0^t m(s) ds`.
    pub fn integrated_time_factor(&self, t: f64) -> f64 {
        match self.profile {
            EffectProfile::Constant => t,
            EffectProfile::Power { exponent } => t.powf(exponent + 1.0) / (exponent + 1.0),
        }
    }

    /// `f1(t, u1, a)`; zero in the control world.
    pub fn eval(&self, t: f64, u1: f64, arm: Arm) -> f64 {
        arm.indicator() * u1 * self.time_factor(t)
    }
}

/// Law of the effect modifier `U1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModifierDistribution {
    /// Benefit-harm-neutral three-point law: mass `p1` at `mu1 <= 0`,
    /// `p2` at `mu2 >= 0`, the remainder at 0.
    Bhn {
        p1: f64,
        mu1: f64,
        p2: f64,
        mu2: f64,
    },
    /// `U1 + ell_shift ~ Gamma(k, theta)` (shape, scale).
    ShiftedGamma {
        k: f64,
        theta: f64,
        ell_shift: f64,
    },
    Degenerate {
        c: f64,
    },
}

impl ModifierDistribution {
    pub fn bhn(p1: f64, mu1: f64, p2: f64, mu2: f64) -> Result<Self> {
        let d = ModifierDistribution::Bhn { p1, mu1, p2, mu2 };
        d.validate()?;
        Ok(d)
    }

    pub fn shifted_gamma(k: f64, theta: f64, ell_shift: f64) -> Result<Self> {
        let d = ModifierDistribution::ShiftedGamma { k, theta, ell_shift };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModifierDistribution::Bhn { p1, mu1, p2, mu2 } => {
                check(
                    "p1",
                    (0.0..=1.0).contains(&p1),
                    format!("must be a probability, got {p1}"),
                )?;
                check(
                    "p2",
                    (0.0..=1.0).contains(&p2),
                    format!("must be a probability, got {p2}"),
                )?;
                check(
                    "p1 + p2",
                    p1 + p2 <= 1.0 + 1e-12,
                    format!("must not exceed 1, got {}", p1 + p2),
                )?;
                check(
                    "mu1",
                    mu1.is_finite() && mu1 <= 0.0,
                    format!("must be finite and <= 0, got {mu1}"),
                )?;
                check(
                    "mu2",
                    mu2.is_finite() && mu2 >= 0.0,
                    format!("must be finite and >= 0, got {mu2}"),
                )
            }
            ModifierDistribution::ShiftedGamma { k, theta, ell_shift } => {
                check(
                    "k",
                    k.is_finite() && k > 0.0,
                    format!("must be finite and > 0, got {k}"),
                )?;
                check(
                    "theta",
                    theta.is_finite() && theta > 0.0,
                    format!("must be finite and > 0, got {theta}"),
                )?;
                check(
                    "ell_shift",
                    ell_shift.is_finite(),
                    format!("must be finite, got {ell_shift}"),
                )
            }
            ModifierDistribution::Degenerate { c } => check("c", c.is_finite(), format!("must be finite, got {c}")),
        }
    }

    /// Support points with positive mass, as `(value, probability)`, for the
    /// discrete families. Atoms at equal values are not merged.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            ModifierDistribution::Bhn { p1, mu1, p2, mu2 } => {
                let neutral = (1.0 - p1 - p2).max(0.0);
                Some(
                    [(mu1, p1), (0.0, neutral), (mu2, p2)]
                        .into_iter()
                        .filter(|&(_, p)| p > 0.0)
                        .collect(),
                )
            }
            ModifierDistribution::Degenerate { c } => Some(vec![(c, 1.0)]),
            ModifierDistribution::ShiftedGamma { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ModifierDistribution::Bhn { p1, mu1, p2, mu2 } => p1 * mu1 + p2 * mu2,
            ModifierDistribution::ShiftedGamma { k, theta, ell_shift } => k * theta - ell_shift,
            ModifierDistribution::Degenerate { c } => c,
        }
    }

    /// Infimum of the support.
    pub fn support_min(&self) -> f64 {
        match *self {
            ModifierDistribution::ShiftedGamma { ell_shift, .. } => -ell_shift,
            _ => self
                .atoms()
                .unwrap_or_default()
                .iter()
                .map(|&(v, _)| v)
                .fold(f64::INFINITY, f64::min),
        }
    }
}

impl fmt::Display for ModifierDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModifierDistribution::Bhn { p1, mu1, p2, mu2 } => write!(f, "bhn:{p1},{mu1},{p2},{mu2}"),
            ModifierDistribution::ShiftedGamma { k, theta, ell_shift } => {
                write!(f, "shifted-gamma:{k},{theta},{ell_shift}")
            }
            ModifierDistribution::Degenerate { c } => write!(f, "degenerate:{c}"),
        }
    }
}

/// Parses the compact form used on the command line:
/// `bhn:p1,mu1,p2,mu2`, `shifted-gamma:k,theta,ell` or `degenerate:c`.
impl FromStr for ModifierDistribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (family, params) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `family:params`, got `{s}`"))?;
        let values = params
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad number `{v}`: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let arity = |n: usize| {
            if values.len() == n {
                Ok(())
            } else {
                Err(format!("`{family}` takes {n} parameters, got {}", values.len()))
            }
        };
        let dist = match family.trim() {
            "bhn" => {
                arity(4)?;
                ModifierDistribution::Bhn {
                    p1: values[0],
                    mu1: values[1],
                    p2: values[2],
                    mu2: values[3],
                }
            }
            "shifted-gamma" => {
                arity(3)?;
                ModifierDistribution::ShiftedGamma {
                    k: values[0],
                    theta: values[1],
                    ell_shift: values[2],
                }
            }
            "degenerate" => {
                arity(1)?;
                ModifierDistribution::Degenerate { c: values[0] }
            }
            other => return Err(format!("unknown modifier family `{other}`")),
        };
        dist.validate().map_err(|e| e.to_string())?;
        Ok(dist)
    }
}

/// Law of the frailty `U0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrailtyDistribution {
    /// Shape `k`, scale `theta`.
    Gamma {
        k: f64,
        theta: f64,
    },
    Degenerate {
        c: f64,
    },
}

impl FrailtyDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FrailtyDistribution::Gamma { k, theta } => {
                check(
                    "frailty.k",
                    k.is_finite() && k > 0.0,
                    format!("must be finite and > 0, got {k}"),
                )?;
                check(
                    "frailty.theta",
                    theta.is_finite() && theta > 0.0,
                    format!("must be finite and > 0, got {theta}"),
                )
            }
            FrailtyDistribution::Degenerate { c } => check(
                "frailty.c",
                c.is_finite() && c >= 0.0,
                format!("must be finite and >= 0, got {c}"),
            ),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            FrailtyDistribution::Gamma { k, theta } => k * theta,
            FrailtyDistribution::Degenerate { c } => c,
        }
    }

    pub fn support_min(&self) -> f64 {
        match *self {
            FrailtyDistribution::Gamma { .. } => 0.0,
            FrailtyDistribution::Degenerate { c } => c,
        }
    }
}

/// Full parameterization of the structural model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScmSpec {
    pub baseline: BaselineSpec,
    pub effect: EffectSpec,
    pub modifier: ModifierDistribution,
    pub frailty: FrailtyDistribution,
    pub dependence: CopulaSpec,
}

impl ScmSpec {
    /// Builds and validates a specification, including joint hazard positivity.
    pub fn new(
        baseline: BaselineSpec,
        effect: EffectSpec,
        modifier: ModifierDistribution,
        frailty: FrailtyDistribution,
        dependence: CopulaSpec,
    ) -> Result<Self> {
        let spec = ScmSpec {
            baseline,
            effect,
            modifier,
            frailty,
            dependence,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        self.effect.validate()?;
        self.modifier.validate()?;
        self.frailty.validate()?;
        self.dependence.validate().map_err(|e| ModelError::InvalidParameter {
            name: "dependence",
            reason: e.to_string(),
        })?;

        let modifier_min = self.modifier.support_min();
        match self.effect.profile {
            EffectProfile::Constant | EffectProfile::Power { exponent: 0.0 } => {
                // inf over t and u0 of f0 must absorb the most harmful-to-positivity modifier value.
                let floor = self.baseline.floor(self.frailty.support_min());
                if floor + modifier_min < -NEGATIVE_HAZARD_SLACK {
                    return Err(ModelError::PositivityViolated { floor, modifier_min });
                }
            }
            EffectProfile::Power { .. } => {
                if modifier_min < 0.0 {
                    return Err(ModelError::ProfileNeedsNonnegativeModifier {
                        profile: self.effect.profile.to_string(),
                        modifier_min,
                    });
                }
            }
        }
        Ok(())
    }

    /// `λ^a(t) = f0(t, u0) + f1(t, u1, a)`.
    pub fn hazard(&self, u0: f64, u1: f64, arm: Arm, t: f64) -> Result<f64> {
        check_time(t)?;
        let value = self.baseline.eval(t, u0) + self.effect.eval(t, u1, arm);
        if value < -NEGATIVE_HAZARD_SLACK || value.is_nan() {
            return Err(ModelError::NegativeHazard { t, value });
        }
        Ok(value.max(0.0))
    }

    /// `Λ^a(t) = ∫_0^t λ^a(s) ds`, in closed form.
    pub fn cumulative_hazard(&self, u0: f64, u1: f64, arm: Arm, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.power_sum(u0, u1, arm)?.eval(t))
    }

    /// Smallest `t` with `Λ^a(t) = target`.
    ///
    /// Returns `f64::INFINITY` when the cumulative hazard never reaches the
    /// target, which happens only when every hazard component is zero.
    pub fn invert_cumulative_hazard(&self, u0: f64, u1: f64, arm: Arm, target: f64) -> Result<f64> {
        if !(target.is_finite() && target >= 0.0) {
            return Err(ModelError::InvalidTarget(target));
        }
        Ok(self.power_sum(u0, u1, arm)?.invert(target))
    }

    /// Cumulative hazard written as `Σ c_i t^{e_i}` with every `e_i >= 1`.
    fn power_sum(&self, u0: f64, u1: f64, arm: Arm) -> Result<PowerSum> {
        let b = &self.baseline;
        let a = arm.indicator();
        let mut sum = PowerSum::default();
        sum.push(b.ell, 1.0);
        sum.push(u0 / ((b.power + 1.0) * b.scale_div), b.power + 1.0);
        match self.effect.profile {
            EffectProfile::Constant => sum.push(a * u1, 1.0),
            EffectProfile::Power { exponent } => sum.push(a * u1 / (exponent + 1.0), exponent + 1.0),
        }
        sum.normalize()?;
        Ok(sum)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidTime(t))
    }
}

/// At most three power terms, merged by exponent.
#[derive(Debug, Default, Clone, Copy)]
struct PowerSum {
    terms: [(f64, f64); 3],
    len: usize,
}

impl PowerSum {
    fn push(&mut self, coef: f64, exponent: f64) {
        if let Some(term) = self.terms[..self.len].iter_mut().find(|(_, e)| *e == exponent) {
            term.0 += coef;
        } else {
            self.terms[self.len] = (coef, exponent);
            self.len += 1;
        }
    }

    fn terms(&self) -> &[(f64, f64)] {
        &self.terms[..self.len]
    }

    /// Rejects negative coefficients (a hazard that goes negative near 0 or
    /// infinity) and clears rounding-level ones.
    fn normalize(&mut self) -> Result<()> {
        for term in self.terms[..self.len].iter_mut() {
            if term.0 < -NEGATIVE_HAZARD_SLACK || term.0.is_nan() {
                return Err(ModelError::NegativeHazard {
                    t: if term.1 > 1.0 { f64::INFINITY } else { 0.0 },
                    value: term.0,
                });
            }
            term.0 = term.0.max(0.0);
        }
        Ok(())
    }

    fn eval(&self, t: f64) -> f64 {
        self.terms().iter().map(|&(c, e)| c * t.powf(e)).sum()
    }

    fn derivative(&self, t: f64) -> f64 {
        self.terms().iter().map(|&(c, e)| c * e * t.powf(e - 1.0)).sum()
    }

    fn invert(&self, target: f64) -> f64 {
        if target == 0.0 {
            return 0.0;
        }
        let active: Vec<(f64, f64)> = self.terms().iter().copied().filter(|&(c, _)| c > 0.0).collect();
        match active.as_slice() {
            [] => f64::INFINITY,
            [(c, e)] => (target / c).powf(1.0 / e),
            _ => {
                // Each term alone overshoots, so the smallest single-term root
                // bounds the answer from above.
                let mut hi = active
                    .iter()
                    .map(|&(c, e)| (target / c).powf(1.0 / e))
                    .fold(f64::INFINITY, f64::min);
                let mut lo = 0.0;
                let mut t = hi;
                for _ in 0..INVERSION_MAX_ITER {
                    let f = self.eval(t) - target;
                    if f.abs() <= INVERSION_TOLERANCE * 1e-3 {
                        return t;
                    }
                    if f > 0.0 {
                        hi = t;
                    } else {
                        lo = t;
                    }
                    let slope = self.derivative(t);
                    let newton = t - f / slope;
                    t = if slope > 0.0 && newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                    if hi - lo <= f64::EPSILON * hi {
                        break;
                    }
                }
                t
            }
        }
    }
}
