//! Laplace-transform machinery for the effect modifier and the closed-form
//! selection curves derived from it.
//!
//! With a separable effect `u1 * m(t)` and `U0 ⟂ U1`, the mean modifier among
//! survivors of the treated world is `-L'(F1) / L(F1)` where
//! `F1 = ∫_0^t m(s) ds` and `L(c) = E[exp(-c U1)]`.

use thiserror::Error;

use crate::curve::StepCurve;
use crate::model::{EffectSpec, ModifierDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("argument {c} is outside the Laplace transform domain (c > {lower_bound})")]
    Domain { c: f64, lower_bound: f64 },
    #[error("integrated effect must be finite and nonnegative, got {0}")]
    NegativeIntegratedEffect(f64),
    #[error("time must be finite and nonnegative, got {0}")]
    InvalidTime(f64),
    #[error("closed-form integrated curves need a constant effect profile, got {0}")]
    UnsupportedProfile(String),
}

pub type Result<T> = std::result::Result<T, ClosedFormError>;

/// `L(c)` together with `L'(c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacePair {
    pub value: f64,
    pub derivative: f64,
}

/// Exact Laplace transform `E[exp(-c U1)]` and its derivative in `c`.
pub fn laplace(dist: &ModifierDistribution, c: f64) -> Result<LaplacePair> {
    match *dist {
        ModifierDistribution::Bhn { p1, mu1, p2, mu2 } => {
            let e1 = (-c * mu1).exp();
            let e2 = (-c * mu2).exp();
            Ok(LaplacePair {
                value: p1 * e1 + p2 * e2 + (1.0 - p1 - p2),
                derivative: -mu1 * p1 * e1 - mu2 * p2 * e2,
            })
        }
        ModifierDistribution::ShiftedGamma { k, theta, ell_shift } => {
            let lower_bound = -1.0 / theta;
            if c.is_nan() || c <= lower_bound {
                return Err(ClosedFormError::Domain { c, lower_bound });
            }
            let base = 1.0 + theta * c;
            let value = (c * ell_shift).exp() * base.powf(-k);
            Ok(LaplacePair {
                value,
                derivative: value * (ell_shift - k * theta / base),
            })
        }
        ModifierDistribution::Degenerate { c: c0 } => {
            let value = (-c * c0).exp();
            Ok(LaplacePair {
                value,
                derivative: -c0 * value,
            })
        }
    }
}

/// Normalized tilted weights `p_j exp(-c μ_j) / L(c)` of a discrete law,
/// computed in log space so large `c` does not overflow.
fn tilted_atoms(atoms: &[(f64, f64)], c: f64) -> (Vec<f64>, f64) {
    let logs: Vec<f64> = atoms.iter().map(|&(mu, p)| p.ln() - c * mu).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    // log L(c) = max + log(total)
    (weights.into_iter().map(|w| w / total).collect(), max + total.ln())
}

/// `E[U1 | T^1 >= t] = -L'(F1) / L(F1)` with `F1 = ∫_0^t m(s) ds`.
pub fn conditional_mean_modifier(dist: &ModifierDistribution, integrated_effect: f64) -> Result<f64> {
    let f1 = integrated_effect;
    if !(f1.is_finite() && f1 >= 0.0) {
        return Err(ClosedFormError::NegativeIntegratedEffect(f1));
    }
    match *dist {
        ModifierDistribution::ShiftedGamma { k, theta, ell_shift } => Ok(theta * k / (theta * f1 + 1.0) - ell_shift),
        ModifierDistribution::Degenerate { c } => Ok(c),
        ModifierDistribution::Bhn { .. } => {
            let atoms = dist.atoms().unwrap_or_default();
            let (weights, _) = tilted_atoms(&atoms, f1);
            Ok(atoms.iter().zip(&weights).map(|(&(mu, _), w)| mu * w).sum())
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(ClosedFormError::InvalidTime(t))
    }
}

/// Causal hazard difference `m(t) E[U1]`.
pub fn chd(effect: &EffectSpec, dist: &ModifierDistribution, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(effect.time_factor(t) * dist.mean())
}

/// Marginal causal hazard difference `m(t) E[U1 | T^1 >= t]`.
pub fn mchd(effect: &EffectSpec, dist: &ModifierDistribution, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(effect.time_factor(t) * conditional_mean_modifier(dist, effect.integrated_time_factor(t))?)
}

/// `B(t) = ∫_0^t E[U1 | T^1 >= s] ds`, the expected integrated observed
/// hazard difference under a constant effect profile.
pub fn integrated_mchd(effect: &EffectSpec, dist: &ModifierDistribution, t: f64) -> Result<f64> {
    if !effect.is_constant() {
        return Err(ClosedFormError::UnsupportedProfile(effect.profile.to_string()));
    }
    check_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    match *dist {
        ModifierDistribution::ShiftedGamma { k, theta, ell_shift } => Ok(k * (theta * t).ln_1p() - ell_shift * t),
        ModifierDistribution::Degenerate { c } => Ok(c * t),
        ModifierDistribution::Bhn { p1, mu1, p2, mu2 } => {
            let direct = p1 * (-t * mu1).exp_m1() + p2 * (-t * mu2).exp_m1();
            if direct.is_finite() && direct > -0.5 {
                Ok(-direct.ln_1p())
            } else {
                // -log L(t), via the log-sum-exp form when exp overflows or the
                // neutral mass is nearly exhausted.
                let atoms = dist.atoms().unwrap_or_default();
                let (_, log_l) = tilted_atoms(&atoms, t);
                Ok(-log_l)
            }
        }
    }
}

/// Selection bias `CHD(t) - MCHD(t)`.
pub fn bias_curve(effect: &EffectSpec, dist: &ModifierDistribution, t: f64) -> Result<f64> {
    Ok(chd(effect, dist, t)? - mchd(effect, dist, t)?)
}

/// Evaluates [`integrated_mchd`] on a grid.
pub fn integrated_mchd_curve(effect: &EffectSpec, dist: &ModifierDistribution, grid: &[f64]) -> Result<StepCurve> {
    let values = grid
        .iter()
        .map(|&t| integrated_mchd(effect, dist, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepCurve::new(grid.to_vec(), values).expect("grid validated by caller"))
}

/// Reference line `g(t) = t E[U1]`.
pub fn reference_line(dist: &ModifierDistribution, t: f64) -> f64 {
    t * dist.mean()
}
