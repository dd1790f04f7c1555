//! Seeded sampling of the latent factors `(U0, U1)` and the distribution
//! functions behind it.

mod rng;
mod special;

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::model::{FrailtyDistribution, ModifierDistribution};

pub use rng::RngStream;
pub use special::{gamma_cdf, gamma_quantile, normal_cdf, normal_pdf, normal_quantile, regularized_gamma};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticsError {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

pub type Result<T> = std::result::Result<T, StochasticsError>;

/// Dependence between frailty and modifier.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CopulaSpec {
    #[default]
    Independence,
    /// Gaussian copula with latent correlation `rho`. `rho = ±1` is realized as
    /// exact (counter)monotone rank coupling.
    Gaussian { rho: f64 },
}

impl CopulaSpec {
    pub fn gaussian(rho: f64) -> Result<Self> {
        let c = CopulaSpec::Gaussian { rho };
        c.validate()?;
        Ok(c)
    }

    /// Gaussian copula with the latent correlation matching Kendall's `tau`.
    pub fn from_kendall(tau: f64) -> Result<Self> {
        Ok(CopulaSpec::Gaussian {
            rho: kendall_to_pearson(tau)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CopulaSpec::Independence => Ok(()),
            CopulaSpec::Gaussian { rho } if (-1.0..=1.0).contains(&rho) => Ok(()),
            CopulaSpec::Gaussian { rho } => Err(StochasticsError::Domain {
                what: "copula correlation",
                value: rho,
            }),
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            CopulaSpec::Independence => 0.0,
            CopulaSpec::Gaussian { rho } => rho,
        }
    }
}

/// `rho = sin(pi * tau / 2)`, the Gaussian-copula correlation with Kendall's `tau`.
pub fn kendall_to_pearson(tau: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(StochasticsError::Domain {
            what: "Kendall's tau",
            value: tau,
        });
    }
    if tau.abs() == 1.0 {
        return Ok(tau);
    }
    Ok((FRAC_PI_2 * tau).sin())
}

/// `tau = (2 / pi) asin(rho)`.
pub fn pearson_to_kendall(rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(StochasticsError::Domain {
            what: "copula correlation",
            value: rho,
        });
    }
    Ok(rho.asin() / FRAC_PI_2)
}

/// A univariate law that can be sampled by inversion.
pub trait Marginal {
    /// Generalized inverse `inf { x : F(x) >= p }` for `p` in `(0, 1)`.
    fn quantile(&self, p: f64) -> Result<f64>;
    fn cdf(&self, x: f64) -> Result<f64>;
}

impl Marginal for FrailtyDistribution {
    fn quantile(&self, p: f64) -> Result<f64> {
        match *self {
            FrailtyDistribution::Gamma { k, theta } => gamma_quantile(k, theta, p),
            FrailtyDistribution::Degenerate { c } => Ok(c),
        }
    }

    fn cdf(&self, x: f64) -> Result<f64> {
        match *self {
            FrailtyDistribution::Gamma { k, theta } => gamma_cdf(k, theta, x),
            FrailtyDistribution::Degenerate { c } => Ok(if x >= c { 1.0 } else { 0.0 }),
        }
    }
}

impl Marginal for ModifierDistribution {
    fn quantile(&self, p: f64) -> Result<f64> {
        match *self {
            ModifierDistribution::ShiftedGamma { k, theta, ell_shift } => Ok(gamma_quantile(k, theta, p)? - ell_shift),
            _ => {
                let mut atoms = self.atoms().unwrap_or_default();
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut cumulative = 0.0;
                for &(value, mass) in &atoms {
                    cumulative += mass;
                    if cumulative >= p {
                        return Ok(value);
                    }
                }
                // rounding in the masses: p lies in the top atom
                Ok(atoms.last().map(|a| a.0).unwrap_or(0.0))
            }
        }
    }

    fn cdf(&self, x: f64) -> Result<f64> {
        match *self {
            ModifierDistribution::ShiftedGamma { k, theta, ell_shift } => gamma_cdf(k, theta, x + ell_shift),
            _ => Ok(self
                .atoms()
                .unwrap_or_default()
                .iter()
                .filter(|&&(v, _)| v <= x)
                .map(|&(_, p)| p)
                .sum::<f64>()
                .min(1.0)),
        }
    }
}

// Keeps Φ(z) strictly inside (0, 1) for extreme normal draws.
fn clamp_open(u: f64) -> f64 {
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Draws `(u0, u1)` pairs with the given marginals coupled by a copula.
#[derive(Debug, Clone, Copy)]
pub struct JointSampler<'a> {
    pub copula: CopulaSpec,
    pub frailty: &'a FrailtyDistribution,
    pub modifier: &'a ModifierDistribution,
}

impl<'a> JointSampler<'a> {
    pub fn new(copula: CopulaSpec, frailty: &'a FrailtyDistribution, modifier: &'a ModifierDistribution) -> Self {
        JointSampler {
            copula,
            frailty,
            modifier,
        }
    }

    /// Copula uniforms `(v0, v1)`.
    pub fn draw_uniforms(&self, rng: &mut RngStream) -> (f64, f64) {
        match self.copula {
            CopulaSpec::Independence => (rng.uniform(), rng.uniform()),
            CopulaSpec::Gaussian { rho } => {
                let z0 = rng.standard_normal();
                let z1 = if rho.abs() == 1.0 {
                    rho * z0
                } else {
                    rho * z0 + (1.0 - rho * rho).sqrt() * rng.standard_normal()
                };
                (clamp_open(normal_cdf(z0)), clamp_open(normal_cdf(z1)))
            }
        }
    }

    pub fn draw(&self, rng: &mut RngStream) -> Result<(f64, f64)> {
        let (v0, v1) = self.draw_uniforms(rng);
        Ok((self.frailty.quantile(v0)?, self.modifier.quantile(v1)?))
    }
}

/// `n` joint draws of `(u0, u1)`.
pub fn sample_joint(
    copula: CopulaSpec,
    frailty: &FrailtyDistribution,
    modifier: &ModifierDistribution,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<(f64, f64)>> {
    copula.validate()?;
    let sampler = JointSampler::new(copula, frailty, modifier);
    (0..n).map(|_| sampler.draw(rng)).collect()
}
