//! Normal and gamma distribution functions.

use std::f64::consts::{PI, SQRT_2};

use super::StochasticsError;

const MAX_ITER: usize = 500;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

// Acklam's rational approximation, relative error about 1.15e-9.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.38357751867269e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

fn acklam_lower(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Standard normal quantile `Φ^{-1}(p)` for `p` in `(0, 1)`.
///
/// Rational approximation followed by one Halley step on the CDF. The upper
/// half is obtained by symmetry so the refinement always runs on a lower-tail
/// probability, where `erfc` keeps full relative precision.
pub fn normal_quantile(p: f64) -> Result<f64, StochasticsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StochasticsError::Domain {
            what: "normal quantile probability",
            value: p,
        });
    }
    if p > 0.5 {
        // 1 - p is exact for p in [0.5, 1)
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let x = acklam_lower(p);
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Regularized incomplete gamma functions `(P(a, x), Q(a, x))`.
///
/// Series for `x < a + 1`, Lentz continued fraction otherwise.
pub fn regularized_gamma(a: f64, x: f64) -> Result<(f64, f64), StochasticsError> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(StochasticsError::Domain {
            what: "incomplete gamma shape",
            value: a,
        });
    }
    if x.is_nan() || x < 0.0 {
        return Err(StochasticsError::Domain {
            what: "incomplete gamma argument",
            value: x,
        });
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x == f64::INFINITY {
        return Ok((1.0, 0.0));
    }
    let log_prefactor = -x + a * x.ln() - libm::lgamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON {
                let p = (log_prefactor.exp() * sum).min(1.0);
                return Ok((p, 1.0 - p));
            }
        }
        Err(StochasticsError::NoConvergence("incomplete gamma series"))
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                let q = (log_prefactor.exp() * h).min(1.0);
                return Ok((1.0 - q, q));
            }
        }
        Err(StochasticsError::NoConvergence("incomplete gamma continued fraction"))
    }
}

/// CDF of `Gamma(k, theta)` (shape, scale).
pub fn gamma_cdf(k: f64, theta: f64, x: f64) -> Result<f64, StochasticsError> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(regularized_gamma(k, x / theta)?.0)
}

/// Quantile of `Gamma(k, theta)` (shape, scale).
///
/// `k = 1` uses the exponential closed form; otherwise bracketed Newton on the
/// regularized incomplete gamma function, working on whichever tail is
/// smaller.
pub fn gamma_quantile(k: f64, theta: f64, p: f64) -> Result<f64, StochasticsError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(StochasticsError::Domain {
            what: "gamma shape",
            value: k,
        });
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(StochasticsError::Domain {
            what: "gamma scale",
            value: theta,
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(StochasticsError::Domain {
            what: "gamma quantile probability",
            value: p,
        });
    }
    if k == 1.0 {
        return Ok(-theta * (-p).ln_1p());
    }
    Ok(theta * standard_gamma_quantile(k, p)?)
}

fn standard_gamma_quantile(k: f64, p: f64) -> Result<f64, StochasticsError> {
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    // signed residual, increasing in x
    let residual = |x: f64| -> Result<f64, StochasticsError> {
        let (lo, hi) = regularized_gamma(k, x)?;
        Ok(if upper { target - hi } else { lo - target })
    };
    let log_density = |x: f64| (k - 1.0) * x.ln() - x - libm::lgamma(k);

    // Wilson-Hilferty start, falling back to the small-x expansion.
    let z = normal_quantile(p)?;
    let wh = k * (1.0 - 1.0 / (9.0 * k) + z / (3.0 * k.sqrt())).powi(3);
    let small = ((p.ln() + libm::lgamma(k + 1.0)) / k).exp();
    let mut x = if wh > 0.0 && p > 0.05 {
        wh
    } else {
        small.max(f64::MIN_POSITIVE)
    };

    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while residual(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(StochasticsError::NoConvergence("gamma quantile bracket"));
        }
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..MAX_ITER {
        let f = residual(x)?;
        if f == 0.0 || f.abs() < 1e-15 * target.max(1e-300) {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = f / log_density(x).exp();
        let next = x - step;
        x = if next.is_finite() && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(x);
        }
    }
    Ok(x)
}
