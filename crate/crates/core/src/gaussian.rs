//! Scalar Gaussian beliefs and the special functions shared by every other module.
//!
//! Arithmetic on Gaussians is carried out in natural parameters
//! (precision `1/v`, shift `m/v`), so an infinite variance is simply precision
//! zero and acts as the identity under multiplication and division.

use std::f64::consts::{LN_2, PI, SQRT_2};

use libm::erfc;

use crate::error::{Result, VepError};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this point the normal cdf is evaluated through the Mills ratio.
const TAIL_SWITCH: f64 = -5.0;

/// Anything exposing natural parameters: beliefs and (possibly improper) sites.
pub trait NaturalParams {
    fn precision(&self) -> f64;
    /// Precision times mean.
    fn shift(&self) -> f64;
}

/// A scalar Gaussian belief `N(mean, variance)`.
///
/// Variance is strictly positive or `+inf` (vacuous). A vacuous belief stores
/// mean 0; its mean carries no information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1D {
    mean: f64,
    variance: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        let ok = (variance > 0.0 && variance.is_finite() && mean.is_finite())
            || (variance == f64::INFINITY && !mean.is_nan());
        if !ok {
            return Err(VepError::InvalidBelief { mean, variance });
        }
        if variance.is_infinite() {
            return Ok(Self::vacuous());
        }
        Ok(Self { mean, variance })
    }

    pub const fn vacuous() -> Self {
        Self {
            mean: 0.0,
            variance: f64::INFINITY,
        }
    }

    /// Builds a belief from precision and shift. Precision zero gives the
    /// vacuous belief; a negative precision is rejected.
    pub fn from_natural(precision: f64, shift: f64) -> Result<Self> {
        if precision == 0.0 && shift == 0.0 {
            return Ok(Self::vacuous());
        }
        if !(precision > 0.0) || !precision.is_finite() || !shift.is_finite() {
            return Err(VepError::InvalidBelief {
                mean: shift / precision,
                variance: 1.0 / precision,
            });
        }
        Self::new(shift / precision, 1.0 / precision)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn is_vacuous(&self) -> bool {
        self.variance.is_infinite()
    }

    /// `E[x^2]`.
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * d * d / self.variance - 0.5 * self.variance.ln() - LN_SQRT_2PI
    }
}

impl NaturalParams for Gaussian1D {
    fn precision(&self) -> f64 {
        if self.variance.is_infinite() {
            0.0
        } else {
            1.0 / self.variance
        }
    }

    fn shift(&self) -> f64 {
        if self.variance.is_infinite() {
            0.0
        } else {
            self.mean / self.variance
        }
    }
}

/// Rectified-Gaussian hyperprior on a precision. The location is pinned to
/// zero; only the scale is free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectifiedGaussianParams {
    scale: f64,
}

impl RectifiedGaussianParams {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(VepError::Config(format!("hyperprior scale v0 must be > 0, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn location(&self) -> f64 {
        0.0
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `log p(tau)` for `tau >= 0`: `log 2 + log N(tau | 0, v0)`.
    pub fn log_density(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return f64::NEG_INFINITY;
        }
        LN_2 - 0.5 * tau * tau / self.scale - 0.5 * self.scale.ln() - LN_SQRT_2PI
    }
}

/// Product of two Gaussian densities. Returns the normalized product and the
/// log of `∫ N(x|a) N(x|b) dx`. A vacuous factor is treated as the constant 1,
/// so its log-scale contribution is zero.
pub fn gaussian_multiply(a: &Gaussian1D, b: &Gaussian1D) -> Result<(Gaussian1D, f64)> {
    if a.is_vacuous() && b.is_vacuous() {
        return Err(VepError::VacuousProduct);
    }
    let product = Gaussian1D::from_natural(a.precision() + b.precision(), a.shift() + b.shift())?;
    let log_scale = if a.is_vacuous() || b.is_vacuous() {
        0.0
    } else {
        let joint = Gaussian1D::new(b.mean, a.variance + b.variance)?;
        joint.log_pdf(a.mean)
    };
    Ok((product, log_scale))
}

/// Divides `site` out of `q`, using the mean update
/// `m_cav = m + v_cav / v_site * (m - m_site)`.
pub fn gaussian_divide<S: NaturalParams>(q: &Gaussian1D, site: &S) -> Result<Gaussian1D> {
    if q.is_vacuous() {
        return Err(VepError::InvalidBelief {
            mean: q.mean,
            variance: q.variance,
        });
    }
    let site_precision = site.precision();
    let precision = q.precision() - site_precision;
    if !(precision > 0.0) {
        if precision == 0.0 && q.shift() - site.shift() == 0.0 {
            return Ok(Gaussian1D::vacuous());
        }
        return Err(VepError::NegativeCavity { precision });
    }
    let cavity_var = 1.0 / precision;
    if site_precision == 0.0 {
        return Gaussian1D::new(q.mean, cavity_var);
    }
    let site_mean = site.shift() / site_precision;
    let mean = q.mean + site_precision * cavity_var * (q.mean - site_mean);
    Gaussian1D::new(mean, cavity_var)
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log σ(u)` without overflow in either tail.
pub fn log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

/// `λ(ζ) = (σ(ζ) - 1/2) / (2ζ)`, with the limit `1/8` at zero.
pub fn lambda_zeta(zeta: f64) -> f64 {
    let z = zeta.abs();
    if z < 1e-4 {
        // tanh(z/2)/(4z) series
        return 0.125 - z * z / 96.0;
    }
    // σ(z) - 1/2 = tanh(z/2)/2
    (0.5 * z).tanh() / (4.0 * z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEval {
    pub pdf: f64,
    pub cdf: f64,
    pub log_cdf: f64,
}

pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Mills ratio `R(t) = (1 - Φ(t)) / φ(t)` for `t > 0`, by the continued fraction
/// `1 / (t + 1/(t + 2/(t + 3/(t + ...))))` (modified Lentz).
fn mills_ratio(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = t;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..500 {
        let a = j as f64;
        d = t + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = t + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

pub fn std_normal_cdf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        std_normal_log_cdf(x).exp()
    } else {
        0.5 * erfc(-x / SQRT_2)
    }
}

pub fn std_normal_log_cdf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        std_normal_log_pdf(x) + mills_ratio(-x).ln()
    } else if x > 5.0 {
        (-0.5 * erfc(x / SQRT_2)).ln_1p()
    } else {
        (0.5 * erfc(-x / SQRT_2)).ln()
    }
}

pub fn std_normal_pdf_cdf(x: f64) -> NormalEval {
    NormalEval {
        pdf: std_normal_pdf(x),
        cdf: std_normal_cdf(x),
        log_cdf: std_normal_log_cdf(x),
    }
}

/// `φ(α) / Φ(α)`, stable for very negative `α` where both factors underflow.
pub fn inverse_mills(alpha: f64) -> f64 {
    if alpha < TAIL_SWITCH {
        1.0 / mills_ratio(-alpha)
    } else {
        std_normal_pdf(alpha) / std_normal_cdf(alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectifiedMoments {
    /// Mass of `N(m, v)` on `[0, inf)`.
    pub z: f64,
    pub log_z: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Moments of `N(m, v)` restricted to `[0, inf)` and renormalized.
pub fn rectified_gaussian_moments(m: f64, v: f64) -> Result<RectifiedMoments> {
    if !(v > 0.0) || !v.is_finite() || !m.is_finite() {
        return Err(VepError::Domain(format!("rectified moments need v > 0, got m={m}, v={v}")));
    }
    let sd = v.sqrt();
    let alpha = m / sd;
    let log_z = std_normal_log_cdf(alpha);
    let gamma = inverse_mills(alpha);
    let shifted = alpha + gamma;
    let mean = sd * shifted;
    let variance = (v * (1.0 - gamma * shifted)).max(0.0);
    Ok(RectifiedMoments {
        z: log_z.exp(),
        log_z,
        mean: mean.max(0.0),
        variance,
    })
}

/// Gaussian entropy `0.5 log(2πe v)`.
pub fn entropy(v: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E * v).ln()
}
