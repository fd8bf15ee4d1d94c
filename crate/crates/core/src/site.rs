//! Hybrid EP/VB updates for the weight-prior and precision-hyperprior sites.
//!
//! One prior factor `N(w | 0, 1/τ)` couples each weight with its precision.
//! Per sweep the two cavities are formed by dividing out the current sites,
//! `q(τ)` and `q(w)` are re-optimized against the cavities by one round of
//! mean-field coordinate ascent, and the sites are refreshed as new marginal
//! over cavity.

use std::f64::consts::LN_2;

use crate::error::{Result, VepError};
use crate::gaussian::{entropy, rectified_gaussian_moments, Gaussian1D, NaturalParams};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Floor applied to `E[τ]` before it is used as a weight precision.
pub const TAU_FLOOR: f64 = 1e-8;

/// An approximate factor in location/scale form. The variance may be
/// infinite (vacuous) or negative (a site that removes precision).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteState {
    pub m_tilde: f64,
    pub v_tilde: f64,
    pub log_scale: f64,
}

impl SiteState {
    pub const fn vacuous() -> Self {
        Self {
            m_tilde: 0.0,
            v_tilde: f64::INFINITY,
            log_scale: 0.0,
        }
    }

    pub fn from_natural(precision: f64, shift: f64, log_scale: f64) -> Self {
        if precision == 0.0 {
            return Self {
                log_scale,
                ..Self::vacuous()
            };
        }
        Self {
            m_tilde: shift / precision,
            v_tilde: 1.0 / precision,
            log_scale,
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.v_tilde.is_infinite()
    }

    /// Geometric blend in natural parameters: `δ·self + (1-δ)·old`.
    pub fn damped_toward(&self, old: &SiteState, damping: f64) -> SiteState {
        let precision = damping * self.precision() + (1.0 - damping) * old.precision();
        let shift = damping * self.shift() + (1.0 - damping) * old.shift();
        let log_scale = damping * self.log_scale + (1.0 - damping) * old.log_scale;
        SiteState::from_natural(precision, shift, log_scale)
    }
}

impl NaturalParams for SiteState {
    fn precision(&self) -> f64 {
        if self.v_tilde.is_infinite() {
            0.0
        } else {
            1.0 / self.v_tilde
        }
    }

    fn shift(&self) -> f64 {
        if self.v_tilde.is_infinite() {
            0.0
        } else {
            self.m_tilde / self.v_tilde
        }
    }
}

/// The marginals of one weight and its precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamMarginals {
    pub q_w: Gaussian1D,
    pub q_tau: Gaussian1D,
}

/// How `E[τ]` is read off `q(τ)` when it is plugged into the weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauExpectation {
    /// `max(m_τ, TAU_FLOOR)`.
    #[default]
    ClampedMean,
    /// Mean of `N(m_τ, v_τ)` rectified to `[0, inf)`.
    TruncatedMean,
}

impl TauExpectation {
    pub fn expectation(&self, q_tau: &Gaussian1D) -> Result<f64> {
        let e = match self {
            TauExpectation::ClampedMean => q_tau.mean(),
            TauExpectation::TruncatedMean => rectified_gaussian_moments(q_tau.mean(), q_tau.variance())?.mean,
        };
        Ok(e.max(TAU_FLOOR))
    }
}

/// First incorporation of the precision site: site `(0, v0)` and `q(τ) = N(0, v0)`.
pub fn init_tau_site(v0: f64) -> Result<(SiteState, Gaussian1D)> {
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(VepError::Config(format!("v0 must be > 0, got {v0}")));
    }
    let site = SiteState {
        m_tilde: 0.0,
        v_tilde: v0,
        log_scale: 0.0,
    };
    Ok((site, Gaussian1D::new(0.0, v0)?))
}

/// Divide the site out of the marginal. A non-positive cavity precision comes
/// back as [`VepError::NegativeCavity`], which sweeps treat as "skip".
pub fn compute_cavity(marginal: &Gaussian1D, site: &SiteState) -> Result<Gaussian1D> {
    crate::gaussian::gaussian_divide(marginal, site)
}

/// Optimal Gaussian `q(τ)` at a fixed `q(w)`:
/// precision `1/v0 + 1/v_cav`, shift `m_cav/v_cav - E[w²]/2`.
///
/// Evaluated in natural parameters so a vacuous cavity is exact.
pub fn update_q_tau(cavity_tau: &Gaussian1D, q_w: &Gaussian1D, v0: f64) -> Result<Gaussian1D> {
    if !(v0 > 0.0) {
        return Err(VepError::Config(format!("v0 must be > 0, got {v0}")));
    }
    let precision = 1.0 / v0 + cavity_tau.precision();
    let shift = cavity_tau.shift() - 0.5 * q_w.second_moment();
    Gaussian1D::from_natural(precision, shift)
}

/// The same update written as `[m_cav - v_cav E[w²]/2] · v0 / (v_cav + v0)`.
/// Only defined for a finite cavity; kept as an independent algebraic route.
pub fn update_q_tau_scaled_form(cavity_tau: &Gaussian1D, q_w: &Gaussian1D, v0: f64) -> (f64, f64) {
    let (m, v) = (cavity_tau.mean(), cavity_tau.variance());
    let mean = (m - 0.5 * v * q_w.second_moment()) * v0 / (v + v0);
    let variance = 1.0 / (1.0 / v0 + 1.0 / v);
    (mean, variance)
}

/// Optimal `q(w)` given `E[τ]`: precision `1/v_cav + E[τ]`, mean `m_cav v_w / v_cav`.
pub fn update_q_w(cavity_w: &Gaussian1D, e_tau: f64) -> Result<Gaussian1D> {
    let e_tau = e_tau.max(TAU_FLOOR);
    Gaussian1D::from_natural(cavity_w.precision() + e_tau, cavity_w.shift())
}

/// New site as `q_new / cavity`.
pub fn refresh_site(q_new: &Gaussian1D, cavity: &Gaussian1D) -> SiteState {
    let precision = q_new.precision() - cavity.precision();
    let shift = q_new.shift() - cavity.shift();
    SiteState::from_natural(precision, shift, 0.0)
}

/// One step of moment matching from the gradients of the tilted
/// log-normalizer with respect to the cavity mean and variance.
pub fn moment_match_from_logz(cavity: &Gaussian1D, dlogz_dm: f64, dlogz_dv: f64) -> Result<Gaussian1D> {
    let (m, v) = (cavity.mean(), cavity.variance());
    let mean = m + v * dlogz_dm;
    let variance = v - v * v * (dlogz_dm * dlogz_dm - 2.0 * dlogz_dv);
    if !(variance > 0.0) || !mean.is_finite() {
        return Err(VepError::NonPositiveVariance { variance });
    }
    Gaussian1D::new(mean, variance)
}

/// `E_q[log N(x | c)]` for a Gaussian `q` and cavity `c`; zero for a vacuous cavity.
fn expected_log_cavity(q: &Gaussian1D, cavity: &Gaussian1D) -> f64 {
    if cavity.is_vacuous() {
        return 0.0;
    }
    let d = q.mean() - cavity.mean();
    -LN_SQRT_2PI - 0.5 * cavity.variance().ln() - 0.5 * (q.variance() + d * d) / cavity.variance()
}

/// Lower bound on the log-normalizer of one prior site's tilted distribution,
/// evaluated at the factorized `q(w) q(τ)`.
///
/// The prior factor enters as `(2π)^{-1/2} exp(-τw²/2)` and the hyperprior as
/// `2 N(τ | 0, v0)`; with these terms, `update_q_tau` and `update_q_w` are the
/// exact coordinate maximizers, so the bound cannot decrease across them.
pub fn site_elbo(
    q_w: &Gaussian1D,
    q_tau: &Gaussian1D,
    cavity_w: &Gaussian1D,
    cavity_tau: &Gaussian1D,
    v0: f64,
) -> f64 {
    let coupling = -0.5 * q_tau.mean() * q_w.second_moment() - LN_SQRT_2PI;
    let hyperprior = LN_2 - LN_SQRT_2PI - 0.5 * v0.ln() - 0.5 * q_tau.second_moment() / v0;
    coupling
        + hyperprior
        + expected_log_cavity(q_w, cavity_w)
        + expected_log_cavity(q_tau, cavity_tau)
        + entropy(q_w.variance())
        + entropy(q_tau.variance())
}
