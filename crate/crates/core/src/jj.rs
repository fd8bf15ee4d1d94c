//! Bounded logistic likelihood sites.
//!
//! The Bernoulli-sigmoid likelihood `p(y | a) = e^{ya} σ(-a)` is replaced by
//! the quadratic-exponential lower bound
//! `σ(ζ) exp{ya - (a+ζ)/2 - λ(ζ)(a² - ζ²)}`, tight at `a = ±ζ`. Against a
//! Gaussian belief on the output pre-activation `a` the bound integrates in
//! closed form, which is the default (`Verified`) likelihood mode.
//!
//! `PaperLiteral` keeps the alternative closed forms for `m_y`, `v_y` and
//! their gradients exactly as transcribed. Its `v_y` is negative for every
//! `ζ > 0`; the log-normalizer uses `ln|v_y|` so that the printed gradient
//! formulas are its exact derivatives.

use std::f64::consts::PI;

use crate::error::{Result, VepError};
use crate::gaussian::{lambda_zeta, log_sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LikelihoodMode {
    #[default]
    Verified,
    PaperLiteral,
}

/// Likelihood site as an unnormalized Gaussian in natural form:
/// `log t(a) = log_scale - nat_precision a²/2 + nat_mean_times_precision a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JJSite {
    pub zeta: f64,
    pub nat_precision: f64,
    pub nat_mean_times_precision: f64,
    pub log_scale: f64,
}

impl JJSite {
    pub fn log_value(&self, a: f64) -> f64 {
        self.log_scale - 0.5 * self.nat_precision * a * a + self.nat_mean_times_precision * a
    }
}

fn label(y: u8) -> f64 {
    debug_assert!(y <= 1, "labels are binary");
    f64::from(y)
}

/// Exact `log p(y | a)`.
pub fn exact_log_likelihood(a: f64, y: u8) -> f64 {
    log_sigmoid((2.0 * label(y) - 1.0) * a)
}

/// Log of the bounded likelihood at `a`.
pub fn jj_bound_log(a: f64, zeta: f64, y: u8) -> f64 {
    let lam = lambda_zeta(zeta);
    log_sigmoid(zeta) + label(y) * a - 0.5 * (a + zeta) - lam * (a * a - zeta * zeta)
}

/// The bound with its square completed in `a`.
pub fn jj_site_from_bound(y: u8, zeta: f64) -> JJSite {
    let lam = lambda_zeta(zeta);
    JJSite {
        zeta,
        nat_precision: 2.0 * lam,
        nat_mean_times_precision: label(y) - 0.5,
        log_scale: log_sigmoid(zeta) - 0.5 * zeta + lam * zeta * zeta,
    }
}

/// The closed form accepts `v_a = 0` (a deterministic output); the literal
/// form divides by `v_a` and needs it strictly positive.
fn check_variance(v_a: f64, mode: LikelihoodMode) -> Result<()> {
    let ok = match mode {
        LikelihoodMode::Verified => v_a >= 0.0,
        LikelihoodMode::PaperLiteral => v_a > 0.0,
    };
    if !ok || !v_a.is_finite() {
        return Err(VepError::Domain(format!("output variance {v_a} is out of range for {mode:?} mode")));
    }
    Ok(())
}

/// `m_y`, `v_y` of the literal closed form.
pub fn paper_my_vy(m_a: f64, v_a: f64, zeta: f64) -> (f64, f64) {
    let m_y = 0.5 - m_a / v_a;
    // (1/ζ)(1/2 - σ(ζ)) written through λ so ζ = 0 takes the limit
    let v_y = -2.0 * lambda_zeta(zeta) - 1.0 / v_a;
    (m_y, v_y)
}

/// `log Z_y = log ∫ h(y | a) N(a | m_a, v_a) da`.
pub fn log_zy(m_a: f64, v_a: f64, y: u8, zeta: f64, mode: LikelihoodMode) -> Result<f64> {
    check_variance(v_a, mode)?;
    match mode {
        LikelihoodMode::Verified => {
            let site = jj_site_from_bound(y, zeta);
            let (p, h) = (site.nat_precision, site.nat_mean_times_precision);
            let s = 1.0 + v_a * p;
            Ok(site.log_scale + (h * h * v_a + 2.0 * h * m_a - p * m_a * m_a) / (2.0 * s) - 0.5 * s.ln())
        }
        LikelihoodMode::PaperLiteral => {
            let (m_y, v_y) = paper_my_vy(m_a, v_a, zeta);
            let d = label(y) - m_y;
            Ok(-0.5 * (2.0 * PI * v_y).abs().ln() - d * d / (2.0 * v_y))
        }
    }
}

/// Partial derivatives of [`log_zy`] with respect to `m_a` and `v_a`.
pub fn grad_log_zy(m_a: f64, v_a: f64, y: u8, zeta: f64, mode: LikelihoodMode) -> Result<(f64, f64)> {
    check_variance(v_a, mode)?;
    match mode {
        LikelihoodMode::Verified => {
            let site = jj_site_from_bound(y, zeta);
            let (p, h) = (site.nat_precision, site.nat_mean_times_precision);
            let s = 1.0 + v_a * p;
            let d_m = (h - p * m_a) / s;
            let d_v = 0.5 * (d_m * d_m - p / s);
            Ok((d_m, d_v))
        }
        LikelihoodMode::PaperLiteral => {
            let (m_y, v_y) = paper_my_vy(m_a, v_a, zeta);
            let yf = label(y);
            let d_m = (m_y - yf) / v_y / v_a;
            let inner = (yf - m_y).powi(2) / (2.0 * v_y * v_y) + m_a * (yf - m_y) / v_y - 1.0 / (2.0 * v_y);
            Ok((d_m, inner / (v_a * v_a)))
        }
    }
}

/// Literal update of the output belief `q(a_L)`.
pub fn update_q_al_paper(m_old: f64, v_old: f64, y: u8, m_y: f64, v_y: f64) -> Result<(f64, f64)> {
    if v_y == 0.0 || !v_y.is_finite() {
        return Err(VepError::Domain(format!("v_y must be finite and non-zero, got {v_y}")));
    }
    let yf = label(y);
    let m_new = m_old + (m_y - yf) / v_y;
    let v_new = v_old + (2.0 * m_old * (yf - m_y) - 1.0) / v_y;
    if !(v_new > 0.0) {
        return Err(VepError::NonPositiveVariance { variance: v_new });
    }
    Ok((m_new, v_new))
}

/// Maximizer of the expected log-bound under `N(m_a, v_a)`: `ζ² = E[a²]`.
pub fn update_zeta(m_a: f64, v_a: f64) -> Result<f64> {
    if !(v_a >= 0.0) {
        return Err(VepError::Domain(format!("v_a must be >= 0, got {v_a}")));
    }
    Ok((m_a * m_a + v_a).sqrt())
}

/// `E_{N(a|m,v)}[jj_bound_log(a, ζ, y)]`, closed form.
pub fn expected_bound_log(m_a: f64, v_a: f64, y: u8, zeta: f64) -> f64 {
    let lam = lambda_zeta(zeta);
    let second = v_a + m_a * m_a;
    log_sigmoid(zeta) + label(y) * m_a - 0.5 * (m_a + zeta) - lam * (second - zeta * zeta)
}
