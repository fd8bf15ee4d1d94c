//! Conjugate Bayesian linear regression worked both ways: the mean-field
//! (reverse KL) update of a single weight against one observation, and the
//! moment-matching update driven by gradients of the log-normalizer. The
//! tilted distribution is Gaussian here, so both routes land on the exact
//! posterior and must agree to rounding.

use rand::Rng;
use serde::Serialize;

use crate::error::{Result, VepError};
use crate::gaussian::Gaussian1D;
use crate::oracle::seeded_rng;
use crate::site::moment_match_from_logz;

/// Cavity `N(m_cav, v_cav)`, feature `phi`, target `t`, noise precision `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinRegCase {
    pub m_cav: f64,
    pub v_cav: f64,
    pub phi: f64,
    pub t: f64,
    pub beta: f64,
}

impl LinRegCase {
    pub fn new(m_cav: f64, v_cav: f64, phi: f64, t: f64, beta: f64) -> Result<Self> {
        if !(v_cav > 0.0) || !(beta > 0.0) {
            return Err(VepError::Domain(format!(
                "linear regression case needs v_cav > 0 and beta > 0 (got {v_cav}, {beta})"
            )));
        }
        Ok(Self {
            m_cav,
            v_cav,
            phi,
            t,
            beta,
        })
    }
}

pub fn vb_route(case: &LinRegCase) -> Result<Gaussian1D> {
    let LinRegCase {
        m_cav,
        v_cav,
        phi,
        t,
        beta,
    } = *case;
    let denom = 1.0 + v_cav * phi * phi * beta;
    Gaussian1D::new((m_cav + v_cav * phi * t * beta) / denom, v_cav / denom)
}

/// `Z_t = N(t | m_cav φ, 1/β + v_cav φ²)` followed by moment matching.
pub fn ep_route(case: &LinRegCase) -> Result<Gaussian1D> {
    let LinRegCase {
        m_cav,
        v_cav,
        phi,
        t,
        beta,
    } = *case;
    let s = 1.0 / beta + v_cav * phi * phi;
    let r = t - m_cav * phi;
    let dlogz_dm = phi * r / s;
    let dlogz_dv = 0.5 * phi * phi * (r * r / (s * s) - 1.0 / s);
    let cavity = Gaussian1D::new(m_cav, v_cav)?;
    moment_match_from_logz(&cavity, dlogz_dm, dlogz_dv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub n_cases: usize,
    pub seed: u64,
    pub max_abs_delta_mean: f64,
    pub max_abs_delta_var: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const EQUIVALENCE_TOL: f64 = 1e-10;

/// Compare the two routes over `cases`.
pub fn equivalence_over(cases: &[LinRegCase], seed: u64) -> Result<EquivalenceReport> {
    if cases.is_empty() {
        return Err(VepError::Domain("equivalence needs at least one case".into()));
    }
    let mut max_dm: f64 = 0.0;
    let mut max_dv: f64 = 0.0;
    for case in cases {
        let vb = vb_route(case)?;
        let ep = ep_route(case)?;
        max_dm = max_dm.max((vb.mean() - ep.mean()).abs());
        max_dv = max_dv.max((vb.variance() - ep.variance()).abs());
    }
    Ok(EquivalenceReport {
        n_cases: cases.len(),
        seed,
        max_abs_delta_mean: max_dm,
        max_abs_delta_var: max_dv,
        tolerance: EQUIVALENCE_TOL,
        pass: max_dm < EQUIVALENCE_TOL && max_dv < EQUIVALENCE_TOL,
    })
}

/// Randomized well-conditioned cases drawn from a seeded stream.
pub fn random_cases(n: usize, seed: u64) -> Vec<LinRegCase> {
    let mut rng = seeded_rng(seed, 0x11e6);
    (0..n)
        .map(|_| LinRegCase {
            m_cav: rng.random_range(-3.0..3.0),
            v_cav: rng.random_range(0.1..5.0),
            phi: rng.random_range(-2.0..2.0),
            t: rng.random_range(-3.0..3.0),
            beta: rng.random_range(0.1..10.0),
        })
        .collect()
}

pub fn equivalence_report(n_cases: usize, seed: u64) -> Result<EquivalenceReport> {
    if n_cases == 0 {
        return Err(VepError::Domain("equivalence needs n >= 1".into()));
    }
    equivalence_over(&random_cases(n_cases, seed), seed)
}
