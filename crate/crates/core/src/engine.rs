//! Training loop: prior-site sweeps, likelihood sweeps through the moment
//! propagation network, `ζ` refreshes, damping and convergence.
//!
//! Every weight marginal is stored together with its prior site and an
//! evidence factor (the initial belief times every likelihood update applied
//! so far). The marginal is always the product of the two, so the weight
//! cavity for the prior site is exactly the evidence. Precisions have no
//! likelihood terms of their own, so their cavity stays vacuous and the
//! marginal equals the site.

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Result, VepError};
use crate::gaussian::{sigmoid, Gaussian1D, NaturalParams};
use crate::jj::{grad_log_zy, log_zy, paper_my_vy, update_q_al_paper, update_zeta, LikelihoodMode};
use crate::moments::{backward, forward, LayerWeights, NetworkShape};
use crate::oracle::seeded_rng;
use crate::site::{
    compute_cavity, init_tau_site, moment_match_from_logz, refresh_site, site_elbo, update_q_tau, update_q_w,
    ParamMarginals, SiteState, TauExpectation,
};

/// Tolerance of the site-consistency check.
pub const RECONSTRUCT_TOL: f64 = 1e-10;

/// Stream id for initial weight means, kept apart from every oracle stream.
const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    #[default]
    PriorFirst,
    LikelihoodFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub v0: f64,
    pub damping: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    pub likelihood_mode: LikelihoodMode,
    pub tau_expectation_mode: TauExpectation,
    pub seed: u64,
    pub fan_in_scaling: bool,
    pub sweep_order: SweepOrder,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            v0: 1.0,
            damping: 0.9,
            max_sweeps: 500,
            tol: 1e-4,
            likelihood_mode: LikelihoodMode::Verified,
            tau_expectation_mode: TauExpectation::ClampedMean,
            seed: 0,
            fan_in_scaling: false,
            sweep_order: SweepOrder::PriorFirst,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0) || !self.v0.is_finite() {
            return Err(VepError::Config(format!("v0 must be a finite value > 0, got {}", self.v0)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(VepError::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_sweeps == 0 {
            return Err(VepError::Config("max_sweeps must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(VepError::Config(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Everything tracked for one weight `w_kjl` and its precision `τ_kjl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightState {
    pub marginals: ParamMarginals,
    pub site_w: SiteState,
    pub site_tau: SiteState,
    /// Initial belief times all likelihood updates, in natural form.
    pub evidence: SiteState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, bias in the last column.
    pub weights: Vec<WeightState>,
}

/// Per-observation record of the likelihood term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationDiag {
    pub zeta: f64,
    /// `log Z_y` at the most recent visit.
    pub log_zy: Option<f64>,
    /// Literal output-belief update, when that mode is active and it succeeded.
    pub literal_q_al: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    pub shape: NetworkShape,
    pub config: TrainConfig,
    pub layers: Vec<LayerState>,
    pub observations: Vec<ObservationDiag>,
    pub sweeps: usize,
    pub prior_skips: u64,
    pub likelihood_skips: u64,
}

fn blend(new: f64, old: f64, damping: f64) -> f64 {
    damping * new + (1.0 - damping) * old
}

fn nat_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RECONSTRUCT_TOL * a.abs().max(b.abs()).max(1.0)
}

impl PosteriorState {
    /// Means and variances of the weight marginals, in the layout the
    /// moment-propagation routines take.
    pub fn layer_weights(&self) -> Result<Vec<LayerWeights>> {
        self.layers
            .iter()
            .map(|layer| {
                let mean = layer.weights.iter().map(|w| w.marginals.q_w.mean()).collect();
                let var = layer.weights.iter().map(|w| w.marginals.q_w.variance()).collect();
                LayerWeights::new(layer.rows, layer.cols, mean, var)
            })
            .collect()
    }

    pub fn n_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn weights(&self) -> impl Iterator<Item = &WeightState> {
        self.layers.iter().flat_map(|l| l.weights.iter())
    }

    /// Largest relative mismatch between each stored marginal and the
    /// product of its factors, across all natural parameters.
    pub fn reconstruction_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut track = |a: f64, b: f64| {
            let scale = a.abs().max(b.abs()).max(1.0);
            worst = worst.max((a - b).abs() / scale);
        };
        for w in self.weights() {
            let q_w = &w.marginals.q_w;
            track(q_w.precision(), w.site_w.precision() + w.evidence.precision());
            track(q_w.shift(), w.site_w.shift() + w.evidence.shift());
            let q_tau = &w.marginals.q_tau;
            track(q_tau.precision(), w.site_tau.precision());
            track(q_tau.shift(), w.site_tau.shift());
        }
        worst
    }

    /// Site consistency and positivity of every marginal variance.
    pub fn check_invariants(&self) -> Result<()> {
        for w in self.weights() {
            for q in [&w.marginals.q_w, &w.marginals.q_tau] {
                if !(q.variance() > 0.0) || !q.variance().is_finite() || !q.mean().is_finite() {
                    return Err(VepError::NonFiniteState { sweep: self.sweeps });
                }
            }
            let q_w = &w.marginals.q_w;
            let q_tau = &w.marginals.q_tau;
            let consistent = nat_close(q_w.precision(), w.site_w.precision() + w.evidence.precision())
                && nat_close(q_w.shift(), w.site_w.shift() + w.evidence.shift())
                && nat_close(q_tau.precision(), w.site_tau.precision())
                && nat_close(q_tau.shift(), w.site_tau.shift());
            if !consistent {
                return Err(VepError::Model(format!(
                    "marginal does not match its sites after sweep {} (error {:e})",
                    self.sweeps,
                    self.reconstruction_error()
                )));
            }
        }
        Ok(())
    }

    fn means(&self) -> Vec<f64> {
        self.weights().map(|w| w.marginals.q_w.mean()).collect()
    }
}

/// Fresh posterior: precision sites per the hyperprior, vacuous weight sites,
/// weight variance `s²` (`s = 1`, or `1/√fan-in` with fan-in scaling), `ζ = 1`.
///
/// Means of weights feeding a hidden layer are drawn from `N(0, s²)` with the
/// configured seed, since identical hidden units would stay identical under
/// every update. Output-layer means start at zero.
pub fn init_state(shape: &NetworkShape, config: &TrainConfig, n_obs: usize) -> Result<PosteriorState> {
    config.validate()?;
    let (site_tau, q_tau) = init_tau_site(config.v0)?;
    let mut rng = seeded_rng(config.seed, INIT_STREAM);
    let mut layers = Vec::with_capacity(shape.n_layers());
    for l in 0..shape.n_layers() {
        let (rows, cols) = (shape.rows(l), shape.cols(l));
        let s = if config.fan_in_scaling {
            1.0 / (cols as f64).sqrt()
        } else {
            1.0
        };
        let hidden = l + 1 < shape.n_layers();
        let normal = Normal::new(0.0, s).map_err(|e| VepError::Config(e.to_string()))?;
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mean = if hidden { normal.sample(&mut rng) } else { 0.0 };
            let q_w = Gaussian1D::new(mean, s * s)?;
            weights.push(WeightState {
                marginals: ParamMarginals { q_w, q_tau },
                site_w: SiteState::vacuous(),
                site_tau,
                evidence: SiteState::from_natural(q_w.precision(), q_w.shift(), 0.0),
            });
        }
        layers.push(LayerState { rows, cols, weights });
    }
    Ok(PosteriorState {
        shape: shape.clone(),
        config: *config,
        layers,
        observations: vec![
            ObservationDiag {
                zeta: 1.0,
                log_zy: None,
                literal_q_al: None,
            };
            n_obs
        ],
        sweeps: 0,
        prior_skips: 0,
        likelihood_skips: 0,
    })
}

/// Outcome of one pass over the prior sites.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PriorSweepStats {
    pub skips: u64,
    /// Sum of the per-site bounds at the refreshed marginals.
    pub elbo_sum: f64,
}

fn update_prior_site(w: &mut WeightState, config: &TrainConfig) -> Result<f64> {
    let cav_w = compute_cavity(&w.marginals.q_w, &w.site_w)?;
    let cav_tau = compute_cavity(&w.marginals.q_tau, &w.site_tau)?;
    let q_tau = update_q_tau(&cav_tau, &w.marginals.q_w, config.v0)?;
    let e_tau = config.tau_expectation_mode.expectation(&q_tau)?;
    let q_w = update_q_w(&cav_w, e_tau)?;

    let site_w = refresh_site(&q_w, &cav_w).damped_toward(&w.site_w, config.damping);
    let site_tau = refresh_site(&q_tau, &cav_tau).damped_toward(&w.site_tau, config.damping);
    let new_q_w = Gaussian1D::from_natural(
        w.evidence.precision() + site_w.precision(),
        w.evidence.shift() + site_w.shift(),
    )?;
    let new_q_tau = Gaussian1D::from_natural(
        cav_tau.precision() + site_tau.precision(),
        cav_tau.shift() + site_tau.shift(),
    )?;
    let elbo = site_elbo(&new_q_w, &new_q_tau, &cav_w, &cav_tau, config.v0);
    w.site_w = site_w;
    w.site_tau = site_tau;
    w.marginals = ParamMarginals {
        q_w: new_q_w,
        q_tau: new_q_tau,
    };
    Ok(elbo)
}

/// One pass over every prior factor in (layer, row, column) order. Updates
/// that would need a non-positive cavity leave the weight untouched and are
/// counted.
pub fn sweep_prior_sites(state: &mut PosteriorState) -> Result<PriorSweepStats> {
    let config = state.config;
    let mut stats = PriorSweepStats::default();
    for layer in &mut state.layers {
        for w in &mut layer.weights {
            let mut trial = *w;
            match update_prior_site(&mut trial, &config) {
                Ok(elbo) => {
                    *w = trial;
                    stats.elbo_sum += elbo;
                }
                Err(e) if e.is_skip() || matches!(e, VepError::InvalidBelief { .. }) => stats.skips += 1,
                Err(e) => return Err(e),
            }
        }
    }
    state.prior_skips += stats.skips;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LikelihoodSweepStats {
    pub skips: u64,
    /// Mean `log Z_y` over evaluated observations at the moment each was visited.
    pub mean_log_zy: f64,
}

fn check_dataset(state: &PosteriorState, data: &Dataset) -> Result<()> {
    if data.n_features() != state.shape.input_size() {
        return Err(VepError::Dimension(format!(
            "dataset has {} features, network expects {}",
            data.n_features(),
            state.shape.input_size()
        )));
    }
    if data.len() != state.observations.len() {
        return Err(VepError::Dimension(format!(
            "dataset has {} rows, state tracks {} observations",
            data.len(),
            state.observations.len()
        )));
    }
    Ok(())
}

/// Apply every likelihood term once, in row order, directly to the weight
/// marginals; then refresh each `ζ_i` from a fresh forward pass.
pub fn sweep_likelihood(state: &mut PosteriorState, data: &Dataset) -> Result<LikelihoodSweepStats> {
    check_dataset(state, data)?;
    let config = state.config;
    let mut stats = LikelihoodSweepStats::default();
    let mut log_zy_sum = 0.0;
    let mut visited = 0usize;
    for (i, (x, &y)) in data.features.iter().zip(&data.labels).enumerate() {
        let weights = state.layer_weights()?;
        let trace = forward(&state.shape, &weights, x)?;
        let (m_a, v_a) = trace.output();
        let zeta = state.observations[i].zeta;
        let evaluated = log_zy(m_a, v_a, y, zeta, config.likelihood_mode)
            .and_then(|lz| Ok((lz, grad_log_zy(m_a, v_a, y, zeta, config.likelihood_mode)?)));
        let (lz, (d_m, d_v)) = match evaluated {
            Ok(v) => v,
            Err(VepError::Domain(_)) => {
                // the output belief is outside the likelihood's domain
                stats.skips += state.n_weights() as u64;
                continue;
            }
            Err(e) => return Err(e),
        };
        log_zy_sum += lz;
        visited += 1;
        let diag = &mut state.observations[i];
        diag.log_zy = Some(lz);
        if config.likelihood_mode == LikelihoodMode::PaperLiteral {
            let (m_y, v_y) = paper_my_vy(m_a, v_a, zeta);
            diag.literal_q_al = update_q_al_paper(m_a, v_a, y, m_y, v_y).ok();
        }
        if !d_m.is_finite() || !d_v.is_finite() {
            stats.skips += state.n_weights() as u64;
            continue;
        }
        let grads = backward(&trace, &weights, d_m, d_v)?;
        for (layer, g) in state.layers.iter_mut().zip(&grads.layers) {
            for (idx, w) in layer.weights.iter_mut().enumerate() {
                let old = w.marginals.q_w;
                let matched = match moment_match_from_logz(&old, g.d_mean[idx], g.d_var[idx]) {
                    Ok(q) => q,
                    Err(e) if e.is_skip() || matches!(e, VepError::InvalidBelief { .. }) => {
                        stats.skips += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let precision = blend(matched.precision(), old.precision(), config.damping);
                let shift = blend(matched.shift(), old.shift(), config.damping);
                let q_w = Gaussian1D::from_natural(precision, shift)?;
                w.evidence = SiteState::from_natural(
                    w.evidence.precision() + (precision - old.precision()),
                    w.evidence.shift() + (shift - old.shift()),
                    0.0,
                );
                w.marginals.q_w = q_w;
            }
        }
    }
    let weights = state.layer_weights()?;
    for (x, diag) in data.features.iter().zip(&mut state.observations) {
        let (m_a, v_a) = forward(&state.shape, &weights, x)?.output();
        diag.zeta = update_zeta(m_a, v_a)?;
    }
    if visited > 0 {
        stats.mean_log_zy = log_zy_sum / visited as f64;
    }
    state.likelihood_skips += stats.skips;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub max_delta: f64,
    pub prior_skips: u64,
    pub likelihood_skips: u64,
    pub site_elbo_sum: f64,
    pub mean_log_zy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub n_sweeps: usize,
    pub sweeps: Vec<SweepRecord>,
}

fn full_sweep(state: &mut PosteriorState, data: &Dataset) -> Result<(PriorSweepStats, LikelihoodSweepStats)> {
    match state.config.sweep_order {
        SweepOrder::PriorFirst => {
            let prior = sweep_prior_sites(state)?;
            Ok((prior, sweep_likelihood(state, data)?))
        }
        SweepOrder::LikelihoodFirst => {
            let lik = sweep_likelihood(state, data)?;
            Ok((sweep_prior_sites(state)?, lik))
        }
    }
}

/// Alternate prior and likelihood sweeps until the largest change in any
/// weight mean over a full sweep drops below `tol`, or `max_sweeps` is hit.
pub fn train(data: &Dataset, shape: &NetworkShape, config: &TrainConfig) -> Result<(PosteriorState, ConvergenceReport)> {
    if data.is_empty() {
        return Err(VepError::NoDataRows);
    }
    let mut state = init_state(shape, config, data.len())?;
    check_dataset(&state, data)?;
    let mut report = ConvergenceReport {
        converged: false,
        n_sweeps: 0,
        sweeps: Vec::new(),
    };
    for _ in 0..config.max_sweeps {
        let before = state.means();
        let sweep = state.sweeps + 1;
        let (prior, lik) = full_sweep(&mut state, data).map_err(|e| match e {
            VepError::NonFiniteLayer { .. } | VepError::InvalidBelief { .. } | VepError::Domain(_) => {
                VepError::NonFiniteState { sweep }
            }
            other => other,
        })?;
        state.sweeps = sweep;
        state.check_invariants()?;
        let max_delta = before
            .iter()
            .zip(state.means())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        report.sweeps.push(SweepRecord {
            sweep,
            max_delta,
            prior_skips: prior.skips,
            likelihood_skips: lik.skips,
            site_elbo_sum: prior.elbo_sum,
            mean_log_zy: lik.mean_log_zy,
        });
        report.n_sweeps = sweep;
        if max_delta < config.tol {
            report.converged = true;
            break;
        }
    }
    Ok((state, report))
}

/// Probit-corrected `E_q[σ(a)]` for `a ~ N(m_a, v_a)`.
pub fn predictive_probability(m_a: f64, v_a: f64) -> f64 {
    sigmoid(m_a / (1.0 + std::f64::consts::PI * v_a / 8.0).sqrt())
}

/// `(m_a, v_a)` of the output pre-activation for input `x`.
pub fn predict_moments(state: &PosteriorState, x: &[f64]) -> Result<(f64, f64)> {
    let weights = state.layer_weights()?;
    Ok(forward(&state.shape, &weights, x)?.output())
}

pub fn predict(state: &PosteriorState, x: &[f64]) -> Result<f64> {
    let (m_a, v_a) = predict_moments(state, x)?;
    Ok(predictive_probability(m_a, v_a))
}

pub fn predict_all(state: &PosteriorState, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let weights = state.layer_weights()?;
    rows.iter()
        .map(|x| {
            let (m, v) = forward(&state.shape, &weights, x)?.output();
            Ok(predictive_probability(m, v))
        })
        .collect()
}
