mod common;

use common::normal_draw;
use vep_core::dataset::{generate_synthetic, Dataset, SyntheticKind};
use vep_core::engine::*;
use vep_core::gaussian::{sigmoid, Gaussian1D, NaturalParams};
use vep_core::jj::{jj_bound_log, LikelihoodMode};
use vep_core::moments::NetworkShape;
use vep_core::oracle::{mc_moments, quad_integrate, quad_integrate_2d};
use vep_core::site::{SiteState, TauExpectation};
use vep_core::VepError;

fn single_weight() -> NetworkShape {
    NetworkShape::new(vec![1, 1], false).unwrap()
}

fn one_row(x: f64, y: u8) -> Dataset {
    Dataset::new(vec![vec![x]], vec![y], vec!["x0".into()]).unwrap()
}

#[test]
fn init_state_follows_hyperprior() {
    let shape = NetworkShape::new(vec![3, 4, 1], true).unwrap();
    let state = init_state(&shape, &TrainConfig::default(), 7).unwrap();
    assert_eq!(state.n_weights(), shape.n_weights());
    for w in state.weights() {
        assert_eq!(w.marginals.q_tau, Gaussian1D::new(0.0, 1.0).unwrap());
        assert_eq!(w.site_tau, SiteState { m_tilde: 0.0, v_tilde: 1.0, log_scale: 0.0 });
        assert!(w.site_w.is_vacuous());
        assert_eq!(w.marginals.q_w.variance(), 1.0);
    }
    assert!(state.layers[1].weights.iter().all(|w| w.marginals.q_w.mean() == 0.0));
    assert!(state.observations.iter().all(|o| o.zeta == 1.0));
    assert_eq!(state.reconstruction_error(), 0.0);

    let v0 = TrainConfig { v0: 0.25, fan_in_scaling: true, ..TrainConfig::default() };
    let scaled = init_state(&shape, &v0, 0).unwrap();
    assert!(scaled.layers[0].weights.iter().all(|w| w.marginals.q_w.variance() == 0.25));
    assert!(scaled.weights().all(|w| w.marginals.q_tau.variance() == 0.25));
}

#[test]
fn init_state_is_deterministic_and_allows_no_observations() {
    let shape = NetworkShape::new(vec![2, 5, 1], true).unwrap();
    let c = TrainConfig { seed: 9, ..TrainConfig::default() };
    assert_eq!(init_state(&shape, &c, 3).unwrap(), init_state(&shape, &c, 3).unwrap());
    let other = TrainConfig { seed: 10, ..c };
    assert_ne!(init_state(&shape, &c, 3).unwrap(), init_state(&shape, &other, 3).unwrap());
    let empty = init_state(&shape, &c, 0).unwrap();
    assert!(empty.observations.is_empty());
    assert!(init_state(&shape, &TrainConfig { damping: 0.0, ..c }, 0).is_err());
    assert!(init_state(&shape, &TrainConfig { v0: -1.0, ..c }, 0).is_err());
}

fn run_prior_to_fixed_point(state: &mut PosteriorState, max: usize) -> usize {
    for sweep in 1..=max {
        let before = state.layers[0].weights[0].marginals.q_w;
        sweep_prior_sites(state).unwrap();
        let after = state.layers[0].weights[0].marginals.q_w;
        if (after.mean() - before.mean()).abs() < 1e-4 && (after.variance() - before.variance()).abs() < 1e-4 {
            return sweep;
        }
    }
    panic!("no fixed point within {max} sweeps");
}

/// Mean of `w` under `evidence(w) ∫_{τ≥0} N(w | 0, 1/τ) 2N(τ | 0, v0) dτ`.
fn quadrature_marginal_mean(evidence: &Gaussian1D, v0: f64) -> f64 {
    let sd = evidence.variance().sqrt();
    let weight = |w: f64, tau: f64| {
        let prior = Gaussian1D::new(0.0, 1.0 / tau).unwrap().log_pdf(w);
        let hyper = 2f64.ln() + Gaussian1D::new(0.0, v0).unwrap().log_pdf(tau);
        (evidence.log_pdf(w) + prior + hyper).exp()
    };
    let range_w = (evidence.mean() - 12.0 * sd, evidence.mean() + 12.0 * sd);
    let range_tau = (1e-12, 12.0 * v0.sqrt());
    let z = quad_integrate_2d(weight, range_w, range_tau, 1e-10).unwrap();
    let first = quad_integrate_2d(|w, t| w * weight(w, t), range_w, range_tau, 1e-10).unwrap();
    first / z
}

#[test]
fn prior_sweeps_reach_a_fixed_point_near_the_prior_predictive_marginal() {
    for mode in [TauExpectation::ClampedMean, TauExpectation::TruncatedMean] {
        let config = TrainConfig { tau_expectation_mode: mode, ..TrainConfig::default() };
        let mut state = init_state(&single_weight(), &config, 0).unwrap();
        run_prior_to_fixed_point(&mut state, 50);
        let q = state.layers[0].weights[0].marginals.q_w;
        // symmetric evidence: the exact marginal mean is zero
        assert!(q.mean().abs() <= 0.1 * q.variance().sqrt());
        assert!(state.reconstruction_error() < 1e-10);
    }

    let config = TrainConfig { tau_expectation_mode: TauExpectation::TruncatedMean, ..TrainConfig::default() };
    for (m, v) in [(1.0, 0.5), (1.0, 1.0), (2.0, 0.2), (0.5, 2.0)] {
        let mut state = init_state(&single_weight(), &config, 0).unwrap();
        let evidence = Gaussian1D::new(m, v).unwrap();
        let w = &mut state.layers[0].weights[0];
        w.evidence = SiteState::from_natural(evidence.precision(), evidence.shift(), 0.0);
        w.marginals.q_w = evidence;
        run_prior_to_fixed_point(&mut state, 50);
        let got = state.layers[0].weights[0].marginals.q_w.mean();
        let want = quadrature_marginal_mean(&evidence, config.v0);
        assert!((got - want).abs() <= 0.1 * want.abs(), "evidence ({m}, {v}): {got} vs {want}");
    }
}

#[test]
fn undamped_sweep_at_fixed_point_is_stationary() {
    let config = TrainConfig { damping: 1.0, ..TrainConfig::default() };
    let mut state = init_state(&NetworkShape::new(vec![2, 1], true).unwrap(), &config, 0).unwrap();
    for _ in 0..5 {
        sweep_prior_sites(&mut state).unwrap();
    }
    let settled = state.clone();
    sweep_prior_sites(&mut state).unwrap();
    for (a, b) in settled.weights().zip(state.weights()) {
        assert!((a.marginals.q_w.mean() - b.marginals.q_w.mean()).abs() < 1e-10);
        assert!((a.marginals.q_w.variance() - b.marginals.q_w.variance()).abs() < 1e-10);
        assert!((a.marginals.q_tau.mean() - b.marginals.q_tau.mean()).abs() < 1e-10);
    }
}

#[test]
fn negative_cavity_leaves_the_weight_untouched() {
    let mut state = init_state(&single_weight(), &TrainConfig::default(), 0).unwrap();
    let w = &mut state.layers[0].weights[0];
    // site precision 2 against a marginal precision 1
    w.site_w = SiteState { m_tilde: 0.0, v_tilde: 0.5, log_scale: 0.0 };
    w.evidence = SiteState::from_natural(-1.0, 0.0, 0.0);
    let before = *w;
    let stats = sweep_prior_sites(&mut state).unwrap();
    assert_eq!(stats.skips, 1);
    assert_eq!(state.prior_skips, 1);
    assert_eq!(state.layers[0].weights[0], before);
}

#[test]
fn zero_gradients_leave_marginals_unchanged() {
    let mut state = init_state(&single_weight(), &TrainConfig::default(), 2).unwrap();
    let before = state.layers[0].weights[0].marginals.q_w;
    let data = Dataset::new(vec![vec![0.0], vec![0.0]], vec![1, 0], vec!["x0".into()]).unwrap();
    sweep_likelihood(&mut state, &data).unwrap();
    let after = state.layers[0].weights[0].marginals.q_w;
    assert!((after.mean() - before.mean()).abs() < 1e-15);
    assert!((after.variance() - before.variance()).abs() < 1e-15);
}

#[test]
fn single_observation_update_is_exact_bound_posterior() {
    for (x, y) in [(1.5, 1u8), (1.5, 0), (-0.7, 1)] {
        let config = TrainConfig { damping: 1.0, ..TrainConfig::default() };
        let mut state = init_state(&single_weight(), &config, 1).unwrap();
        sweep_likelihood(&mut state, &one_row(x, y)).unwrap();
        let q = state.layers[0].weights[0].marginals.q_w;
        assert!((q.mean() * x).signum() == if y == 1 { 1.0 } else { -1.0 });

        let prior = Gaussian1D::new(0.0, 1.0).unwrap();
        let tilted = |w: f64| (prior.log_pdf(w) + jj_bound_log(w * x, 1.0, y)).exp();
        let z = quad_integrate(tilted, -12.0, 12.0, 1e-13).unwrap();
        let mean = quad_integrate(|w| w * tilted(w), -12.0, 12.0, 1e-13).unwrap() / z;
        let second = quad_integrate(|w| w * w * tilted(w), -12.0, 12.0, 1e-13).unwrap() / z;
        assert!((q.mean() - mean).abs() < 1e-4);
        assert!((q.variance() - (second - mean * mean)).abs() < 1e-4);
        assert!(state.reconstruction_error() < 1e-10);
    }
}

#[test]
fn single_observation_literal_mode_pin() {
    let config = TrainConfig { damping: 1.0, likelihood_mode: LikelihoodMode::PaperLiteral, ..TrainConfig::default() };
    let mut state = init_state(&single_weight(), &config, 1).unwrap();
    sweep_likelihood(&mut state, &one_row(1.5, 1)).unwrap();
    let q = state.layers[0].weights[0].marginals.q_w;
    assert!((q.mean() - 0.493_459_424_972_248_59).abs() < 1e-12);
    assert!((q.variance() - 1.657_945_899_962_998_1).abs() < 1e-12);
    let (m_new, v_new) = state.observations[0].literal_q_al.expect("output update recorded");
    assert!(m_new.is_finite() && v_new > 0.0);
}

#[test]
fn infinite_tolerance_runs_one_sweep() {
    let (data, _) = generate_synthetic(SyntheticKind::Separable, 30, 2, 1).unwrap();
    let config = TrainConfig { tol: f64::INFINITY, ..TrainConfig::default() };
    let (state, report) = train(&data, &NetworkShape::new(vec![2, 1], true).unwrap(), &config).unwrap();
    assert_eq!(report.n_sweeps, 1);
    assert_eq!(state.sweeps, 1);
    assert!(report.converged);
}

#[test]
fn training_is_deterministic_and_site_consistent() {
    let (data, _) = generate_synthetic(SyntheticKind::Sparse, 80, 4, 3).unwrap();
    let shape = NetworkShape::new(vec![4, 3, 1], true).unwrap();
    let config = TrainConfig { max_sweeps: 15, seed: 4, ..TrainConfig::default() };
    let (a, ra) = train(&data, &shape, &config).unwrap();
    let (b, rb) = train(&data, &shape, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert!(a.reconstruction_error() < 1e-10);
    assert!(a.weights().all(|w| w.marginals.q_w.variance() > 0.0 && w.marginals.q_tau.variance() > 0.0));
    assert_eq!(ra.sweeps.len(), ra.n_sweeps);
    assert!(ra.sweeps.iter().all(|s| s.site_elbo_sum.is_finite() && s.mean_log_zy.is_finite()));
}

#[test]
fn separable_data_is_learned_within_100_sweeps() {
    let (data, _) = generate_synthetic(SyntheticKind::Separable, 200, 2, 7).unwrap();
    let config = TrainConfig { max_sweeps: 100, ..TrainConfig::default() };
    for layers in [vec![2, 1], vec![2, 4, 1]] {
        let (state, _) = train(&data, &NetworkShape::new(layers, true).unwrap(), &config).unwrap();
        let p = predict_all(&state, &data.features).unwrap();
        let correct = p.iter().zip(&data.labels).filter(|(p, y)| (**p >= 0.5) == (**y == 1)).count();
        assert!(correct as f64 / data.len() as f64 >= 0.95);
    }
}

#[test]
fn noise_labels_give_uncertain_predictions() {
    let (data, _) = generate_synthetic(SyntheticKind::Noise, 200, 3, 5).unwrap();
    let (state, _) = train(&data, &NetworkShape::new(vec![3, 1], true).unwrap(), &TrainConfig::default()).unwrap();
    let p = predict_all(&state, &data.features).unwrap();
    let spread = p.iter().map(|p| (p - 0.5).abs()).sum::<f64>() / p.len() as f64;
    assert!(spread < 0.15, "{spread}");
}

#[test]
fn non_finite_state_reports_the_sweep() {
    let data = Dataset::new(vec![vec![1e300], vec![-1e300]], vec![1, 0], vec!["x0".into()]).unwrap();
    let err = train(&data, &single_weight(), &TrainConfig::default()).unwrap_err();
    assert_eq!(err, VepError::NonFiniteState { sweep: 1 });
}

#[test]
fn train_rejects_mismatched_dataset() {
    let (data, _) = generate_synthetic(SyntheticKind::Noise, 10, 3, 0).unwrap();
    assert!(matches!(
        train(&data, &NetworkShape::new(vec![2, 1], true).unwrap(), &TrainConfig::default()),
        Err(VepError::Dimension(_))
    ));
}

#[test]
fn predictive_probability_cases() {
    for v in [0.0, 0.5, 100.0] {
        assert_eq!(predictive_probability(0.0, v), 0.5);
    }
    for m in [-3.0, 0.2, 5.0] {
        assert_eq!(predictive_probability(m, 0.0), sigmoid(m));
    }
    let est = mc_moments(|r| sigmoid(normal_draw(r, 2.0, 4.0)), 100_000, 1).unwrap();
    assert!((predictive_probability(2.0, 4.0) - est.mean).abs() < 0.02);
}

#[test]
fn zero_weight_model_predicts_one_half() {
    let shape = NetworkShape::new(vec![3, 1], true).unwrap();
    let state = init_state(&shape, &TrainConfig::default(), 0).unwrap();
    for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]] {
        assert_eq!(predict(&state, &x).unwrap(), 0.5);
    }
}
