mod common;

use common::{golden_max, rel_err, LITERAL_PINS};
use rand::Rng;
use vep_core::gaussian::{sigmoid, Gaussian1D};
use vep_core::jj::*;
use vep_core::oracle::{central_diff, quad_integrate, seeded_rng};

fn quadrature_log_zy(m: f64, v: f64, y: u8, zeta: f64) -> f64 {
    let g = Gaussian1D::new(m, v).unwrap();
    let sd = v.sqrt();
    let z = quad_integrate(
        |a| (jj_bound_log(a, zeta, y) + g.log_pdf(a)).exp(),
        m - 10.0 * sd,
        m + 10.0 * sd,
        1e-13,
    )
    .unwrap();
    z.ln()
}

#[test]
fn bound_never_exceeds_exact_likelihood() {
    let mut rng = seeded_rng(11, 1);
    for _ in 0..10_000 {
        let a = rng.random_range(-20.0..20.0);
        let zeta = rng.random_range(0.0..20.0);
        let y = rng.random_range(0..=1u8);
        assert!(jj_bound_log(a, zeta, y) <= exact_log_likelihood(a, y) + 1e-12, "a {a}, zeta {zeta}");
    }
}

#[test]
fn verified_log_zy_matches_quadrature() {
    for zeta in [0.1, 1.0, 5.0] {
        for y in [0u8, 1] {
            for m in [-3.0, -0.5, 0.0, 1.2, 4.0] {
                for v in [0.05, 1.0, 6.0] {
                    let closed = log_zy(m, v, y, zeta, LikelihoodMode::Verified).unwrap();
                    let quad = quadrature_log_zy(m, v, y, zeta);
                    assert!((closed - quad).abs() < 1e-8, "({m}, {v}, {y}, {zeta}): {closed} vs {quad}");
                }
            }
        }
    }
}

#[test]
fn reference_normalizer_against_quadrature() {
    let z = quadrature_log_zy(0.0, 1.0, 1, 1.0).exp();
    let closed = log_zy(0.0, 1.0, 1, 1.0, LikelihoodMode::Verified).unwrap().exp();
    assert!((z - closed).abs() < 1e-8);
}

#[test]
fn verified_gradient_matches_finite_differences() {
    let (d_m, d_v) = grad_log_zy(0.0, 1.0, 1, 1.0, LikelihoodMode::Verified).unwrap();
    let fd_m = central_diff(|m| log_zy(m, 1.0, 1, 1.0, LikelihoodMode::Verified).unwrap(), 0.0, 1e-5).unwrap();
    let fd_v = central_diff(|v| log_zy(0.0, v, 1, 1.0, LikelihoodMode::Verified).unwrap(), 1.0, 1e-5).unwrap();
    assert!(rel_err(d_m, fd_m) <= 1e-6);
    assert!(rel_err(d_v, fd_v) <= 1e-6);

    let mut rng = seeded_rng(5, 2);
    for _ in 0..200 {
        let m = rng.random_range(-4.0..4.0);
        let v = rng.random_range(0.05..5.0);
        let zeta = rng.random_range(0.01..6.0);
        let y = rng.random_range(0..=1u8);
        let (d_m, d_v) = grad_log_zy(m, v, y, zeta, LikelihoodMode::Verified).unwrap();
        let fd_m = central_diff(|t| log_zy(t, v, y, zeta, LikelihoodMode::Verified).unwrap(), m, 1e-5).unwrap();
        let fd_v = central_diff(|t| log_zy(m, t, y, zeta, LikelihoodMode::Verified).unwrap(), v, 1e-5).unwrap();
        assert!((d_m - fd_m).abs() <= 1e-6 * fd_m.abs().max(1e-3));
        assert!((d_v - fd_v).abs() <= 1e-6 * fd_v.abs().max(1e-3));
    }
}

#[test]
fn literal_gradient_is_derivative_of_literal_normalizer() {
    for (m, v, y, zeta) in [(0.3, 1.4, 1u8, 0.7), (-1.0, 0.6, 0, 2.0), (2.2, 3.0, 1, 4.0)] {
        let (d_m, d_v) = grad_log_zy(m, v, y, zeta, LikelihoodMode::PaperLiteral).unwrap();
        let fd_m = central_diff(|t| log_zy(t, v, y, zeta, LikelihoodMode::PaperLiteral).unwrap(), m, 1e-5).unwrap();
        let fd_v = central_diff(|t| log_zy(m, t, y, zeta, LikelihoodMode::PaperLiteral).unwrap(), v, 1e-5).unwrap();
        assert!(rel_err(d_m, fd_m) < 1e-6);
        assert!(rel_err(d_v, fd_v) < 1e-6);
    }
}

#[test]
fn zeta_update_maximizes_expected_bound() {
    for (m, v) in [(1.0, 1.0), (0.0, 0.3), (-2.0, 0.5), (0.4, 3.0)] {
        let best = golden_max(|z| expected_bound_log(m, v, 1, z), 1e-6, 20.0, 1e-10);
        assert!((update_zeta(m, v).unwrap() - best).abs() < 1e-6, "({m}, {v})");
    }
    assert!((update_zeta(1.0, 1.0).unwrap() - 1.414_213_6).abs() < 1e-7);
}

#[test]
fn expected_bound_is_below_expected_log_likelihood() {
    for (m, v, zeta) in [(0.0, 1.0, 1.0), (1.5, 0.2, 0.5), (-2.0, 4.0, 3.0)] {
        let g = Gaussian1D::new(m, v).unwrap();
        let sd = f64::sqrt(v);
        let exact = quad_integrate(
            |a| sigmoid(a).ln() * g.log_pdf(a).exp(),
            m - 10.0 * sd,
            m + 10.0 * sd,
            1e-12,
        )
        .unwrap();
        assert!(expected_bound_log(m, v, 1, zeta) <= exact + 1e-10);
    }
}

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-12 * want.abs().max(1.0)
}

#[test]
fn literal_formulas_reproduce_hand_substituted_values() {
    for (m, v, y, zeta, want) in LITERAL_PINS {
        let (m_y, v_y) = paper_my_vy(m, v, zeta);
        assert!(close(m_y, want[0]) && close(v_y, want[1]), "m_y, v_y at {m}");
        let lz = log_zy(m, v, y, zeta, LikelihoodMode::PaperLiteral).unwrap();
        assert!(close(lz, want[2]), "log Z_y at {m}: {lz}");
        let (d_m, d_v) = grad_log_zy(m, v, y, zeta, LikelihoodMode::PaperLiteral).unwrap();
        assert!(close(d_m, want[3]) && close(d_v, want[4]), "gradients at {m}");
        match update_q_al_paper(m, v, y, m_y, v_y) {
            Ok((m_new, v_new)) => assert!(close(m_new, want[5]) && close(v_new, want[6])),
            Err(e) => {
                assert!(e.is_skip());
                assert!(want[6] <= 0.0, "update at {m} rejected a positive variance");
            }
        }
    }
}
