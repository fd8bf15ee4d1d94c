//! Ground-truth engines used to verify the closed-form moment and gradient
//! code: seeded Monte Carlo, adaptive Gauss-Kronrod quadrature, and central
//! finite differences.
//!
//! Monte Carlo uses ChaCha8, a counter-based generator. A `(seed, stream)`
//! pair addresses an independent sequence, so batches can be drawn from
//! separate streams and still be reproduced exactly on any platform.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VepError};

pub type OracleRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64, stream: u64) -> OracleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_error_mean: f64,
    pub std_error_var: f64,
    pub n_samples: usize,
}

/// Running central moments (orders 2..4), merged one sample at a time.
#[derive(Debug, Default, Clone, Copy)]
struct Moments4 {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments4 {
    fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }
}

/// Sample mean and variance of `n` draws, with delete-one jackknife standard
/// errors for both. The jackknife is evaluated in closed form from the
/// running central moments, so memory use is constant in `n`.
pub fn mc_moments<F>(mut sampler: F, n: usize, seed: u64) -> Result<MCEstimate>
where
    F: FnMut(&mut OracleRng) -> f64,
{
    if n < 100 {
        return Err(VepError::Domain(format!("mc_moments needs n >= 100, got {n}")));
    }
    let mut rng = seeded_rng(seed, 0);
    let mut acc = Moments4::default();
    for _ in 0..n {
        acc.push(sampler(&mut rng));
    }
    let nf = n as f64;
    let variance = acc.m2 / (nf - 1.0);
    let std_error_mean = (variance / nf).sqrt();
    // leave-one-out variances: s2_{-i} = (M2 - n/(n-1) d_i^2) / (n-2)
    let c = nf / ((nf - 1.0) * (nf - 2.0));
    let spread = (acc.m4 - acc.m2 * acc.m2 / nf).max(0.0);
    let std_error_var = ((nf - 1.0) / nf * c * c * spread).sqrt();
    Ok(MCEstimate {
        mean: acc.mean,
        variance,
        std_error_mean,
        std_error_var,
        n_samples: n,
    })
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 5000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        // odd Kronrod indices coincide with the 7-point Gauss nodes
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[lo, hi]` to an
/// absolute error estimate `<= tol`.
pub fn quad_integrate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(VepError::Domain(format!(
            "quadrature needs finite bounds and tol > 0 (lo={lo}, hi={hi}, tol={tol})"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if lo < hi { (lo, hi, 1.0) } else { (hi, lo, -1.0) };
    let first = kronrod15(&mut f, lo, hi);
    if !first.value.is_finite() {
        return Err(VepError::Domain("integrand is not finite".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut total_err = first.error;
    heap.push(first);
    while total_err > tol {
        if heap.len() >= MAX_INTERVALS {
            return Err(VepError::Quadrature {
                achieved: total_err,
                requested: tol,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // interval cannot be split further in floating point
            return Err(VepError::Quadrature {
                achieved: total_err,
                requested: tol,
            });
        }
        let left = kronrod15(&mut f, worst.lo, mid);
        let right = kronrod15(&mut f, mid, worst.hi);
        if !left.value.is_finite() || !right.value.is_finite() {
            return Err(VepError::Domain("integrand is not finite".into()));
        }
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if heap.len() % 64 == 0 {
            // refresh the running sum to shed accumulated cancellation error
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    let total: f64 = heap.iter().map(|s| s.value).sum();
    Ok(sign * total)
}

/// `log ∫ exp(log_f(x)) dx` over `[lo, hi]` with relative tolerance `rel_tol`.
/// The integrand is rescaled by its maximum on a probe grid before
/// exponentiation, so integrals far below `f64::MIN_POSITIVE` are fine.
pub fn quad_integrate_log<F: FnMut(f64) -> f64>(
    mut log_f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    let probes = 2001;
    let step = (hi - lo) / (probes - 1) as f64;
    let logs: Vec<f64> = (0..probes).map(|i| log_f(lo + step * i as f64)).collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(VepError::Domain("log-integrand has no finite values".into()));
    }
    // trapezoid estimate of the scaled integral sets the absolute tolerance
    let rough: f64 = logs.iter().map(|l| (l - peak).exp()).sum::<f64>() * step.abs();
    let scaled = quad_integrate(|x| (log_f(x) - peak).exp(), lo, hi, rel_tol * rough.max(f64::MIN_POSITIVE))?;
    Ok(peak + scaled.ln())
}

/// Iterated adaptive quadrature over a rectangle.
pub fn quad_integrate_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    x_range: (f64, f64),
    y_range: (f64, f64),
    tol: f64,
) -> Result<f64> {
    let inner_tol = tol / (4.0 * (x_range.1 - x_range.0).abs().max(1.0));
    let mut failure = None;
    let outer = quad_integrate(
        |x| match quad_integrate(|y| f(x, y), y_range.0, y_range.1, inner_tol) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        x_range.0,
        x_range.1,
        tol,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(outer),
    }
}

/// Central differences with per-coordinate step `rel_step * max(1, |x_i|)`.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], rel_step: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(VepError::FiniteDifference { coordinate: i });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Scalar convenience wrapper around [`finite_diff_grad`].
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, rel_step: f64) -> Result<f64> {
    finite_diff_grad(|p| f(p[0]), &[x], rel_step).map(|g| g[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn normal_pdf(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn constant_sampler_has_zero_spread() {
        let est = mc_moments(|_| 3.0, 10_000, 1).unwrap();
        assert_eq!(est.mean, 3.0);
        assert_eq!(est.variance, 0.0);
        assert_eq!(est.std_error_mean, 0.0);
        assert_eq!(est.std_error_var, 0.0);
    }

    #[test]
    fn standard_normal_moments() {
        let est = mc_moments(|r| StandardNormal.sample(r), 1_000_000, 11).unwrap();
        assert!(est.mean.abs() < 4.0 * est.std_error_mean);
        assert!((est.variance - 1.0).abs() < 4.0 * est.std_error_var);
        // N(0,1): SE(var) ≈ sqrt(2/n)
        assert!((est.std_error_var / (2.0f64 / 1e6).sqrt() - 1.0).abs() < 0.02);
    }

    #[test]
    fn small_n_is_rejected() {
        assert!(mc_moments(|_| 1.0, 10, 0).is_err());
    }

    #[test]
    fn same_seed_same_estimate() {
        let a = mc_moments(|r| StandardNormal.sample(r), 5000, 42).unwrap();
        let b = mc_moments(|r| StandardNormal.sample(r), 5000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn doubling_n_shrinks_standard_error() {
        for seed in 0..5 {
            let small = mc_moments(|r| StandardNormal.sample(r), 200_000, seed).unwrap();
            let big = mc_moments(|r| StandardNormal.sample(r), 400_000, seed + 100).unwrap();
            let ratio = small.std_error_mean / big.std_error_mean;
            assert!((1.30..=1.53).contains(&ratio), "ratio {ratio}");
            let ratio = small.std_error_var / big.std_error_var;
            assert!((1.30..=1.53).contains(&ratio), "var ratio {ratio}");
        }
    }

    #[test]
    fn quadrature_normalization_and_half_normal_mean() {
        let total = quad_integrate(normal_pdf, -10.0, 10.0, 1e-12).unwrap();
        assert!((total - 1.0).abs() < 1e-10);
        let first = quad_integrate(|x| x * normal_pdf(x), 0.0, 10.0, 1e-12).unwrap();
        assert!((first - 0.398_942_280_401_432_7).abs() < 1e-8);
    }

    #[test]
    fn quadrature_split_consistency() {
        let f = |x: f64| (3.0 * x).sin() * (-x * x).exp() + x.abs().sqrt();
        let whole = quad_integrate(f, -2.0, 3.0, 1e-11).unwrap();
        for split in [-1.3, 0.0, 0.1, 2.9] {
            let parts = quad_integrate(f, -2.0, split, 1e-11).unwrap()
                + quad_integrate(f, split, 3.0, 1e-11).unwrap();
            assert!((whole - parts).abs() < 1e-10, "split {split}");
        }
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let a = quad_integrate(|x| x * x, 0.0, 2.0, 1e-12).unwrap();
        let b = quad_integrate(|x| x * x, 2.0, 0.0, 1e-12).unwrap();
        assert!((a - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(a, -b);
    }

    #[test]
    fn quadrature_reports_non_convergence() {
        // infinitely many oscillations near zero exhaust the interval budget
        let err = quad_integrate(|x| (1.0 / x).sin(), 1e-12, 1.0, 1e-12).unwrap_err();
        assert!(matches!(err, VepError::Quadrature { .. }));
        // divergent: subdivision eventually evaluates the pole
        assert!(quad_integrate(|x| 1.0 / x, 0.0, 1.0, 1e-6).is_err());
    }

    #[test]
    fn log_domain_quadrature_handles_underflow() {
        // ∫ exp(-(x-1000)^2/2 - 5000) dx = sqrt(2π) e^-5000
        let got = quad_integrate_log(|x| -0.5 * (x - 1000.0).powi(2) - 5000.0, 990.0, 1010.0, 1e-12).unwrap();
        let want = 0.5 * (2.0 * PI).ln() - 5000.0;
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_gaussian() {
        let v = quad_integrate_2d(|x, y| normal_pdf(x) * normal_pdf(y), (-9.0, 9.0), (-9.0, 9.0), 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn finite_difference_of_square() {
        let g = finite_diff_grad(|p| p[0] * p[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_step_robustness() {
        let f = |p: &[f64]| p[0].sin() * p[1].exp() + p[0] * p[1] * p[1];
        let x = [0.7, -1.2];
        let coarse = finite_diff_grad(f, &x, 1e-4).unwrap();
        let fine = finite_diff_grad(f, &x, 1e-6).unwrap();
        for i in 0..2 {
            // truncation error of central differences is ~ h^2 |f'''| / 6
            let h = 1e-4 * x[i].abs().max(1.0);
            let truncation = h * h * 10.0 / 6.0;
            assert!((coarse[i] - fine[i]).abs() <= 10.0 * truncation.max(1e-12));
        }
    }

    #[test]
    fn finite_difference_reports_non_finite() {
        let err = finite_diff_grad(|p| (p[0]).ln(), &[0.0], 1e-5).unwrap_err();
        assert_eq!(err, VepError::FiniteDifference { coordinate: 0 });
    }
}
