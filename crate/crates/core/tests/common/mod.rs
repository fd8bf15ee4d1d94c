#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use vep_core::moments::{LayerWeights, NetworkShape};
use vep_core::oracle::{seeded_rng, OracleRng};

/// A 2-3-1 network with biases, random weight means in [-1, 1], variances in
/// [0.05, 0.5], and a random input in [-2, 2]².
pub fn random_2_3_1(seed: u64) -> (NetworkShape, Vec<LayerWeights>, Vec<f64>) {
    let shape = NetworkShape::new(vec![2, 3, 1], true).unwrap();
    let mut rng = seeded_rng(seed, 0x2311);
    let weights = (0..shape.n_layers())
        .map(|l| {
            let (rows, cols) = (shape.rows(l), shape.cols(l));
            let mean = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let var = (0..rows * cols).map(|_| rng.random_range(0.05..0.5)).collect();
            LayerWeights::new(rows, cols, mean, var).unwrap()
        })
        .collect();
    let x = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
    (shape, weights, x)
}

/// Output pre-activation of one network drawn from the weight marginals.
pub fn sample_output(rng: &mut OracleRng, shape: &NetworkShape, weights: &[LayerWeights], x: &[f64]) -> f64 {
    let mut z = x.to_vec();
    for (l, w) in weights.iter().enumerate() {
        if shape.bias_flags()[l] {
            z.push(1.0);
        }
        let mut a = vec![0.0; w.rows];
        for (k, out) in a.iter_mut().enumerate() {
            for (j, zj) in z.iter().enumerate() {
                let idx = w.index(k, j);
                let e: f64 = StandardNormal.sample(rng);
                *out += (w.mean[idx] + w.var[idx].sqrt() * e) * zj;
            }
        }
        z = if l + 1 == weights.len() { a } else { a.into_iter().map(|v| v.max(0.0)).collect() };
    }
    z[0]
}

pub fn normal_draw(rng: &mut OracleRng, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt()).unwrap().sample(rng)
}

/// Maximizer of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    while (hi - lo).abs() > tol {
        if f(c) > f(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - r * (hi - lo);
        d = lo + r * (hi - lo);
    }
    0.5 * (lo + hi)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

// (m_a, v_a, y, ζ) → [m_y, v_y, log Z_y, ∂/∂m, ∂/∂v, m_new, v_new], substituted
// by hand into the printed formulas at 40 digits.
pub const LITERAL_PINS: [(f64, f64, u8, f64, [f64; 7]); 10] = [
    (0.0, 1.0, 1, 1.0, [0.5, -1.2310585786300049, -0.9213371205847962, 0.40615451504869062, 0.48863526009590915, 0.40615451504869062, 1.8123090300973812]),
    (0.5, 2.0, 0, 0.3, [0.25, -0.74814172270552996, -0.73208694743452053, -0.16708064288669574, 0.22280877422208545, 0.16583871422660852, 3.6708064288669574]),
    (-1.2, 0.7, 1, 2.5, [2.2142857142857143, -1.5982281565629312, -0.69209744640592934, -1.0853856318496889, -0.63316796187585114, -1.9597699422947821, -0.49775496785295069]),
    (2.0, 4.0, 1, 1.7, [0.0, -0.45325572642145018, 0.57984088763534624, 0.55156501159688125, -0.054724898339896595, 4.206260046387525, -2.618780139162575]),
    (-0.3, 0.2, 0, 0.05, [1.9999999999999999, -5.2499479296842066, -1.367091453069386, -1.9047807966738283, 1.3378997425202353, -0.68095615933476568, 0.16190438406652346]),
    (1.1, 1.5, 0, 3.0, [-0.23333333333333339, -0.81752470894081107, -0.78490310941538049, 0.19027627404325689, 0.15038984456672796, 1.3854144110648854, 2.0952929145067605]),
    (-2.5, 3.0, 1, 0.8, [1.3333333333333333, -0.57080143474284889, -0.54125255350357688, -0.19465807958448397, -0.045940142554401676, -3.0839742387534519, 1.8320515224930962]),
    (0.05, 0.9, 0, 6.0, [0.44444444444444444, -1.1940323405850053, -0.92489070656474872, -0.41357938450132851, 0.62547481674120553, -0.32222144605119567, 1.7747203982203099]),
    (3.3, 0.4, 1, 0.5, [-7.7499999999999991, -2.744918662403709, 12.52240955289292, 7.9692707472957282, -32.853378293724368, 6.4877082989182913, -20.274565252984346]),
    (-0.7, 5.0, 0, 1.2, [0.63999999999999999, -0.42377065291584804, -0.0063768112101925228, -0.30205017529946349, 0.050525469547834597, -2.2102508764973174, 5.2454157674308143]),
];
