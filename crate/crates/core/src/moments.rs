//! Deterministic propagation of means and variances through a network with
//! independent Gaussian weights and ReLU hidden units, and reverse-mode
//! accumulation of `log Z` gradients back to the weight moments.
//!
//! Every layer input is treated as independent of every other, so the
//! variance of a pre-activation is the sum of per-term product variances.
//! ReLU outputs are summarized by their first two moments before they feed
//! the next layer. With one hidden layer both output moments are exact; with
//! more, correlations between hidden units are dropped.

use crate::error::{Result, VepError};
use crate::gaussian::{inverse_mills, std_normal_cdf, std_normal_pdf};

/// Layer sizes `[K0, .., KL]` plus a bias flag per weight layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkShape {
    layer_sizes: Vec<usize>,
    bias: Vec<bool>,
}

impl NetworkShape {
    /// Same bias flag on every layer.
    pub fn new(layer_sizes: Vec<usize>, bias: bool) -> Result<Self> {
        let n = layer_sizes.len().saturating_sub(1);
        Self::with_bias_flags(layer_sizes, vec![bias; n])
    }

    pub fn with_bias_flags(layer_sizes: Vec<usize>, bias: Vec<bool>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(VepError::Config("a network needs at least an input and an output layer".into()));
        }
        if layer_sizes.iter().any(|&k| k == 0) {
            return Err(VepError::Config(format!("layer sizes must be positive: {layer_sizes:?}")));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(VepError::Config("binary classification needs a single output unit".into()));
        }
        if bias.len() != layer_sizes.len() - 1 {
            return Err(VepError::Config(format!(
                "{} bias flags for {} weight layers",
                bias.len(),
                layer_sizes.len() - 1
            )));
        }
        Ok(Self { layer_sizes, bias })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn bias_flags(&self) -> &[bool] {
        &self.bias
    }

    /// Number of weight layers `L`.
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Output units of weight layer `l` (0-based).
    pub fn rows(&self, l: usize) -> usize {
        self.layer_sizes[l + 1]
    }

    /// Inputs of weight layer `l`, bias column included.
    pub fn cols(&self, l: usize) -> usize {
        self.layer_sizes[l] + usize::from(self.bias[l])
    }

    pub fn n_weights(&self) -> usize {
        (0..self.n_layers()).map(|l| self.rows(l) * self.cols(l)).sum()
    }
}

/// Means and variances of one weight matrix, row-major `rows x cols`. When
/// the layer has a bias, its weights occupy the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub rows: usize,
    pub cols: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl LayerWeights {
    pub fn new(rows: usize, cols: usize, mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != rows * cols || var.len() != rows * cols {
            return Err(VepError::Dimension(format!(
                "{rows}x{cols} layer with {} means and {} variances",
                mean.len(),
                var.len()
            )));
        }
        Ok(Self { rows, cols, mean, var })
    }

    pub fn deterministic(rows: usize, cols: usize, mean: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        Self::new(rows, cols, mean, vec![0.0; n])
    }

    #[inline]
    pub fn index(&self, k: usize, j: usize) -> usize {
        k * self.cols + j
    }
}

/// Pre-activation moments of a layer from input and weight moments.
pub fn linear_layer_moments(m_z: &[f64], v_z: &[f64], weights: &LayerWeights) -> Result<(Vec<f64>, Vec<f64>)> {
    if m_z.len() != weights.cols || v_z.len() != weights.cols {
        return Err(VepError::Dimension(format!(
            "layer expects {} inputs, got {} means and {} variances",
            weights.cols,
            m_z.len(),
            v_z.len()
        )));
    }
    let mut m_a = vec![0.0; weights.rows];
    let mut v_a = vec![0.0; weights.rows];
    for k in 0..weights.rows {
        let row = k * weights.cols..(k + 1) * weights.cols;
        let (mw, vw) = (&weights.mean[row.clone()], &weights.var[row]);
        let mut mean = 0.0;
        let mut var = 0.0;
        for j in 0..weights.cols {
            mean += m_z[j] * mw[j];
            var += m_z[j] * m_z[j] * vw[j] + v_z[j] * mw[j] * mw[j] + v_z[j] * vw[j];
        }
        m_a[k] = mean;
        v_a[k] = var;
    }
    Ok((m_a, v_a))
}

/// Partials of `(m_a, v_a)` with respect to one input `(m_z, v_z)` and one
/// weight `(m_w, v_w)` of the sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPartials {
    pub dma_dmz: f64,
    pub dma_dvz: f64,
    pub dva_dmz: f64,
    pub dva_dvz: f64,
    pub dma_dmw: f64,
    pub dma_dvw: f64,
    pub dva_dmw: f64,
    pub dva_dvw: f64,
}

pub fn linear_moment_jacobian(m_z: f64, v_z: f64, m_w: f64, v_w: f64) -> LinearPartials {
    LinearPartials {
        dma_dmz: m_w,
        dma_dvz: 0.0,
        dva_dmz: 2.0 * m_z * v_w,
        dva_dvz: m_w * m_w + v_w,
        dma_dmw: m_z,
        dma_dvw: 0.0,
        dva_dmw: 2.0 * v_z * m_w,
        dva_dvw: m_z * m_z + v_z,
    }
}

/// ReLU output moments plus the quantities the Jacobian reuses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluMoments {
    pub m_z: f64,
    pub v_z: f64,
    /// `m_a / sqrt(v_a)`; `±inf` when `v_a = 0`.
    pub alpha: f64,
    /// `φ(α) / Φ(α)`.
    pub gamma: f64,
    pub pdf: f64,
    pub cdf: f64,
}

pub fn relu_moments(m_a: f64, v_a: f64) -> ReluMoments {
    if v_a <= 0.0 {
        let on = m_a > 0.0;
        return ReluMoments {
            m_z: m_a.max(0.0),
            v_z: 0.0,
            alpha: if on { f64::INFINITY } else { f64::NEG_INFINITY },
            gamma: 0.0,
            pdf: 0.0,
            cdf: if on { 1.0 } else { 0.0 },
        };
    }
    let sd = v_a.sqrt();
    let alpha = m_a / sd;
    let cdf = std_normal_cdf(alpha);
    let cdf_neg = std_normal_cdf(-alpha);
    let pdf = std_normal_pdf(alpha);
    let gamma = inverse_mills(alpha);
    let shifted = m_a + sd * gamma;
    let m_z = cdf * shifted;
    let v_z = m_z * shifted * cdf_neg + cdf * v_a * (1.0 - gamma * gamma - gamma * alpha);
    ReluMoments {
        m_z,
        v_z: v_z.max(0.0),
        alpha,
        gamma,
        pdf,
        cdf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluPartials {
    pub dmz_dma: f64,
    pub dmz_dva: f64,
    pub dvz_dma: f64,
    pub dvz_dva: f64,
}

/// Partials of the ReLU output moments with respect to `(m_a, v_a)`.
///
/// `v_a = 0` uses the subgradient convention: the unit is either the
/// identity or dead depending on the sign of `m_a`.
pub fn relu_moment_jacobian(cache: &ReluMoments, m_a: f64, v_a: f64) -> ReluPartials {
    if v_a <= 0.0 {
        let on = if m_a > 0.0 { 1.0 } else { 0.0 };
        return ReluPartials {
            dmz_dma: on,
            dmz_dva: 0.0,
            dvz_dma: 0.0,
            dvz_dva: on,
        };
    }
    let ReluMoments {
        m_z,
        alpha,
        gamma,
        pdf,
        cdf,
        ..
    } = *cache;
    let cdf_neg = std_normal_cdf(-alpha);
    let sd = v_a.sqrt();
    let shifted = m_a + sd * gamma;
    let spread = 1.0 - gamma * gamma - alpha * gamma;

    let dalpha_dm = 1.0 / sd;
    let dalpha_dv = -m_a / (2.0 * v_a * sd);
    let dgamma_dalpha = -(alpha * gamma + gamma * gamma);
    let dgamma_dm = dalpha_dm * dgamma_dalpha;
    let dgamma_dv = dalpha_dv * dgamma_dalpha;

    let dmz_dma = cdf * (1.0 + sd * dgamma_dm) + dalpha_dm * shifted * pdf;
    let dshifted_dv = sd * dgamma_dv + gamma / (2.0 * sd);
    let dmz_dva = dalpha_dv * shifted * pdf + cdf * dshifted_dv;

    let dvz_dma = m_z * (1.0 + sd * dgamma_dm) * cdf_neg + dalpha_dm * pdf * v_a * spread
        - shifted * (m_z * pdf * dalpha_dm - cdf_neg * dmz_dma)
        - cdf * v_a * (2.0 * gamma * dgamma_dm + alpha * dgamma_dm + gamma * dalpha_dm);

    let dvz_dva = cdf
        * (spread * (1.0 + v_a * gamma * dalpha_dv)
            - v_a * (2.0 * gamma * dgamma_dv + alpha * dgamma_dv + gamma * dalpha_dv))
        + m_z * (dshifted_dv * cdf_neg - shifted * pdf * dalpha_dv)
        + shifted * cdf_neg * dmz_dva;

    ReluPartials {
        dmz_dma,
        dmz_dva,
        dvz_dma,
        dvz_dva,
    }
}

/// Moments recorded for one weight layer during the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Input moments, bias entry `(1, 0)` appended when the layer has a bias.
    pub input_mean: Vec<f64>,
    pub input_var: Vec<f64>,
    pub m_a: Vec<f64>,
    pub v_a: Vec<f64>,
    /// ReLU outputs; `None` on the output layer.
    pub relu: Option<Vec<ReluMoments>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    /// `(m_a, v_a)` of the single output unit.
    pub fn output(&self) -> (f64, f64) {
        let last = self.layers.last().expect("trace has at least one layer");
        (last.m_a[0], last.v_a[0])
    }
}

fn check_weights(shape: &NetworkShape, weights: &[LayerWeights]) -> Result<()> {
    if weights.len() != shape.n_layers() {
        return Err(VepError::Dimension(format!(
            "{} weight layers for a {}-layer network",
            weights.len(),
            shape.n_layers()
        )));
    }
    for (l, w) in weights.iter().enumerate() {
        if w.rows != shape.rows(l) || w.cols != shape.cols(l) {
            return Err(VepError::Dimension(format!(
                "layer {l} weights are {}x{}, shape wants {}x{}",
                w.rows,
                w.cols,
                shape.rows(l),
                shape.cols(l)
            )));
        }
    }
    Ok(())
}

/// Propagate a deterministic input through the network. Hidden layers apply
/// ReLU moments; the output layer stops at the pre-activation.
pub fn forward(shape: &NetworkShape, weights: &[LayerWeights], x: &[f64]) -> Result<ForwardTrace> {
    check_weights(shape, weights)?;
    if x.len() != shape.input_size() {
        return Err(VepError::Dimension(format!(
            "input has {} features, network expects {}",
            x.len(),
            shape.input_size()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(VepError::NonFiniteLayer { layer: 0 });
    }
    let mut mean = x.to_vec();
    let mut var = vec![0.0; x.len()];
    let mut layers = Vec::with_capacity(shape.n_layers());
    for (l, w) in weights.iter().enumerate() {
        if shape.bias_flags()[l] {
            mean.push(1.0);
            var.push(0.0);
        }
        let (m_a, v_a) = linear_layer_moments(&mean, &var, w)?;
        if m_a.iter().chain(&v_a).any(|v| !v.is_finite()) {
            return Err(VepError::NonFiniteLayer { layer: l + 1 });
        }
        let last = l + 1 == shape.n_layers();
        let relu = if last {
            None
        } else {
            Some(m_a.iter().zip(&v_a).map(|(&m, &v)| relu_moments(m, v)).collect::<Vec<_>>())
        };
        let trace = LayerTrace {
            input_mean: std::mem::take(&mut mean),
            input_var: std::mem::take(&mut var),
            m_a,
            v_a,
            relu,
        };
        if let Some(relu) = &trace.relu {
            mean = relu.iter().map(|r| r.m_z).collect();
            var = relu.iter().map(|r| r.v_z).collect();
        }
        layers.push(trace);
    }
    Ok(ForwardTrace { layers })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    /// `∂ log Z / ∂ m_w`, row-major like [`LayerWeights`].
    pub d_mean: Vec<f64>,
    /// `∂ log Z / ∂ v_w`.
    pub d_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentGradients {
    pub layers: Vec<LayerGradients>,
}

/// Reverse-mode pass: seeds `∂ log Z / ∂ m_a[L]` and `∂ log Z / ∂ v_a[L]` and
/// returns the gradient for every weight mean and variance.
pub fn backward(
    trace: &ForwardTrace,
    weights: &[LayerWeights],
    d_m_out: f64,
    d_v_out: f64,
) -> Result<MomentGradients> {
    if trace.layers.len() != weights.len() {
        return Err(VepError::Dimension(format!(
            "trace has {} layers, weights have {}",
            trace.layers.len(),
            weights.len()
        )));
    }
    let n = weights.len();
    let mut grads: Vec<LayerGradients> = Vec::with_capacity(n);
    let mut g_ma = vec![d_m_out];
    let mut g_va = vec![d_v_out];
    for l in (0..n).rev() {
        let w = &weights[l];
        let t = &trace.layers[l];
        if t.m_a.len() != w.rows || t.input_mean.len() != w.cols || g_ma.len() != w.rows {
            return Err(VepError::Dimension(format!("trace does not match weights at layer {l}")));
        }
        let mut d_mean = vec![0.0; w.rows * w.cols];
        let mut d_var = vec![0.0; w.rows * w.cols];
        let mut g_mz = vec![0.0; w.cols];
        let mut g_vz = vec![0.0; w.cols];
        for k in 0..w.rows {
            let (gm, gv) = (g_ma[k], g_va[k]);
            for j in 0..w.cols {
                let idx = w.index(k, j);
                let p = linear_moment_jacobian(t.input_mean[j], t.input_var[j], w.mean[idx], w.var[idx]);
                d_mean[idx] = gm * p.dma_dmw + gv * p.dva_dmw;
                d_var[idx] = gm * p.dma_dvw + gv * p.dva_dvw;
                g_mz[j] += gm * p.dma_dmz + gv * p.dva_dmz;
                g_vz[j] += gm * p.dma_dvz + gv * p.dva_dvz;
            }
        }
        grads.push(LayerGradients { d_mean, d_var });
        if l == 0 {
            break;
        }
        // push through the ReLU of the layer below; the bias input has no parent
        let below = &trace.layers[l - 1];
        let relu = below
            .relu
            .as_ref()
            .ok_or_else(|| VepError::Dimension(format!("layer {} has no activation cache", l - 1)))?;
        g_ma = vec![0.0; relu.len()];
        g_va = vec![0.0; relu.len()];
        for (j, cache) in relu.iter().enumerate() {
            let p = relu_moment_jacobian(cache, below.m_a[j], below.v_a[j]);
            g_ma[j] = g_mz[j] * p.dmz_dma + g_vz[j] * p.dvz_dma;
            g_va[j] = g_mz[j] * p.dmz_dva + g_vz[j] * p.dvz_dva;
        }
    }
    grads.reverse();
    Ok(MomentGradients { layers: grads })
}
