//! Versioned JSON model files. Every real number is stored as a decimal
//! string with 17 significant digits, which reproduces any `f64` exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{LayerState, ObservationDiag, PosteriorState, TrainConfig, WeightState};
use crate::error::{Result, VepError};
use crate::gaussian::Gaussian1D;
use crate::moments::NetworkShape;
use crate::site::{ParamMarginals, SiteState};

pub const FORMAT: &str = "vep-model";
pub const VERSION: u32 = 1;

fn enc(x: f64) -> String {
    format!("{x:.16e}")
}

fn dec(s: &str) -> Result<f64> {
    s.parse().map_err(|_| VepError::Model(format!("\"{s}\" is not a number")))
}

#[derive(Serialize, Deserialize)]
struct ConfigRecord {
    v0: String,
    damping: String,
    max_sweeps: usize,
    tol: String,
    likelihood_mode: String,
    tau_expectation_mode: String,
    seed: u64,
    fan_in_scaling: bool,
    sweep_order: String,
}

#[derive(Serialize, Deserialize)]
struct ShapeRecord {
    layer_sizes: Vec<usize>,
    bias: Vec<bool>,
}

/// `[mean, variance]` for beliefs, `[m_tilde, v_tilde, log_scale]` for sites.
#[derive(Serialize, Deserialize)]
struct WeightRecord {
    q_w: [String; 2],
    q_tau: [String; 2],
    site_w: [String; 3],
    site_tau: [String; 3],
    evidence: [String; 3],
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    weights: Vec<WeightRecord>,
}

#[derive(Serialize, Deserialize)]
struct ObservationRecord {
    zeta: String,
    log_zy: Option<String>,
    literal_q_al: Option<[String; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    shape: ShapeRecord,
    config: ConfigRecord,
    sweeps: usize,
    prior_skips: u64,
    likelihood_skips: u64,
    layers: Vec<LayerRecord>,
    observations: Vec<ObservationRecord>,
}

fn enc_belief(g: &Gaussian1D) -> [String; 2] {
    [enc(g.mean()), enc(g.variance())]
}

fn enc_site(s: &SiteState) -> [String; 3] {
    [enc(s.m_tilde), enc(s.v_tilde), enc(s.log_scale)]
}

fn dec_belief(r: &[String; 2]) -> Result<Gaussian1D> {
    Gaussian1D::new(dec(&r[0])?, dec(&r[1])?)
}

fn dec_site(r: &[String; 3]) -> Result<SiteState> {
    Ok(SiteState {
        m_tilde: dec(&r[0])?,
        v_tilde: dec(&r[1])?,
        log_scale: dec(&r[2])?,
    })
}

fn to_record(state: &PosteriorState) -> ModelFile {
    let c = &state.config;
    ModelFile {
        format: FORMAT.into(),
        version: VERSION,
        shape: ShapeRecord {
            layer_sizes: state.shape.layer_sizes().to_vec(),
            bias: state.shape.bias_flags().to_vec(),
        },
        config: ConfigRecord {
            v0: enc(c.v0),
            damping: enc(c.damping),
            max_sweeps: c.max_sweeps,
            tol: enc(c.tol),
            likelihood_mode: c.likelihood_mode.to_string(),
            tau_expectation_mode: c.tau_expectation_mode.to_string(),
            seed: c.seed,
            fan_in_scaling: c.fan_in_scaling,
            sweep_order: c.sweep_order.to_string(),
        },
        sweeps: state.sweeps,
        prior_skips: state.prior_skips,
        likelihood_skips: state.likelihood_skips,
        layers: state
            .layers
            .iter()
            .map(|l| LayerRecord {
                rows: l.rows,
                cols: l.cols,
                weights: l
                    .weights
                    .iter()
                    .map(|w| WeightRecord {
                        q_w: enc_belief(&w.marginals.q_w),
                        q_tau: enc_belief(&w.marginals.q_tau),
                        site_w: enc_site(&w.site_w),
                        site_tau: enc_site(&w.site_tau),
                        evidence: enc_site(&w.evidence),
                    })
                    .collect(),
            })
            .collect(),
        observations: state
            .observations
            .iter()
            .map(|o| ObservationRecord {
                zeta: enc(o.zeta),
                log_zy: o.log_zy.map(enc),
                literal_q_al: o.literal_q_al.map(|(m, v)| [enc(m), enc(v)]),
            })
            .collect(),
    }
}

fn from_record(file: ModelFile) -> Result<PosteriorState> {
    if file.format != FORMAT {
        return Err(VepError::Model(format!("unknown format \"{}\"", file.format)));
    }
    if file.version != VERSION {
        return Err(VepError::Model(format!("unsupported version {}", file.version)));
    }
    let shape = NetworkShape::with_bias_flags(file.shape.layer_sizes, file.shape.bias)?;
    let c = file.config;
    let config = TrainConfig {
        v0: dec(&c.v0)?,
        damping: dec(&c.damping)?,
        max_sweeps: c.max_sweeps,
        tol: dec(&c.tol)?,
        likelihood_mode: c.likelihood_mode.parse()?,
        tau_expectation_mode: c.tau_expectation_mode.parse()?,
        seed: c.seed,
        fan_in_scaling: c.fan_in_scaling,
        sweep_order: c.sweep_order.parse()?,
    };
    if file.layers.len() != shape.n_layers() {
        return Err(VepError::Model(format!(
            "{} layers stored for a {}-layer shape",
            file.layers.len(),
            shape.n_layers()
        )));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (l, rec) in file.layers.into_iter().enumerate() {
        if rec.rows != shape.rows(l) || rec.cols != shape.cols(l) || rec.weights.len() != rec.rows * rec.cols {
            return Err(VepError::Model(format!("layer {l} does not match the stored shape")));
        }
        let weights = rec
            .weights
            .iter()
            .map(|w| {
                Ok(WeightState {
                    marginals: ParamMarginals {
                        q_w: dec_belief(&w.q_w)?,
                        q_tau: dec_belief(&w.q_tau)?,
                    },
                    site_w: dec_site(&w.site_w)?,
                    site_tau: dec_site(&w.site_tau)?,
                    evidence: dec_site(&w.evidence)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        layers.push(LayerState {
            rows: rec.rows,
            cols: rec.cols,
            weights,
        });
    }
    let observations = file
        .observations
        .iter()
        .map(|o| {
            Ok(ObservationDiag {
                zeta: dec(&o.zeta)?,
                log_zy: o.log_zy.as_deref().map(dec).transpose()?,
                literal_q_al: match &o.literal_q_al {
                    Some([m, v]) => Some((dec(m)?, dec(v)?)),
                    None => None,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorState {
        shape,
        config,
        layers,
        observations,
        sweeps: file.sweeps,
        prior_skips: file.prior_skips,
        likelihood_skips: file.likelihood_skips,
    })
}

pub fn model_to_string(state: &PosteriorState) -> String {
    let mut s = serde_json::to_string_pretty(&to_record(state)).expect("model record serializes");
    s.push('\n');
    s
}

pub fn model_from_str(text: &str) -> Result<PosteriorState> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| VepError::Model(e.to_string()))?;
    from_record(file)
}

pub fn save_model(path: impl AsRef<Path>, state: &PosteriorState) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_string(state)).map_err(|e| VepError::Io(format!("{}: {e}", path.display())))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PosteriorState> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| VepError::Io(format!("{}: {e}", path.display())))?;
    model_from_str(&text)
}
