//! Classification metrics for predicted probabilities against binary labels.

use serde::Serialize;

use crate::error::{Result, VepError};

/// Probabilities are clamped to `[LOG_LOSS_EPS, 1 - LOG_LOSS_EPS]` inside the log loss.
pub const LOG_LOSS_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub log_loss: f64,
    pub brier: f64,
    pub n: usize,
}

/// Accuracy thresholds at 1/2 (ties predict label 1).
pub fn compute_metrics(probs: &[f64], labels: &[u8]) -> Result<Metrics> {
    if probs.len() != labels.len() {
        return Err(VepError::Dimension(format!(
            "{} predictions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(VepError::NoDataRows);
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(VepError::Domain(format!("probability {p} outside [0, 1]")));
    }
    let n = probs.len() as f64;
    let mut correct = 0usize;
    let mut log_loss = 0.0;
    let mut brier = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let y = f64::from(y);
        if (p >= 0.5) == (y == 1.0) {
            correct += 1;
        }
        let clamped = p.clamp(LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS);
        log_loss -= if y == 1.0 { clamped.ln() } else { (1.0 - clamped).ln() };
        brier += (p - y) * (p - y);
    }
    Ok(Metrics {
        accuracy: correct as f64 / n,
        log_loss: log_loss / n,
        brier: brier / n,
        n: probs.len(),
    })
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }

    pub fn table(&self) -> String {
        format!(
            "{:<10} {:>12}\n{:<10} {:>12.6}\n{:<10} {:>12.6}\n{:<10} {:>12.6}\n{:<10} {:>12}\n",
            "metric", "value", "accuracy", self.accuracy, "log_loss", self.log_loss, "brier", self.brier, "n", self.n
        )
    }
}
