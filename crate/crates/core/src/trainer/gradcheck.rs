//! Central finite-difference check of the analytic gradient.

use serde::Serialize;

use super::{Batch, ModelParams, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`. The floor keeps entries
/// whose true gradient is zero from dividing rounding noise by zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares every analytic gradient entry of `total_loss` against
/// `(L(θ+h) - L(θ-h)) / 2h`.
pub fn finite_difference_check(
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport, TrainError> {
    let (_, grads) = params.loss_and_gradients(batch, cfg)?;
    let analytic = grads.tensors();
    let mut probe = params.clone();
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, max_abs_error: 0.0, worst: None };
    for (t, (name, g)) in analytic.iter().enumerate() {
        for k in 0..g.len() {
            let orig = probe.tensors_mut()[t][k];
            probe.tensors_mut()[t][k] = orig + h;
            let up = probe.total_loss(batch, cfg)?.total;
            probe.tensors_mut()[t][k] = orig - h;
            let down = probe.total_loss(batch, cfg)?.total;
            probe.tensors_mut()[t][k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = relative_error(g[k], numeric, floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((g[k] - numeric).abs());
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((name.to_string(), k));
            }
        }
    }
    Ok(report)
}
