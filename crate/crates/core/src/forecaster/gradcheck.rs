//! Finite-difference validation of the analytic parameter gradients.

use crate::error::{Error, Result};
use crate::loss::{pinball_grad_pred, pinball_unchecked};
use crate::panel::WindowSample;

use super::TrainedModel;

/// Mean quantile-averaged loss of one window over its lookaheads (case
/// units) and its gradient with respect to every network parameter.
pub fn sample_loss_and_gradient(model: &TrainedModel, sample: &WindowSample) -> Result<(f64, Vec<f64>)> {
    let qs = &model.config.quantiles;
    let nq = qs.len() as f64;
    let nh = sample.horizon() as f64;
    let cache = model.network.trunk_forward(&model.config.features(sample)?)?;
    let z = model.network.head_forward(&cache, None);
    let mut loss = 0.0;
    let mut dz = vec![0.0; z.len()];
    for (h, &y) in sample.horizon_targets.iter().enumerate() {
        for (k, &q) in qs.iter().enumerate() {
            let o = h * qs.len() + k;
            let pred = sample.scaler.inverse(z[o]);
            loss += pinball_unchecked(q, y, pred) / (nq * nh);
            dz[o] = pinball_grad_pred(q, y, pred) * sample.scaler.scale / (nq * nh);
        }
    }
    let mut grad = vec![0.0; model.network.len()];
    model.network.backward(&cache, &[(None, &dz)], &mut grad);
    Ok((loss, grad))
}

fn sample_loss(model: &TrainedModel, sample: &WindowSample) -> Result<f64> {
    let qs = &model.config.quantiles;
    let z = model.predict_standardized(sample)?;
    let mut loss = 0.0;
    for (h, &y) in sample.horizon_targets.iter().enumerate() {
        for (k, &q) in qs.iter().enumerate() {
            loss += pinball_unchecked(q, y, sample.scaler.inverse(z[h * qs.len() + k]));
        }
    }
    Ok(loss / (qs.len() * sample.horizon()) as f64)
}

/// Largest relative disagreement between analytic and central-difference
/// gradients over all parameters.
///
/// Kink proximity is measured on the standardized output scale, where a
/// parameter step of `epsilon` moves an output by `O(epsilon)`. Relative
/// errors use `max(|analytic|, |numeric|, 1e-6 · max(1, |loss|))` as the
/// denominator so that parameters with vanishing gradient compare against
/// the round-off level of the differences instead of zero.
pub fn gradient_check(model: &TrainedModel, sample: &WindowSample, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon {epsilon} must be positive")));
    }
    let z = model.predict_standardized(sample)?;
    let nq = model.config.quantiles.len();
    let mut closest = f64::INFINITY;
    for (h, &y) in sample.horizon_targets.iter().enumerate() {
        let target = sample.scaler.forward(y);
        for k in 0..nq {
            closest = closest.min((target - z[h * nq + k]).abs());
        }
    }
    if closest < 10.0 * epsilon {
        return Err(Error::Kink { distance: closest });
    }

    let (loss, analytic) = sample_loss_and_gradient(model, sample)?;
    let floor = 1e-6 * loss.abs().max(1.0);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (p, &a) in analytic.iter().enumerate() {
        let original = probe.network.params[p];
        probe.network.params[p] = original + epsilon;
        let plus = sample_loss(&probe, sample)?;
        probe.network.params[p] = original - epsilon;
        let minus = sample_loss(&probe, sample)?;
        probe.network.params[p] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
