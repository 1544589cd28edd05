//! Pinball (quantile) loss and its population-normalized form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven quantile levels used for probabilistic case forecasts.
pub const DEFAULT_QUANTILES: [f64; 7] = [0.02, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98];

/// Persons per normalization unit for [`norm_pbl`].
pub const NORMALIZATION_POPULATION: f64 = 1000.0;

fn check_quantile(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile {q} is outside (0, 1)")))
    }
}

/// Pinball loss of one quantile prediction.
pub fn pinball(q: f64, y_true: f64, y_pred: f64) -> Result<f64> {
    check_quantile(q)?;
    Ok(pinball_unchecked(q, y_true, y_pred))
}

#[inline]
pub(crate) fn pinball_unchecked(q: f64, y_true: f64, y_pred: f64) -> f64 {
    let e = y_true - y_pred;
    if e >= 0.0 {
        q * e
    } else {
        (q - 1.0) * e
    }
}

/// Derivative of the pinball loss with respect to the prediction. At the
/// kink (`y_true == y_pred`) the under-prediction branch is used.
#[inline]
pub(crate) fn pinball_grad_pred(q: f64, y_true: f64, y_pred: f64) -> f64 {
    if y_true >= y_pred {
        -q
    } else {
        1.0 - q
    }
}

/// Pinball loss averaged over quantile levels.
pub fn pbl_avg(quantiles: &[f64], y_true: f64, y_preds: &[f64]) -> Result<f64> {
    if quantiles.len() != y_preds.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} quantiles",
            y_preds.len(),
            quantiles.len()
        )));
    }
    if quantiles.is_empty() {
        return Err(Error::EmptyInput("no quantiles"));
    }
    let mut sum = 0.0;
    for (&q, &p) in quantiles.iter().zip(y_preds) {
        sum += pinball(q, y_true, p)?;
    }
    Ok(sum / quantiles.len() as f64)
}

/// Loss expressed in error cases per 1,000 residents.
pub fn norm_pbl(pbl: f64, population: u64) -> Result<f64> {
    if population < 1 {
        return Err(Error::Domain("population must be at least 1".into()));
    }
    Ok(NORMALIZATION_POPULATION * pbl / population as f64)
}

/// One row of a loss matrix: a (sample, lookahead) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub unit_id: String,
    pub lookahead: u32,
    pub pbl: f64,
    pub demo_fractions: [f64; 4],
    pub population: u64,
}

pub type LossMatrix = Vec<LossRow>;
