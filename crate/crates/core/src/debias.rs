//! In-processing de-biasing: DemOpts and the Individual, Group and
//! Sufficiency fairness penalties.
//!
//! DemOpts regresses the per-row losses of a batch on the rows' demographic
//! fractions and lookahead, and inflates each row's loss by `|β_j| · D_j`
//! for every demographic covariate `j` whose coefficient is significant.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Group;
use crate::stats::{ols_fit, RegressionDiagnostics};

pub const DEFAULT_P_THRESHOLD: f64 = 0.05;

/// Covariate names in regression column order.
pub const COVARIATES: [&str; 5] = ["asian", "black", "hispanic", "white", "lookahead"];

/// Header of the per-batch diagnostics log.
pub const TRAINING_LOG_HEADER: &str = "epoch,batch,covariate,beta,p_value,gate_fired";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum DebiasMethod {
    None,
    #[serde(rename = "demopts")]
    DemOpts {
        p_threshold: f64,
        /// Apply gated factors sequentially (`Π (1 + |β_j| D_j)`) instead of
        /// summing them against the unadjusted loss.
        compounding: bool,
    },
    Individual { penalty_weight: f64 },
    Group { penalty_weight: f64 },
    Sufficiency { penalty_weight: f64 },
}

impl DebiasMethod {
    pub const NAMES: [&'static str; 5] = ["none", "demopts", "individual", "group", "sufficiency"];

    pub fn demopts() -> Self {
        Self::DemOpts {
            p_threshold: DEFAULT_P_THRESHOLD,
            compounding: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::DemOpts { .. } => "demopts",
            Self::Individual { .. } => "individual",
            Self::Group { .. } => "group",
            Self::Sufficiency { .. } => "sufficiency",
        }
    }

    /// Builds a method from its name and the shared strength parameters.
    pub fn from_name(name: &str, p_threshold: f64, compounding: bool, penalty_weight: f64) -> Result<Self> {
        let m = match name {
            "none" => Self::None,
            "demopts" => Self::DemOpts { p_threshold, compounding },
            "individual" => Self::Individual { penalty_weight },
            "group" => Self::Group { penalty_weight },
            "sufficiency" => Self::Sufficiency { penalty_weight },
            other => {
                return Err(Error::Validation(format!(
                    "unknown method `{other}`; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        m.validate()?;
        Ok(m)
    }

    /// A threshold of 0 is accepted: it disables every gate.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::None => Ok(()),
            Self::DemOpts { p_threshold, .. } => {
                if (0.0..1.0).contains(&p_threshold) {
                    Ok(())
                } else {
                    Err(Error::Validation(format!("p_threshold {p_threshold} is outside [0, 1)")))
                }
            }
            Self::Individual { penalty_weight } | Self::Group { penalty_weight } | Self::Sufficiency { penalty_weight } => {
                if penalty_weight >= 0.0 && penalty_weight.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Validation(format!("penalty_weight {penalty_weight} must be finite and >= 0")))
                }
            }
        }
    }
}

/// Row-aligned inputs of one batch; a row is one (sample, lookahead) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchContext {
    /// Quantile-averaged pinball loss per row.
    pub losses: Vec<f64>,
    pub demographics: Vec<[f64; 4]>,
    pub lookaheads: Vec<u32>,
    pub labels: Vec<Group>,
    /// Signed residual of the median-quantile prediction, per row.
    pub residuals: Vec<f64>,
}

impl BatchContext {
    pub fn new(
        losses: Vec<f64>,
        demographics: Vec<[f64; 4]>,
        lookaheads: Vec<u32>,
        labels: Vec<Group>,
        residuals: Vec<f64>,
    ) -> Result<Self> {
        let n = losses.len();
        if n == 0 {
            return Err(Error::Internal("empty batch".into()));
        }
        for (what, len) in [
            ("demographics", demographics.len()),
            ("lookaheads", lookaheads.len()),
            ("labels", labels.len()),
            ("residuals", residuals.len()),
        ] {
            if len != n {
                return Err(Error::Dimension(format!("{what} has {len} rows, losses have {n}")));
            }
        }
        if let Some(l) = losses.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Domain(format!("batch loss {l} is not a finite non-negative value")));
        }
        Ok(Self {
            losses,
            demographics,
            lookaheads,
            labels,
            residuals,
        })
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemOptsAdjustment {
    pub adjusted: Vec<f64>,
    /// `adjusted[i] / losses[i]`, the factor applied to row `i`.
    pub multipliers: Vec<f64>,
    /// `None` when the regression could not be fitted.
    pub diagnostics: Option<RegressionDiagnostics>,
    /// Which demographic covariates passed the significance gate.
    pub gates: [bool; 4],
    /// Reason the loss was left unadjusted, if it was.
    pub fallback: Option<String>,
}

impl DemOptsAdjustment {
    fn unadjusted(ctx: &BatchContext, reason: String) -> Self {
        log::warn!("DemOpts adjustment skipped: {reason}");
        Self {
            adjusted: ctx.losses.clone(),
            multipliers: vec![1.0; ctx.len()],
            diagnostics: None,
            gates: [false; 4],
            fallback: Some(reason),
        }
    }

    pub fn mean_adjusted(&self) -> f64 {
        self.adjusted.iter().sum::<f64>() / self.adjusted.len() as f64
    }
}

/// Gate and inflate the batch losses. The coefficients and p-values are
/// constants of the batch; only the losses carry gradient.
pub fn demopts_adjust(ctx: &BatchContext, p_threshold: f64, compounding: bool) -> DemOptsAdjustment {
    let design: Vec<[f64; 5]> = ctx
        .demographics
        .iter()
        .zip(&ctx.lookaheads)
        .map(|(d, &h)| [d[0], d[1], d[2], d[3], h as f64])
        .collect();
    let fit = match ols_fit(&design, &ctx.losses) {
        Ok(fit) => fit,
        Err(e) => return DemOptsAdjustment::unadjusted(ctx, e.to_string()),
    };
    let mut gates = [false; 4];
    for (j, gate) in gates.iter_mut().enumerate() {
        *gate = fit.p_values[j] < p_threshold;
    }
    let multipliers: Vec<f64> = ctx
        .demographics
        .iter()
        .map(|d| {
            let terms = (0..4).filter(|&j| gates[j]).map(|j| fit.coefficients[j].abs() * d[j]);
            if compounding {
                terms.fold(1.0, |m, t| m * (1.0 + t))
            } else {
                1.0 + terms.sum::<f64>()
            }
        })
        .collect();
    DemOptsAdjustment {
        adjusted: ctx.losses.iter().zip(&multipliers).map(|(l, m)| l * m).collect(),
        multipliers,
        diagnostics: Some(fit),
        gates,
        fallback: None,
    }
}

/// A penalized scalar objective with its derivatives with respect to each
/// row's loss and residual.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedLoss {
    pub value: f64,
    pub penalty: f64,
    pub d_losses: Vec<f64>,
    pub d_residuals: Vec<f64>,
}

fn mean_with_grad(ctx: &BatchContext) -> (f64, Vec<f64>) {
    let n = ctx.len() as f64;
    (ctx.mean_loss(), vec![1.0 / n; ctx.len()])
}

/// Mean loss plus `λ` times the mean squared residual gap over all row pairs
/// whose majority labels differ.
pub fn individual_penalty(ctx: &BatchContext, lambda: f64) -> PenalizedLoss {
    let (mean, d_losses) = mean_with_grad(ctx);
    let n = ctx.len();
    let mut count = [0usize; 4];
    let mut sum = [0.0; 4];
    for (&g, &r) in ctx.labels.iter().zip(&ctx.residuals) {
        count[g.index()] += 1;
        sum[g.index()] += r;
    }
    let total = sum.iter().sum::<f64>();
    let pairs = n * (n - 1) / 2 - count.iter().map(|&c| c * c.saturating_sub(1) / 2).sum::<usize>();
    if pairs == 0 || lambda == 0.0 {
        return PenalizedLoss {
            value: mean,
            penalty: 0.0,
            d_losses,
            d_residuals: vec![0.0; n],
        };
    }
    // Σ_{i<j} (r_i - r_j)² = m Σ (r - mean)² over any set of m values;
    // cross-label pairs are all pairs minus the within-label ones.
    let overall_mean = total / n as f64;
    let group_mean: Vec<f64> = (0..4).map(|g| sum[g] / count[g].max(1) as f64).collect();
    let mut all_ss = 0.0;
    let mut within_ss = [0.0; 4];
    for (&g, &r) in ctx.labels.iter().zip(&ctx.residuals) {
        all_ss += (r - overall_mean).powi(2);
        within_ss[g.index()] += (r - group_mean[g.index()]).powi(2);
    }
    let within: f64 = (0..4).map(|g| count[g] as f64 * within_ss[g]).sum();
    let penalty = ((n as f64 * all_ss - within) / pairs as f64).max(0.0);
    let d_residuals = ctx
        .labels
        .iter()
        .zip(&ctx.residuals)
        .map(|(&g, &r)| {
            let g = g.index();
            let others = (n - count[g]) as f64;
            lambda * 2.0 * (others * r - (total - sum[g])) / pairs as f64
        })
        .collect();
    PenalizedLoss {
        value: mean + lambda * penalty,
        penalty,
        d_losses,
        d_residuals,
    }
}

/// Mean loss plus `λ` times the mean squared gap between group-mean
/// residuals over all pairs of labels present in the batch.
pub fn group_penalty(ctx: &BatchContext, lambda: f64) -> PenalizedLoss {
    let (mean, d_losses) = mean_with_grad(ctx);
    let n = ctx.len();
    let mut count = [0usize; 4];
    let mut sum = [0.0; 4];
    for (&g, &r) in ctx.labels.iter().zip(&ctx.residuals) {
        count[g.index()] += 1;
        sum[g.index()] += r;
    }
    let present: Vec<usize> = (0..4).filter(|&g| count[g] > 0).collect();
    let pairs = present.len() * present.len().saturating_sub(1) / 2;
    if pairs == 0 || lambda == 0.0 {
        return PenalizedLoss {
            value: mean,
            penalty: 0.0,
            d_losses,
            d_residuals: vec![0.0; n],
        };
    }
    let means: Vec<f64> = (0..4)
        .map(|g| if count[g] > 0 { sum[g] / count[g] as f64 } else { 0.0 })
        .collect();
    let mut penalty = 0.0;
    // d penalty / d mean_g
    let mut d_mean = [0.0; 4];
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            let diff = means[a] - means[b];
            penalty += diff * diff;
            d_mean[a] += 2.0 * diff;
            d_mean[b] -= 2.0 * diff;
        }
    }
    penalty /= pairs as f64;
    let d_residuals = ctx
        .labels
        .iter()
        .map(|&g| {
            let g = g.index();
            lambda * d_mean[g] / (pairs as f64 * count[g] as f64)
        })
        .collect();
    PenalizedLoss {
        value: mean + lambda * penalty,
        penalty,
        d_losses,
        d_residuals,
    }
}

/// Joint loss plus `λ` times the mean over labels of the squared gap between
/// joint and group-head predictions on that label's rows. Labels absent from
/// the batch are left out of `group_discrepancy`.
pub fn sufficiency_penalty(joint_loss: f64, group_discrepancy: &BTreeMap<Group, f64>, lambda: f64) -> f64 {
    if group_discrepancy.is_empty() {
        return joint_loss;
    }
    let mean = group_discrepancy.values().sum::<f64>() / group_discrepancy.len() as f64;
    joint_loss + lambda * mean
}

/// Appends one batch's regression diagnostics to a training log. A batch
/// whose regression could not be fitted writes no rows.
pub fn write_log_rows<W: Write>(
    out: &mut W,
    epoch: usize,
    batch: usize,
    adjustment: &DemOptsAdjustment,
) -> Result<()> {
    let Some(fit) = &adjustment.diagnostics else {
        return Ok(());
    };
    let map = |e: std::io::Error| Error::Internal(format!("writing training log: {e}"));
    for (j, name) in COVARIATES.iter().enumerate() {
        let gate = j < 4 && adjustment.gates[j];
        writeln!(
            out,
            "{epoch},{batch},{name},{},{},{gate}",
            fit.coefficients[j], fit.p_values[j]
        )
        .map_err(map)?;
    }
    Ok(())
}
