use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dist::student_t_two_sided_p;
use crate::error::{Error, Result};

/// Condition number of the intercept-augmented design above which a fit is
/// refused.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Relative residual sum of squares below which a fit counts as exact.
const EXACT_FIT_RSS: f64 = 1e-24;
/// Coefficients whose contribution is below this fraction of the response
/// scale count as zero in an exact fit.
const ZERO_COEFFICIENT: f64 = 1e-9;

/// Ordinary least squares fit with an intercept and two-sided t-tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDiagnostics {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n: usize,
    pub k: usize,
    /// `RSS / (n - k - 1)`.
    pub residual_variance: f64,
    pub condition_number: f64,
}

/// Fits `y = α + X β` by least squares. `x` holds `n` rows of `k` covariates;
/// the intercept column is added here.
///
/// The solve goes through a singular value decomposition so that a
/// near-collinear design is detected (condition number above
/// [`MAX_CONDITION_NUMBER`]) instead of producing garbage. When the fit is
/// exact (`σ̂² = 0`) every nonzero coefficient gets p = 0 and every zero
/// coefficient p = 1.
pub fn ols_fit<R: AsRef<[f64]>>(x: &[R], y: &[f64]) -> Result<RegressionDiagnostics> {
    let n = y.len();
    if x.len() != n {
        return Err(Error::Dimension(format!("{} design rows for {} responses", x.len(), n)));
    }
    let k = x.first().map_or(0, |r| r.as_ref().len());
    if k == 0 {
        return Err(Error::Dimension("design has no covariates".into()));
    }
    if let Some(bad) = x.iter().position(|r| r.as_ref().len() != k) {
        return Err(Error::Dimension(format!("design row {bad} has the wrong width")));
    }
    if n <= k + 1 {
        return Err(Error::SampleSize(format!(
            "{n} observations cannot fit {k} covariates plus an intercept"
        )));
    }
    if x.iter().flat_map(|r| r.as_ref()).chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in regression input".into()));
    }

    let p = k + 1;
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[i].as_ref()[j - 1] });
    let response = DVector::from_column_slice(y);

    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let s_max = sv.max();
    let s_min = sv.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION_NUMBER) {
        return Err(Error::SingularDesign { condition });
    }
    let u = svd.u.as_ref().ok_or_else(|| Error::Internal("SVD without U".into()))?;
    let v = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Internal("SVD without Vᵀ".into()))?
        .transpose();

    let inv_s = DVector::from_iterator(p, sv.iter().map(|s| 1.0 / s));
    let uty = u.transpose() * &response;
    let beta = &v * uty.component_mul(&inv_s);

    let residuals = &response - &design * &beta;
    let rss = residuals.norm_squared();
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;

    // diag((XᵀX)⁻¹) = Σ_m V[j,m]² / s_m²
    let inv_s2 = inv_s.map(|s| s * s);
    let cov_diag: Vec<f64> = (0..p)
        .map(|j| (0..p).map(|m| v[(j, m)].powi(2) * inv_s2[m]).sum())
        .collect();

    let y_scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let exact = rss <= EXACT_FIT_RSS * response.norm_squared().max(f64::MIN_POSITIVE);

    let mut coefficients = Vec::with_capacity(k);
    let mut standard_errors = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    for j in 1..p {
        let b = beta[j];
        if exact {
            let x_scale = x.iter().fold(0.0f64, |a, r| a.max(r.as_ref()[j - 1].abs()));
            let is_zero = b.abs() * x_scale <= ZERO_COEFFICIENT * y_scale.max(f64::MIN_POSITIVE);
            coefficients.push(if is_zero { 0.0 } else { b });
            standard_errors.push(0.0);
            p_values.push(if is_zero { 1.0 } else { 0.0 });
        } else {
            let se = (sigma2 * cov_diag[j]).sqrt();
            coefficients.push(b);
            standard_errors.push(se);
            p_values.push(student_t_two_sided_p(b / se, dof)?);
        }
    }

    Ok(RegressionDiagnostics {
        intercept: beta[0],
        coefficients,
        standard_errors,
        p_values,
        n,
        k,
        residual_variance: if exact { 0.0 } else { sigma2 },
        condition_number: condition,
    })
}
