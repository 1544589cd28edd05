//! Cumulative distribution functions for the test statistics used here.
//!
//! Student-t and F come from `statrs` (regularized incomplete beta). The
//! studentized range has no closed form; it is evaluated from its integral
//! definition
//!
//! ```text
//! P(Q <= q; k, ν) = ∫₀^∞ f_ν(s) · W(q·s; k) ds
//! W(w; k)         = k ∫ φ(z) [Φ(z) − Φ(z − w)]^(k−1) dz
//! f_ν(s)          = ν^(ν/2) s^(ν−1) e^(−ν s²/2) / (Γ(ν/2) 2^(ν/2 − 1))
//! ```
//!
//! with nested adaptive Gauss–Kronrod quadrature. The result is accurate to
//! an absolute error of [`STUDENTIZED_RANGE_TOLERANCE`].

use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::quad::integrate_pieces;
use crate::error::{Error, Result};

pub const STUDENTIZED_RANGE_TOLERANCE: f64 = 1e-6;

const INNER_TOL: f64 = 1e-10;
const OUTER_TOL: f64 = 1e-8;
const MAX_DEPTH: u32 = 24;
/// Beyond this many degrees of freedom the scale factor is treated as exactly 1.
const LARGE_DF: f64 = 1e5;
const Z_LIMIT: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    StudentT { df: f64 },
    F { df1: f64, df2: f64 },
    StudentizedRange { k: usize, df: f64 },
}

/// CDF of `dist` at `x`.
pub fn dist_cdf(dist: Distribution, x: f64) -> Result<f64> {
    match dist {
        Distribution::StudentT { df } => student_t_cdf(x, df),
        Distribution::F { df1, df2 } => f_cdf(x, df1, df2),
        Distribution::StudentizedRange { k, df } => studentized_range_cdf(x, k, df),
    }
}

fn positive_df(name: &str, df: f64) -> Result<()> {
    if df > 0.0 && !df.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} degrees of freedom must be positive, got {df}")))
    }
}

fn student_t(df: f64) -> Result<StudentsT> {
    positive_df("student-t", df)?;
    StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Domain(e.to_string()))
}

pub fn student_t_cdf(x: f64, df: f64) -> Result<f64> {
    Ok(student_t(df)?.cdf(x))
}

/// Two-sided p-value `P(|T| >= |t|)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    let dist = student_t(df)?;
    Ok((2.0 * dist.sf(t.abs())).clamp(0.0, 1.0))
}

fn fisher(df1: f64, df2: f64) -> Result<FisherSnedecor> {
    positive_df("F numerator", df1)?;
    positive_df("F denominator", df2)?;
    FisherSnedecor::new(df1, df2).map_err(|e| Error::Domain(e.to_string()))
}

pub fn f_cdf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    let dist = fisher(df1, df2)?;
    Ok(if x <= 0.0 { 0.0 } else { dist.cdf(x) })
}

/// Upper tail `P(F >= x)`.
pub fn f_sf(x: f64, df1: f64, df2: f64) -> Result<f64> {
    let dist = fisher(df1, df2)?;
    Ok(if x <= 0.0 { 1.0 } else { dist.sf(x) })
}

#[inline]
fn norm_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// CDF of the range of `k` independent standard normals.
fn normal_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let power = (k - 1) as i32;
    let f = |z: f64| {
        let inside = norm_cdf(z) - norm_cdf(z - w);
        norm_pdf(z) * inside.max(0.0).powi(power)
    };
    let c = (0.5 * w).min(Z_LIMIT - 1.0);
    let mut pts = vec![-Z_LIMIT, c - 3.0, c, c + 3.0, Z_LIMIT];
    pts.retain(|p| (-Z_LIMIT..=Z_LIMIT).contains(p));
    pts.dedup();
    let v = k as f64 * integrate_pieces(&f, &pts, INNER_TOL, MAX_DEPTH);
    v.clamp(0.0, 1.0)
}

/// CDF of the studentized range statistic with `k` groups and `df` error
/// degrees of freedom (`df` may be `f64::INFINITY`).
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(format!("studentized range needs k >= 2 groups, got {k}")));
    }
    if df.is_nan() || df < 1.0 {
        return Err(Error::Domain(format!("studentized range needs df >= 1, got {df}")));
    }
    if q.is_nan() {
        return Err(Error::Domain("studentized range evaluated at NaN".into()));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    if df > LARGE_DF {
        return Ok(normal_range_cdf(q, k));
    }

    let half = 0.5 * df;
    let log_norm = half * df.ln() - (half - 1.0) * std::f64::consts::LN_2 - ln_gamma(half);
    let density = |s: f64| {
        if s <= 0.0 {
            return if df == 1.0 { (2.0 / std::f64::consts::PI).sqrt() } else { 0.0 };
        }
        (log_norm + (df - 1.0) * s.ln() - half * s * s).exp()
    };
    let integrand = |s: f64| {
        let d = density(s);
        if d < 1e-300 {
            0.0
        } else {
            d * normal_range_cdf(q * s, k)
        }
    };
    let spread = 12.0 / df.sqrt();
    let lo = (1.0 - spread).max(0.0);
    let hi = 1.0 + spread;
    let pieces = 8;
    let pts: Vec<f64> = (0..=pieces)
        .map(|i| lo + (hi - lo) * i as f64 / pieces as f64)
        .collect();
    let v = integrate_pieces(&integrand, &pts, OUTER_TOL, MAX_DEPTH);
    Ok(v.clamp(0.0, 1.0))
}

/// Upper tail of the studentized range, `P(Q >= q)`.
pub fn studentized_range_sf(q: f64, k: usize, df: f64) -> Result<f64> {
    Ok((1.0 - studentized_range_cdf(q, k, df)?).clamp(0.0, 1.0))
}

/// Inverse CDF by bisection on [`studentized_range_cdf`].
pub fn studentized_range_quantile(p: f64, k: usize, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    let mut lo = 0.0;
    let mut hi = 4.0;
    while studentized_range_cdf(hi, k, df)? < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Domain("studentized range quantile did not bracket".into()));
        }
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
