//! Statistical primitives: least squares with inference, one-way ANOVA,
//! Tukey HSD and the distribution functions behind them.

pub mod anova;
pub mod dist;
pub mod ols;
pub mod quad;

pub use anova::{one_way_anova, tukey_hsd, AnovaResult, TukeyPair, STRONG_SIGNIFICANCE, WEAK_SIGNIFICANCE};
pub use dist::{
    dist_cdf, f_cdf, f_sf, student_t_cdf, student_t_two_sided_p, studentized_range_cdf,
    studentized_range_quantile, studentized_range_sf, Distribution,
};
pub use ols::{ols_fit, RegressionDiagnostics, MAX_CONDITION_NUMBER};
