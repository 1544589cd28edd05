use std::collections::BTreeMap;
use std::fmt::Display;

use serde::{Deserialize, Serialize};

use super::dist::{f_sf, studentized_range_sf};
use crate::error::{Error, Result};

/// Significance levels flagged on every Tukey pair (`**` and `*`).
pub const STRONG_SIGNIFICANCE: f64 = 0.01;
pub const WEAK_SIGNIFICANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub ss_between: f64,
    pub ss_within: f64,
}

impl AnovaResult {
    pub fn ms_within(&self) -> f64 {
        self.ss_within / self.df_within as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair<L> {
    pub group1: L,
    pub group2: L,
    /// `mean(group1) - mean(group2)`.
    pub mean_diff: f64,
    pub p_adj: f64,
    pub significant_01: bool,
    pub significant_10: bool,
}

impl<L> TukeyPair<L> {
    /// `**`, `*` or empty, by the flagged levels.
    pub fn stars(&self) -> &'static str {
        if self.significant_01 {
            "**"
        } else if self.significant_10 {
            "*"
        } else {
            ""
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_groups<L: Display>(groups: &BTreeMap<L, Vec<f64>>) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::SampleSize(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    for (label, xs) in groups {
        if xs.len() < 2 {
            return Err(Error::SampleSize(format!(
                "group {label} has {} sample(s); at least 2 are required",
                xs.len()
            )));
        }
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("group {label} contains a non-finite value")));
        }
    }
    Ok(())
}

/// One-way analysis of variance across the groups (sizes may differ).
pub fn one_way_anova<L: Ord + Display>(groups: &BTreeMap<L, Vec<f64>>) -> Result<AnovaResult> {
    check_groups(groups)?;
    let total: usize = groups.values().map(Vec::len).sum();
    let grand = groups.values().flatten().sum::<f64>() / total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for xs in groups.values() {
        let m = mean(xs);
        ss_between += xs.len() as f64 * (m - grand).powi(2);
        ss_within += xs.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    let (f_stat, p_value) = if ss_within > 0.0 {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        (f, f_sf(f, df_between as f64, df_within as f64)?)
    } else if ss_between > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value,
        ss_between,
        ss_within,
    })
}

/// Tukey HSD on every unordered pair, with the Tukey–Kramer standard error
/// for unequal group sizes. Pairs follow the key order of `groups`.
pub fn tukey_hsd<L: Ord + Display + Clone>(
    groups: &BTreeMap<L, Vec<f64>>,
) -> Result<Vec<TukeyPair<L>>> {
    let anova = one_way_anova(groups)?;
    let k = groups.len();
    let df = anova.df_within as f64;
    let mse = anova.ms_within();
    let stats: Vec<(&L, f64, usize)> = groups.iter().map(|(l, xs)| (l, mean(xs), xs.len())).collect();

    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let (l1, m1, n1) = stats[i];
            let (l2, m2, n2) = stats[j];
            let diff = m1 - m2;
            let se = (0.5 * mse * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
            let p_adj = if se > 0.0 {
                studentized_range_sf(diff.abs() / se, k, df)?
            } else if diff == 0.0 {
                1.0
            } else {
                0.0
            };
            pairs.push(TukeyPair {
                group1: l1.clone(),
                group2: l2.clone(),
                mean_diff: diff,
                p_adj,
                significant_01: p_adj < STRONG_SIGNIFICANCE,
                significant_10: p_adj < WEAK_SIGNIFICANCE,
            });
        }
    }
    Ok(pairs)
}
