//! Error-parity audit: majority labels, per-unit normalized errors, hard
//! parity (ANOVA with Tukey HSD) and soft parity (accuracy equity ratio).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::QuantileForecast;
use crate::loss::{norm_pbl, pbl_avg};
use crate::panel::{Group, UnitRecord, WindowSample};
use crate::stats::{one_way_anova, tukey_hsd, AnovaResult, TukeyPair};

/// The group treated as unprotected.
pub const UNPROTECTED: Group = Group::White;

pub const REPORT_FILE: &str = "report.json";
pub const ANOVA_FILE: &str = "anova.csv";
pub const TUKEY_FILE: &str = "tukey.csv";
pub const SOFT_PARITY_FILE: &str = "soft_parity.csv";
pub const MEAN_PBL_FILE: &str = "mean_pbl.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityLabel {
    pub unit_id: String,
    pub label: Group,
    pub protected: bool,
}

/// Arg-max of the four fractions; ties go to the earliest group in
/// Asian, Black, Hispanic, White order.
pub fn majority_label(fractions: &[f64; 4]) -> Group {
    let mut best = 0;
    for j in 1..4 {
        if fractions[j] > fractions[best] {
            best = j;
        }
    }
    Group::ALL[best]
}

pub fn label_unit(record: &UnitRecord) -> MajorityLabel {
    let label = majority_label(&record.demo_fractions);
    MajorityLabel {
        unit_id: record.unit_id.clone(),
        label,
        protected: label != UNPROTECTED,
    }
}

/// Number of units per majority label (every label present, possibly 0).
pub fn label_counts<'a>(records: impl IntoIterator<Item = &'a UnitRecord>) -> BTreeMap<Group, usize> {
    let mut counts: BTreeMap<Group, usize> = Group::ALL.iter().map(|&g| (g, 0)).collect();
    for r in records {
        *counts.entry(majority_label(&r.demo_fractions)).or_default() += 1;
    }
    counts
}

/// Test-window error of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitError {
    pub unit_id: String,
    pub label: Group,
    pub population: u64,
    /// Mean quantile-averaged loss over the unit's test windows and lookaheads.
    pub mean_pbl: f64,
    pub norm_pbl: f64,
}

/// Per-unit test errors, one entry per unit in `units` order. `forecasts`
/// and `truths` are aligned by index.
pub fn unit_errors(
    forecasts: &[QuantileForecast],
    truths: &[WindowSample],
    quantiles: &[f64],
    units: &[UnitRecord],
) -> Result<Vec<UnitError>> {
    if forecasts.len() != truths.len() {
        return Err(Error::Dimension(format!(
            "{} forecasts for {} test windows",
            forecasts.len(),
            truths.len()
        )));
    }
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (f, t) in forecasts.iter().zip(truths) {
        if f.unit_id != t.unit_id || f.values.len() != t.horizon() {
            return Err(Error::Dimension(format!(
                "forecast for `{}` does not match window of `{}` ({} vs {} lookaheads)",
                f.unit_id,
                t.unit_id,
                f.values.len(),
                t.horizon()
            )));
        }
        let entry = sums.entry(t.unit_id.as_str()).or_default();
        for (row, &y) in f.values.iter().zip(&t.horizon_targets) {
            entry.0 += pbl_avg(quantiles, y, row)?;
            entry.1 += 1;
        }
    }
    let known: BTreeSet<&str> = units.iter().map(|u| u.unit_id.as_str()).collect();
    if let Some(stray) = sums.keys().find(|id| !known.contains(*id)) {
        return Err(Error::MissingUnit(format!("forecasts for unit `{stray}` have no unit record")));
    }
    units
        .iter()
        .map(|u| {
            let (sum, n) = sums
                .get(u.unit_id.as_str())
                .ok_or_else(|| Error::MissingUnit(format!("unit `{}` has no test forecasts", u.unit_id)))?;
            let mean_pbl = sum / *n as f64;
            Ok(UnitError {
                unit_id: u.unit_id.clone(),
                label: majority_label(&u.demo_fractions),
                population: u.population,
                mean_pbl,
                norm_pbl: norm_pbl(mean_pbl, u.population)?,
            })
        })
        .collect()
}

/// Normalized unit errors grouped by majority label, in unit order.
pub fn aggregate_norm_errors(errors: &[UnitError]) -> BTreeMap<Group, Vec<f64>> {
    let mut out: BTreeMap<Group, Vec<f64>> = BTreeMap::new();
    for e in errors {
        out.entry(e.label).or_default().push(e.norm_pbl);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardParity {
    pub anova: AnovaResult,
    pub tukey: Vec<TukeyPair<Group>>,
    /// Labels left out for having fewer than two units.
    pub dropped: Vec<Group>,
}

impl HardParity {
    pub fn significant_pairs_01(&self) -> usize {
        self.tukey.iter().filter(|p| p.significant_01).count()
    }
}

/// ANOVA and Tukey HSD over the labels that have at least two units.
pub fn hard_parity(grouped: &BTreeMap<Group, Vec<f64>>) -> Result<HardParity> {
    let mut kept = BTreeMap::new();
    let mut dropped = Vec::new();
    for (&g, xs) in grouped {
        if xs.len() >= 2 {
            kept.insert(g, xs.clone());
        } else {
            log::warn!("label {g} has {} unit(s) and is left out of the parity tests", xs.len());
            dropped.push(g);
        }
    }
    Ok(HardParity {
        anova: one_way_anova(&kept)?,
        tukey: tukey_hsd(&kept)?,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftParity {
    pub aer: BTreeMap<Group, f64>,
    pub distance: BTreeMap<Group, f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Accuracy equity ratio of each protected label present against White.
pub fn soft_parity(grouped: &BTreeMap<Group, Vec<f64>>) -> Result<SoftParity> {
    let white = grouped
        .get(&UNPROTECTED)
        .filter(|xs| !xs.is_empty())
        .ok_or_else(|| Error::Degenerate("no White-majority units to compare against".into()))?;
    let base = mean(white);
    if base == 0.0 {
        return Err(Error::Degenerate("White-majority mean normalized error is zero".into()));
    }
    let mut aer = BTreeMap::new();
    let mut distance = BTreeMap::new();
    for (&g, xs) in grouped {
        if g == UNPROTECTED || xs.is_empty() {
            continue;
        }
        let r = mean(xs) / base;
        aer.insert(g, r);
        distance.insert(g, (1.0 - r).abs());
    }
    Ok(SoftParity { aer, distance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub units_per_group: BTreeMap<Group, usize>,
    pub anova: AnovaResult,
    pub tukey_pairs: Vec<TukeyPair<Group>>,
    pub dropped_groups: Vec<Group>,
    pub aer: BTreeMap<Group, f64>,
    pub distance: BTreeMap<Group, f64>,
    pub mean_norm_pbl_per_group: BTreeMap<Group, f64>,
    /// Mean un-normalized loss of each label's units.
    pub mean_pbl_per_group: BTreeMap<Group, f64>,
    pub unit_errors: Vec<UnitError>,
}

impl ParityReport {
    pub fn build(method: &str, seed: u64, config_hash: &str, errors: Vec<UnitError>) -> Result<Self> {
        let grouped = aggregate_norm_errors(&errors);
        let hard = hard_parity(&grouped)?;
        let soft = soft_parity(&grouped)?;
        let mut raw: BTreeMap<Group, Vec<f64>> = BTreeMap::new();
        for e in &errors {
            raw.entry(e.label).or_default().push(e.mean_pbl);
        }
        Ok(Self {
            method: method.to_owned(),
            seed,
            config_hash: config_hash.to_owned(),
            units_per_group: grouped.iter().map(|(&g, xs)| (g, xs.len())).collect(),
            anova: hard.anova,
            tukey_pairs: hard.tukey,
            dropped_groups: hard.dropped,
            aer: soft.aer,
            distance: soft.distance,
            mean_norm_pbl_per_group: grouped.iter().map(|(&g, xs)| (g, mean(xs))).collect(),
            mean_pbl_per_group: raw.iter().map(|(&g, xs)| (g, mean(xs))).collect(),
            unit_errors: errors,
        })
    }

    pub fn significant_pairs_01(&self) -> usize {
        self.tukey_pairs.iter().filter(|p| p.significant_01).count()
    }

    /// Sum of `|1 - AER|` over the protected labels.
    pub fn total_distance(&self) -> f64 {
        self.distance.values().sum()
    }

    fn pair(&self, a: Group, b: Group) -> Option<&TukeyPair<Group>> {
        self.tukey_pairs.iter().find(|p| p.group1 == a && p.group2 == b)
    }
}

fn all_pairs() -> Vec<(Group, Group)> {
    let mut out = Vec::new();
    for (i, &a) in Group::ALL.iter().enumerate() {
        for &b in &Group::ALL[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The ANOVA table: one row per method.
pub fn anova_csv(reports: &[ParityReport]) -> String {
    let mut s = String::from("method,f_stat,p_value,df_between,df_within\n");
    for r in reports {
        let a = &r.anova;
        let _ = writeln!(s, "{},{},{},{},{}", r.method, a.f_stat, a.p_value, a.df_between, a.df_within);
    }
    s
}

/// Tukey pairs as rows with one column block per method.
pub fn tukey_csv(reports: &[ParityReport]) -> String {
    let mut s = String::from("group1,group2");
    for r in reports {
        let m = &r.method;
        let _ = write!(s, ",{m}_mean_diff,{m}_p_adj,{m}_significance");
    }
    s.push('\n');
    for (a, b) in all_pairs() {
        let _ = write!(s, "{a},{b}");
        for r in reports {
            match r.pair(a, b) {
                Some(p) => {
                    let _ = write!(s, ",{},{},{}", p.mean_diff, p.p_adj, p.stars());
                }
                None => s.push_str(",,,"),
            }
        }
        s.push('\n');
    }
    s
}

/// Protected labels as rows with AER and distance per method.
pub fn soft_parity_csv(reports: &[ParityReport]) -> String {
    let mut s = String::from("group");
    for r in reports {
        let m = &r.method;
        let _ = write!(s, ",{m}_aer,{m}_distance");
    }
    s.push('\n');
    for g in Group::ALL.into_iter().filter(|&g| g != UNPROTECTED) {
        let _ = write!(s, "{g}");
        for r in reports {
            let _ = write!(s, ",{},{}", cell(r.aer.get(&g).copied()), cell(r.distance.get(&g).copied()));
        }
        s.push('\n');
    }
    s
}

/// Every label as a row with mean loss and mean normalized loss per method.
pub fn mean_pbl_csv(reports: &[ParityReport]) -> String {
    let mut s = String::from("group");
    for r in reports {
        let m = &r.method;
        let _ = write!(s, ",{m}_mean_pbl,{m}_mean_norm_pbl");
    }
    s.push('\n');
    for g in Group::ALL {
        let _ = write!(s, "{g}");
        for r in reports {
            let _ = write!(
                s,
                ",{},{}",
                cell(r.mean_pbl_per_group.get(&g).copied()),
                cell(r.mean_norm_pbl_per_group.get(&g).copied())
            );
        }
        s.push('\n');
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<out>/<method>/report.json` per report and the combined tables
/// `anova.csv`, `tukey.csv`, `soft_parity.csv` and `mean_pbl.csv` in `out`.
pub fn emit_report(reports: &[ParityReport], out: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no audited methods to report"));
    }
    let mut seen = BTreeSet::new();
    for r in reports {
        let ok = !r.method.is_empty() && r.method.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !ok || r.method.starts_with('.') {
            return Err(Error::Validation(format!("method name `{}` cannot be used as a directory", r.method)));
        }
        if !seen.insert(r.method.as_str()) {
            return Err(Error::Validation(format!("method `{}` appears more than once", r.method)));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for r in reports {
        let dir = out.join(&r.method);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut json = serde_json::to_string_pretty(r)?;
        json.push('\n');
        write(&dir.join(REPORT_FILE), &json)?;
    }
    write(&out.join(ANOVA_FILE), &anova_csv(reports))?;
    write(&out.join(TUKEY_FILE), &tukey_csv(reports))?;
    write(&out.join(SOFT_PARITY_FILE), &soft_parity_csv(reports))?;
    write(&out.join(MEAN_PBL_FILE), &mean_pbl_csv(reports))?;
    Ok(())
}
