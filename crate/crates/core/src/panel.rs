//! Grouped panel ingestion, smoothing and window construction.
//!
//! Three CSV files make up a panel:
//!
//! | file               | header                                                            |
//! |--------------------|-------------------------------------------------------------------|
//! | `cases.csv`        | `unit_id,date,cases`                                              |
//! | `demographics.csv` | `unit_id,population,frac_asian,frac_black,frac_hispanic,frac_white` |
//! | `mobility.csv`     | `unit_id,date,inflow`                                             |
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`). Reals are written with Rust's shortest
//! round-trip formatting, so writing and re-reading a panel is lossless.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SMOOTHING_WINDOW: usize = 7;
pub const CASES_FILE: &str = "cases.csv";
pub const DEMOGRAPHICS_FILE: &str = "demographics.csv";
pub const MOBILITY_FILE: &str = "mobility.csv";

const FRACTION_SUM_TOLERANCE: f64 = 1e-6;

/// The four racial and ethnic groups tracked per unit, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Asian,
    Black,
    Hispanic,
    White,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Asian, Group::Black, Group::Hispanic, Group::White];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Asian => "Asian",
            Group::Black => "Black",
            Group::Hispanic => "Hispanic",
            Group::White => "White",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Group::Asian => "asian",
            Group::Black => "black",
            Group::Hispanic => "hispanic",
            Group::White => "white",
        }
    }

    pub fn from_name(s: &str) -> Option<Group> {
        Group::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Static description of one unit (county).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub unit_id: String,
    pub population: u64,
    /// Population shares ordered as [`Group::ALL`].
    pub demo_fractions: [f64; 4],
}

impl UnitRecord {
    pub fn new(unit_id: impl Into<String>, population: u64, demo_fractions: [f64; 4]) -> Result<Self> {
        let rec = Self {
            unit_id: unit_id.into(),
            population,
            demo_fractions,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 1 {
            return Err(Error::Validation(format!(
                "unit `{}`: population must be at least 1",
                self.unit_id
            )));
        }
        for (g, f) in Group::ALL.iter().zip(self.demo_fractions) {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Validation(format!(
                    "unit `{}`: fraction for {} is {f}, outside [0, 1]",
                    self.unit_id, g
                )));
            }
        }
        let sum: f64 = self.demo_fractions.iter().sum();
        if sum > 1.0 + FRACTION_SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "unit `{}`: demographic fractions sum to {sum} > 1",
                self.unit_id
            )));
        }
        Ok(())
    }
}

/// Daily series for one unit. All vectors share the length of `dates`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    pub unit_id: String,
    pub dates: Vec<NaiveDate>,
    pub target_raw: Vec<f64>,
    pub target_smoothed: Vec<f64>,
    pub exog: Option<Vec<f64>>,
}

impl PanelSeries {
    pub fn new(
        unit_id: impl Into<String>,
        start: NaiveDate,
        target_raw: Vec<f64>,
        exog: Option<Vec<f64>>,
    ) -> Result<Self> {
        let unit_id = unit_id.into();
        if let Some(x) = &exog {
            if x.len() != target_raw.len() {
                return Err(Error::Dimension(format!(
                    "unit `{unit_id}`: {} exogenous values for {} days",
                    x.len(),
                    target_raw.len()
                )));
            }
        }
        let target_smoothed = rolling_average(&target_raw, SMOOTHING_WINDOW)?;
        let dates = (0..target_raw.len() as u64)
            .map(|d| start + Days::new(d))
            .collect();
        Ok(Self {
            unit_id,
            dates,
            target_raw,
            target_smoothed,
            exog,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelUnit {
    pub record: UnitRecord,
    pub series: PanelSeries,
}

/// A set of units, ordered by `unit_id`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupedPanel {
    pub units: Vec<PanelUnit>,
}

impl GroupedPanel {
    pub fn new(mut units: Vec<PanelUnit>) -> Self {
        units.sort_by(|a, b| a.record.unit_id.cmp(&b.record.unit_id));
        Self { units }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn unit(&self, id: &str) -> Option<&PanelUnit> {
        self.units
            .binary_search_by(|u| u.record.unit_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.units[i])
    }

    pub fn records(&self) -> impl Iterator<Item = &UnitRecord> {
        self.units.iter().map(|u| &u.record)
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let first = self.units.iter().filter_map(|u| u.series.dates.first()).min()?;
        let last = self.units.iter().filter_map(|u| u.series.dates.last()).max()?;
        Some((*first, *last))
    }

    /// Writes `cases.csv`, `demographics.csv` and, when any unit carries
    /// mobility, `mobility.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let path = dir.join(CASES_FILE);
        let mut out = String::from("unit_id,date,cases\n");
        for u in &self.units {
            for (d, c) in u.series.dates.iter().zip(&u.series.target_raw) {
                out.push_str(&format!("{},{},{}\n", u.record.unit_id, d, c));
            }
        }
        write_file(&path, &out)?;

        let path = dir.join(DEMOGRAPHICS_FILE);
        let mut out =
            String::from("unit_id,population,frac_asian,frac_black,frac_hispanic,frac_white\n");
        for u in &self.units {
            let f = u.record.demo_fractions;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                u.record.unit_id, u.record.population, f[0], f[1], f[2], f[3]
            ));
        }
        write_file(&path, &out)?;

        if self.units.iter().any(|u| u.series.exog.is_some()) {
            let path = dir.join(MOBILITY_FILE);
            let mut out = String::from("unit_id,date,inflow\n");
            for u in &self.units {
                if let Some(x) = &u.series.exog {
                    for (d, v) in u.series.dates.iter().zip(x) {
                        out.push_str(&format!("{},{},{}\n", u.record.unit_id, d, v));
                    }
                }
            }
            write_file(&path, &out)?;
        }
        Ok(())
    }

    /// Reads the panel CSVs from `dir`; `mobility.csv` is optional.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mobility = dir.join(MOBILITY_FILE);
        ingest_panel(
            &dir.join(CASES_FILE),
            &dir.join(DEMOGRAPHICS_FILE),
            mobility.exists().then_some(mobility.as_path()),
        )
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Trailing mean over at most `window` days; the first `window - 1` outputs
/// average over the days available so far.
pub fn rolling_average(raw: &[f64], window: usize) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("rolling average of an empty series"));
    }
    if window == 0 {
        return Err(Error::Domain("rolling window must be at least 1".into()));
    }
    Ok((0..raw.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            let span = &raw[lo..=t];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect())
}

struct CsvTable {
    path: std::path::PathBuf,
    reader: csv::Reader<File>,
    columns: Vec<usize>,
}

impl CsvTable {
    fn open(path: &Path, required: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let columns = required
            .iter()
            .map(|name| {
                headers.iter().position(|h| h == *name).ok_or_else(|| Error::Parse {
                    file: path.to_path_buf(),
                    line: 1,
                    msg: format!("missing column `{name}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            path: path.to_path_buf(),
            reader,
            columns,
        })
    }

    /// Visits each data row with its 1-based file line and the required cells.
    fn for_each(&mut self, mut f: impl FnMut(u64, &[&str]) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => return Ok(()),
                Ok(true) => {}
                Err(e) => return Err(csv_error(&self.path, e)),
            }
            let line = record.position().map_or(0, |p| p.line());
            let cells = self
                .columns
                .iter()
                .map(|&c| {
                    record.get(c).ok_or_else(|| Error::Parse {
                        file: self.path.clone(),
                        line,
                        msg: "row is missing cells".into(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            f(line, &cells)?;
        }
    }

    fn parse_err(&self, line: u64, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        file: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

fn parse_real(table: &CsvTable, line: u64, col: &str, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(table.parse_err(line, format!("`{col}` is not a finite number: `{s}`"))),
    }
}

fn parse_date(table: &CsvTable, line: u64, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| table.parse_err(line, format!("`date` is not an ISO-8601 date: `{s}`")))
}

/// Reads `demographics.csv` into validated unit records, keyed by unit id.
pub fn read_demographics(path: &Path) -> Result<BTreeMap<String, UnitRecord>> {
    let cols = [
        "unit_id",
        "population",
        "frac_asian",
        "frac_black",
        "frac_hispanic",
        "frac_white",
    ];
    let mut table = CsvTable::open(path, &cols)?;
    let mut rows = Vec::new();
    table.for_each(|line, cells| {
        rows.push((line, cells.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
        Ok(())
    })?;

    let mut out = BTreeMap::new();
    for (line, cells) in rows {
        let population: u64 = cells[1].parse().map_err(|_| {
            table.parse_err(line, format!("`population` is not a positive integer: `{}`", cells[1]))
        })?;
        let mut fractions = [0.0; 4];
        for (j, f) in fractions.iter_mut().enumerate() {
            *f = parse_real(&table, line, cols[2 + j], &cells[2 + j])?;
        }
        let record = UnitRecord {
            unit_id: cells[0].clone(),
            population,
            demo_fractions: fractions,
        };
        record.validate()?;
        if out.insert(record.unit_id.clone(), record).is_some() {
            return Err(table.parse_err(line, format!("duplicate unit `{}`", cells[0])));
        }
    }
    Ok(out)
}

type DatedValues = BTreeMap<String, Vec<(NaiveDate, f64, u64)>>;

fn read_dated(path: &Path, value_col: &str, non_negative: bool) -> Result<DatedValues> {
    let mut table = CsvTable::open(path, &["unit_id", "date", value_col])?;
    let mut rows = Vec::new();
    table.for_each(|line, cells| {
        rows.push((line, [cells[0].to_string(), cells[1].to_string(), cells[2].to_string()]));
        Ok(())
    })?;
    let mut out: DatedValues = BTreeMap::new();
    for (line, [unit, date, value]) in rows {
        let date = parse_date(&table, line, &date)?;
        let value = parse_real(&table, line, value_col, &value)?;
        if non_negative && value < 0.0 {
            return Err(table.parse_err(line, format!("`{value_col}` is negative: {value}")));
        }
        out.entry(unit).or_default().push((date, value, line));
    }
    for rows in out.values_mut() {
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(table.parse_err(w[1].2, format!("duplicate date {}", w[1].0)));
        }
    }
    Ok(out)
}

/// Loads a grouped panel from its CSV files and computes the smoothed target.
pub fn ingest_panel(
    cases_csv: &Path,
    demographics_csv: &Path,
    mobility_csv: Option<&Path>,
) -> Result<GroupedPanel> {
    for path in [cases_csv, demographics_csv] {
        if !path.exists() {
            return Err(Error::MissingPanelFile { path: path.to_owned() });
        }
    }
    let demographics = read_demographics(demographics_csv)?;
    let cases = read_dated(cases_csv, "cases", true)?;
    let mut mobility = match mobility_csv {
        Some(p) => read_dated(p, "inflow", false)?,
        None => BTreeMap::new(),
    };

    let mut units = Vec::with_capacity(cases.len());
    for (unit_id, rows) in cases {
        let record = demographics.get(&unit_id).cloned().ok_or_else(|| Error::Referential {
            unit: unit_id.clone(),
            msg: format!("appears in {} but not in {}", cases_csv.display(), demographics_csv.display()),
        })?;
        for w in rows.windows(2) {
            if w[1].0 != w[0].0 + Days::new(1) {
                return Err(Error::DateGap {
                    unit: unit_id,
                    before: w[0].0,
                    after: w[1].0,
                });
            }
        }
        let start = rows[0].0;
        let raw: Vec<f64> = rows.iter().map(|r| r.1).collect();

        let exog = match mobility.remove(&unit_id) {
            None => None,
            Some(m) => {
                let by_date: BTreeMap<NaiveDate, f64> = m.iter().map(|r| (r.0, r.1)).collect();
                let values = rows
                    .iter()
                    .map(|r| {
                        by_date.get(&r.0).copied().ok_or_else(|| Error::Referential {
                            unit: unit_id.clone(),
                            msg: format!("has no mobility value for {}", r.0),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(values)
            }
        };
        let series = PanelSeries::new(unit_id, start, raw, exog)?;
        units.push(PanelUnit { record, series });
    }
    if units.is_empty() {
        return Err(Error::EmptyInput("cases file has no rows"));
    }
    Ok(GroupedPanel::new(units))
}

/// Per-unit affine target scaling fitted on the training period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScaler {
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, scale: 1.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        Self {
            mean,
            scale: if sd > 1e-9 { sd } else { 1.0 },
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.mean + self.scale * z
    }
}

/// One encoder/horizon window cut from a unit's series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub unit_id: String,
    /// `(target_smoothed, exog)` per encoder day; exog is 0 when absent.
    pub encoder: Vec<(f64, f64)>,
    pub exog_present: bool,
    pub horizon_targets: Vec<f64>,
    pub lookaheads: Vec<u32>,
    pub demo_fractions: [f64; 4],
    pub population: u64,
    pub first_target_date: NaiveDate,
    pub scaler: TargetScaler,
}

impl WindowSample {
    pub fn encoder_len(&self) -> usize {
        self.encoder.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon_targets.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct WindowSplit {
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    /// Units dropped because they could not supply a training window.
    pub excluded: Vec<String>,
}

/// Start date of the final `test_days` days of the panel.
pub fn split_for_test_days(panel: &GroupedPanel, test_days: u64) -> Result<NaiveDate> {
    let (_, last) = panel
        .date_range()
        .ok_or(Error::EmptyInput("panel has no dates"))?;
    if test_days == 0 {
        return Err(Error::Validation("test_days must be at least 1".into()));
    }
    Ok(last - Days::new(test_days - 1))
}

/// Cuts daily-sliding windows. Training windows have every target day before
/// `split_date`; test windows have every target day on or after it. Windows
/// straddling the split belong to neither set.
pub fn make_windows(
    panel: &GroupedPanel,
    encoder_len: usize,
    horizon: usize,
    split_date: NaiveDate,
) -> Result<WindowSplit> {
    if encoder_len == 0 || horizon == 0 {
        return Err(Error::Validation("encoder length and horizon must be positive".into()));
    }
    let (first, last) = panel
        .date_range()
        .ok_or(Error::EmptyInput("panel has no dates"))?;
    if split_date <= first || split_date > last {
        return Err(Error::Validation(format!(
            "split date {split_date} is outside ({first}, {last}]"
        )));
    }

    let mut out = WindowSplit::default();
    for unit in &panel.units {
        let s = &unit.series;
        let n = s.len();
        let span = encoder_len + horizon;
        // index of the first test day within this series (may be n)
        let split_idx = s.dates.iter().position(|d| *d >= split_date).unwrap_or(n);
        let train_starts = (split_idx + 1).saturating_sub(span);
        if train_starts == 0 {
            log::warn!(
                "unit `{}` excluded: {} days before the split cannot fit encoder {} + horizon {}",
                s.unit_id,
                split_idx,
                encoder_len,
                horizon
            );
            out.excluded.push(s.unit_id.clone());
            continue;
        }
        let scaler = TargetScaler::fit(&s.target_smoothed[..split_idx]);
        let make = |start: usize| {
            let enc = start..start + encoder_len;
            let tgt = start + encoder_len..start + span;
            WindowSample {
                unit_id: s.unit_id.clone(),
                encoder: enc
                    .map(|t| (s.target_smoothed[t], s.exog.as_ref().map_or(0.0, |x| x[t])))
                    .collect(),
                exog_present: s.exog.is_some(),
                horizon_targets: s.target_smoothed[tgt.clone()].to_vec(),
                lookaheads: (1..=horizon as u32).collect(),
                demo_fractions: unit.record.demo_fractions,
                population: unit.record.population,
                first_target_date: s.dates[tgt.start],
                scaler,
            }
        };
        out.train.extend((0..train_starts).map(make));

        let first_test_start = split_idx.saturating_sub(encoder_len);
        let test_end = (n + 1).saturating_sub(span);
        let before = out.test.len();
        out.test
            .extend((first_test_start..test_end).filter(|&st| st + encoder_len >= split_idx).map(make));
        if out.test.len() == before {
            log::warn!("unit `{}` has no complete test window", s.unit_id);
        }
    }
    if out.train.is_empty() {
        return Err(Error::SampleSize(
            "every unit was excluded; no training windows remain".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn brute_rolling(raw: &[f64], w: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for t in 0..raw.len() {
            let mut sum = 0.0;
            let mut count = 0;
            let mut i = t as isize;
            while i >= 0 && count < w {
                sum += raw[i as usize];
                count += 1;
                i -= 1;
            }
            out.push(sum / count as f64);
        }
        out
    }

    #[test]
    fn rolling_examples() {
        assert_eq!(rolling_average(&[1.0, 1.0, 1.0], 7).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(rolling_average(&[0.0, 7.0], 7).unwrap(), vec![0.0, 3.5]);
        let s = rolling_average(&[7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 7).unwrap();
        assert_eq!(s[6], 1.0);
    }

    #[test]
    fn rolling_errors() {
        assert!(matches!(rolling_average(&[], 7), Err(Error::EmptyInput(_))));
        assert!(matches!(rolling_average(&[1.0], 0), Err(Error::Domain(_))));
    }

    #[test]
    fn rolling_matches_brute_force_on_seeded_series() {
        let mut rng = crate::rng::PortableRng::new(20);
        let raw: Vec<f64> = (0..20).map(|_| rng.uniform_in(0.0, 50.0)).collect();
        let got = rolling_average(&raw, 7).unwrap();
        let want = brute_rolling(&raw, 7);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn rolling_matches_oracle(raw in prop::collection::vec(0.0f64..1e4, 1..60), w in 1usize..10) {
            let got = rolling_average(&raw, w).unwrap();
            let want = brute_rolling(&raw, w);
            prop_assert_eq!(got.len(), raw.len());
            for (g, e) in got.iter().zip(&want) {
                prop_assert!((g - e).abs() <= 1e-9 * e.abs().max(1.0));
            }
        }

        #[test]
        fn rolling_constant_is_fixed_point(c in 0.0f64..1e6, n in 1usize..40) {
            let raw = vec![c; n];
            let once = rolling_average(&raw, 7).unwrap();
            for v in &once {
                prop_assert!((v - c).abs() <= 1e-9 * c.max(1.0));
            }
        }
    }

    fn toy_panel(n_units: usize, n_days: usize) -> GroupedPanel {
        let units = (0..n_units)
            .map(|u| PanelUnit {
                record: UnitRecord::new(format!("u{u}"), 1000 * (u as u64 + 1), [0.1, 0.2, 0.1, 0.6])
                    .unwrap(),
                series: PanelSeries::new(
                    format!("u{u}"),
                    date("2020-03-01"),
                    (0..n_days).map(|t| (t + u) as f64).collect(),
                    None,
                )
                .unwrap(),
            })
            .collect();
        GroupedPanel::new(units)
    }

    #[test]
    fn window_index_arithmetic() {
        let panel = toy_panel(1, 30);
        let split = date("2020-03-01") + Days::new(25);
        let w = make_windows(&panel, 7, 3, split).unwrap();
        assert!(w.train.iter().all(|s| s.first_target_date + Days::new(2) < split));
        assert!(w.test.iter().all(|s| s.first_target_date >= split));
        let last_test = w.test.iter().map(|s| s.first_target_date + Days::new(2)).max().unwrap();
        assert_eq!(last_test, date("2020-03-01") + Days::new(29));
        // Brute-force enumeration of valid start indices.
        let mut n_train = 0;
        let mut n_test = 0;
        for start in 0..30usize {
            let first_target = start + 7;
            let last_target = start + 7 + 3 - 1;
            if last_target >= 30 {
                continue;
            }
            if last_target < 25 {
                n_train += 1;
            } else if first_target >= 25 {
                n_test += 1;
            }
        }
        assert_eq!(w.train.len(), n_train);
        assert_eq!(w.test.len(), n_test);
        assert_eq!(w.test.len(), 3);
    }

    #[test]
    fn window_targets_follow_encoder() {
        let panel = toy_panel(1, 30);
        let w = make_windows(&panel, 5, 2, date("2020-03-20")).unwrap();
        let s = &panel.units[0].series;
        for win in w.train.iter().chain(&w.test) {
            let t0 = s.dates.iter().position(|d| *d == win.first_target_date).unwrap();
            assert_eq!(win.horizon_targets, s.target_smoothed[t0..t0 + 2].to_vec());
            let enc: Vec<f64> = win.encoder.iter().map(|e| e.0).collect();
            assert_eq!(enc, s.target_smoothed[t0 - 5..t0].to_vec());
            assert_eq!(win.lookaheads, vec![1, 2]);
        }
    }

    #[test]
    fn short_units_are_excluded_and_all_excluded_is_fatal() {
        let mut panel = toy_panel(2, 30);
        panel.units[1].series = PanelSeries::new("u1", date("2020-03-20"), vec![1.0; 11], None).unwrap();
        let w = make_windows(&panel, 7, 3, date("2020-03-26")).unwrap();
        assert_eq!(w.excluded, vec!["u1".to_string()]);
        assert!(w.train.iter().all(|s| s.unit_id == "u0"));

        let panel = toy_panel(1, 8);
        let err = make_windows(&panel, 7, 3, date("2020-03-05")).unwrap_err();
        assert!(matches!(err, Error::SampleSize(_)));
    }

    #[test]
    fn no_training_target_reaches_the_test_period() {
        let panel = toy_panel(3, 60);
        let split = date("2020-04-15");
        let w = make_windows(&panel, 10, 4, split).unwrap();
        for s in &w.train {
            assert!(s.first_target_date + Days::new(3) < split);
        }
    }

    #[test]
    fn unit_record_rejects_bad_fractions() {
        assert!(UnitRecord::new("a", 10, [1.2, 0.0, 0.0, 0.0]).is_err());
        assert!(UnitRecord::new("a", 10, [0.5, 0.5, 0.5, 0.0]).is_err());
        assert!(UnitRecord::new("a", 0, [0.5, 0.0, 0.0, 0.0]).is_err());
        assert!(UnitRecord::new("a", 10, [0.25, 0.25, 0.25, 0.25]).is_ok());
    }
}
