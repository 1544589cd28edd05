//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Every key is
//! optional; unknown or repeated keys are rejected. [`ExperimentConfig::render`]
//! writes every key in a fixed order, so the rendered text of a resolved
//! configuration identifies a run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use parity_forecast::debias::{DebiasMethod, DEFAULT_P_THRESHOLD};
use parity_forecast::forecaster::ModelConfig;
use parity_forecast::panel::GroupedPanel;
use parity_forecast::synth::{generate, SynthConfig};
use parity_forecast::{Error, Result};
use sha2::{Digest, Sha256};

/// Every accepted key, in rendering order.
pub const KEYS: &[&str] = &[
    "seed",
    "out_dir",
    "panel_dir",
    "n_units",
    "n_days",
    "start_date",
    "base_rate",
    "wave_amplitude",
    "wave_period_days",
    "phase_spread_days",
    "noise_sd",
    "underreport_asian",
    "underreport_black",
    "underreport_hispanic",
    "underreport_white",
    "mobility_coupling",
    "population_min",
    "population_max",
    "test_days",
    "encoder_len",
    "horizon",
    "quantiles",
    "hidden_sizes",
    "learning_rate",
    "momentum",
    "batch_size",
    "epochs",
    "use_static",
    "sort_quantiles",
    "method",
    "p_threshold",
    "compounding",
    "penalty_weight",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Seeds both the synthetic panel and the model.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Directory holding the panel CSVs; a synthetic panel is generated
    /// in memory when unset.
    pub panel_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub test_days: u64,
    pub model: ModelConfig,
    pub method: String,
    pub p_threshold: f64,
    pub compounding: bool,
    pub penalty_weight: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("runs"),
            panel_dir: None,
            synth: SynthConfig::default(),
            test_days: 14,
            model: ModelConfig::default(),
            method: "none".into(),
            p_threshold: DEFAULT_P_THRESHOLD,
            compounding: false,
            penalty_weight: 0.1,
        }
    }
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("`{value}`: {e}"))
}

fn flag(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{value}` is not `true` or `false`")),
    }
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(num)
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses configuration text; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                file: origin.to_owned(),
                line: i as u64 + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if seen.contains(&key) {
                return Err(err(format!("key `{key}` is set twice")));
            }
            seen.push(key);
            cfg.set(key, value).map_err(|m| err(format!("key `{key}`: {m}")))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let e = &mut self.synth.epidemic;
        let m = &mut self.model;
        match key {
            "seed" => self.seed = num(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "panel_dir" => self.panel_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "n_units" => self.synth.n_units = num(v)?,
            "n_days" => self.synth.n_days = num(v)?,
            "start_date" => self.synth.start_date = NaiveDate::from_str(v).map_err(|e| format!("`{v}`: {e}"))?,
            "base_rate" => e.base_rate = num(v)?,
            "wave_amplitude" => e.wave_amplitude = num(v)?,
            "wave_period_days" => e.wave_period_days = num(v)?,
            "phase_spread_days" => e.phase_spread_days = num(v)?,
            "noise_sd" => e.noise_sd = num(v)?,
            "underreport_asian" => self.synth.underreport[0] = num(v)?,
            "underreport_black" => self.synth.underreport[1] = num(v)?,
            "underreport_hispanic" => self.synth.underreport[2] = num(v)?,
            "underreport_white" => self.synth.underreport[3] = num(v)?,
            "mobility_coupling" => self.synth.mobility_coupling = num(v)?,
            "population_min" => self.synth.population_min = num(v)?,
            "population_max" => self.synth.population_max = num(v)?,
            "test_days" => self.test_days = num(v)?,
            "encoder_len" => m.encoder_len = num(v)?,
            "horizon" => m.horizon = num(v)?,
            "quantiles" => m.quantiles = list(v)?,
            "hidden_sizes" => m.hidden_sizes = list(v)?,
            "learning_rate" => m.learning_rate = num(v)?,
            "momentum" => m.momentum = num(v)?,
            "batch_size" => m.batch_size = num(v)?,
            "epochs" => m.epochs = num(v)?,
            "use_static" => m.use_static = flag(v)?,
            "sort_quantiles" => m.sort_quantiles = flag(v)?,
            "method" => self.method = v.to_owned(),
            "p_threshold" => self.p_threshold = num(v)?,
            "compounding" => self.compounding = flag(v)?,
            "penalty_weight" => self.penalty_weight = num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let e = &self.synth.epidemic;
        let m = &self.model;
        match key {
            "seed" => self.seed.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "panel_dir" => self.panel_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "n_units" => self.synth.n_units.to_string(),
            "n_days" => self.synth.n_days.to_string(),
            "start_date" => self.synth.start_date.to_string(),
            "base_rate" => e.base_rate.to_string(),
            "wave_amplitude" => e.wave_amplitude.to_string(),
            "wave_period_days" => e.wave_period_days.to_string(),
            "phase_spread_days" => e.phase_spread_days.to_string(),
            "noise_sd" => e.noise_sd.to_string(),
            "underreport_asian" => self.synth.underreport[0].to_string(),
            "underreport_black" => self.synth.underreport[1].to_string(),
            "underreport_hispanic" => self.synth.underreport[2].to_string(),
            "underreport_white" => self.synth.underreport[3].to_string(),
            "mobility_coupling" => self.synth.mobility_coupling.to_string(),
            "population_min" => self.synth.population_min.to_string(),
            "population_max" => self.synth.population_max.to_string(),
            "test_days" => self.test_days.to_string(),
            "encoder_len" => m.encoder_len.to_string(),
            "horizon" => m.horizon.to_string(),
            "quantiles" => join(&m.quantiles),
            "hidden_sizes" => join(&m.hidden_sizes),
            "learning_rate" => m.learning_rate.to_string(),
            "momentum" => m.momentum.to_string(),
            "batch_size" => m.batch_size.to_string(),
            "epochs" => m.epochs.to_string(),
            "use_static" => m.use_static.to_string(),
            "sort_quantiles" => m.sort_quantiles.to_string(),
            "method" => self.method.clone(),
            "p_threshold" => self.p_threshold.to_string(),
            "compounding" => self.compounding.to_string(),
            "penalty_weight" => self.penalty_weight.to_string(),
            _ => unreachable!("key table and accessors disagree on `{key}`"),
        }
    }

    /// Copies the shared seed into the synthetic and model settings and
    /// checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.synth.seed = self.seed;
        self.model.seed = self.seed;
        if self.test_days == 0 {
            return Err(Error::Validation("test_days must be at least 1".into()));
        }
        if self.panel_dir.is_none() {
            self.synth.validate()?;
        }
        self.model.validate()?;
        self.debias_method()?;
        Ok(self)
    }

    pub fn debias_method(&self) -> Result<DebiasMethod> {
        let m = DebiasMethod::from_name(&self.method, self.p_threshold, self.compounding, self.penalty_weight)?;
        m.validate()?;
        Ok(m)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    /// Hex SHA-256 of the rendered configuration.
    pub fn hash(&self) -> String {
        hash_text(&self.render())
    }

    /// The configured panel directory, or a generated synthetic panel.
    pub fn load_panel(&self) -> Result<GroupedPanel> {
        match &self.panel_dir {
            Some(dir) => GroupedPanel::read_dir(dir),
            None => generate(&self.synth),
        }
    }
}

pub fn hash_text(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
