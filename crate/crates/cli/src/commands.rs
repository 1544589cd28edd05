use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use parity_forecast::audit::{emit_report, unit_errors, ParityReport, REPORT_FILE};
use parity_forecast::debias::{write_log_rows, TRAINING_LOG_HEADER};
use parity_forecast::forecaster::{train_observed, BatchRecord, TrainObserver, TrainedModel};
use parity_forecast::panel::{make_windows, split_for_test_days, UnitRecord, WindowSplit};
use parity_forecast::{Error, Result};

use crate::config::{hash_text, ExperimentConfig};
use crate::version_string;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.ini";
pub const VERSION_FILE: &str = "version.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";
pub const LOSS_HISTORY_HEADER: &str = "epoch,batch,mean_loss,mean_adjusted_loss,objective";

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join(VERSION_FILE), &format!("{}\n", version_string()))
}

fn write_run_files(out: &Path, config: &ExperimentConfig) -> Result<()> {
    prepare(out)?;
    write(&out.join(RESOLVED_CONFIG_FILE), &config.render())
}

fn windows(config: &ExperimentConfig) -> Result<(WindowSplit, Vec<UnitRecord>)> {
    let panel = config.load_panel()?;
    let split = split_for_test_days(&panel, config.test_days)?;
    let w = make_windows(&panel, config.model.encoder_len, config.model.horizon, split)?;
    let tested: BTreeSet<&str> = w.test.iter().map(|s| s.unit_id.as_str()).collect();
    let records = panel
        .records()
        .filter(|r| tested.contains(r.unit_id.as_str()))
        .cloned()
        .collect();
    Ok((w, records))
}

/// Generates the configured synthetic panel into `out`.
pub fn synth(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let panel = parity_forecast::synth::generate(&config.synth)?;
    panel.write_csvs(out)?;
    write_run_files(out, config)?;
    log::info!("wrote {} units to {}", panel.len(), out.display());
    Ok(())
}

struct TrainLog {
    diagnostics: Vec<u8>,
    history: String,
}

impl TrainObserver for TrainLog {
    fn on_batch(&mut self, r: &BatchRecord<'_>, _: &TrainedModel) -> Result<()> {
        if let Some(adj) = r.demopts {
            write_log_rows(&mut self.diagnostics, r.epoch, r.batch, adj)?;
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let _ = writeln!(
            self.history,
            "{},{},{},{},{}",
            r.epoch,
            r.batch,
            mean(r.base_losses),
            mean(r.adjusted_losses),
            r.objective
        );
        Ok(())
    }
}

/// Trains one model and writes its checkpoint, the per-batch regression
/// log and the per-batch loss history into `out`.
pub fn train(config: &ExperimentConfig, out: &Path) -> Result<TrainedModel> {
    let method = config.debias_method()?;
    let (w, _) = windows(config)?;
    if !w.excluded.is_empty() {
        log::warn!("{} units excluded from training", w.excluded.len());
    }
    let mut observer = TrainLog {
        diagnostics: format!("{TRAINING_LOG_HEADER}\n").into_bytes(),
        history: format!("{LOSS_HISTORY_HEADER}\n"),
    };
    let model = train_observed(&w.train, &config.model, method, &mut observer)?;
    write_run_files(out, config)?;
    let text = config.render();
    model.save(&out.join(CHECKPOINT_FILE), Some(&text))?;
    let path = out.join(TRAINING_LOG_FILE);
    std::fs::write(&path, &observer.diagnostics).map_err(|e| Error::io(&path, e))?;
    write(&out.join(LOSS_HISTORY_FILE), &observer.history)?;
    log::info!(
        "{}: loss {} -> {}",
        method.name(),
        model.history.initial_loss,
        model.history.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(model)
}

/// Audits each checkpoint on its test windows and writes the combined
/// tables into `out`. Without `config`, each checkpoint's embedded
/// configuration selects the panel and the split.
pub fn audit(config: Option<&ExperimentConfig>, checkpoints: &[PathBuf], out: &Path) -> Result<Vec<ParityReport>> {
    if checkpoints.is_empty() {
        return Err(Error::EmptyInput("no checkpoints to audit"));
    }
    let mut reports = Vec::with_capacity(checkpoints.len());
    let mut configs = Vec::with_capacity(checkpoints.len());
    for path in checkpoints {
        let (model, embedded) = TrainedModel::load(path)?;
        let exp = match (config, &embedded) {
            (Some(c), _) => c.clone(),
            (None, Some(text)) => ExperimentConfig::parse(text, path)?.resolve()?,
            (None, None) => {
                return Err(Error::Checkpoint(format!(
                    "{} carries no experiment configuration; pass --config",
                    path.display()
                )))
            }
        };
        let (w, records) = windows(&exp)?;
        let forecasts = model.forward(&w.test)?;
        let errors = unit_errors(&forecasts, &w.test, &model.config.quantiles, &records)?;
        let hash = embedded.as_deref().map(hash_text).unwrap_or_else(|| exp.hash());
        reports.push(ParityReport::build(model.method.name(), model.config.seed, &hash, errors)?);
        configs.push(exp);
    }
    emit_report(&reports, out)?;
    prepare(out)?;
    for (r, c) in reports.iter().zip(&configs) {
        write(&out.join(&r.method).join(RESOLVED_CONFIG_FILE), &c.render())?;
    }
    Ok(reports)
}

/// Re-emits the combined tables from existing `report.json` files (or
/// directories holding one).
pub fn report(inputs: &[PathBuf], out: &Path) -> Result<Vec<ParityReport>> {
    let mut reports = Vec::with_capacity(inputs.len());
    for input in inputs {
        let path = if input.is_dir() { input.join(REPORT_FILE) } else { input.clone() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let r: ParityReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.clone(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        reports.push(r);
    }
    emit_report(&reports, out)?;
    prepare(out)?;
    Ok(reports)
}
