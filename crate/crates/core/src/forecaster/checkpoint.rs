//! JSON checkpoint container.
//!
//! ```text
//! {
//!   "format": "parity-forecast-checkpoint",
//!   "version": 1,
//!   "model": { "config", "method", "network", "group_labels", "loss_scale", "history" },
//!   "experiment_config": "<resolved config text>" | null
//! }
//! ```
//!
//! `network.params` lists every parameter in layout order (see
//! [`Network`](super::Network)). Floats are written in shortest round-trip
//! form, so loading restores every parameter bit-for-bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::TrainedModel;

pub const CHECKPOINT_FORMAT: &str = "parity-forecast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: TrainedModel,
    experiment_config: Option<String>,
}

impl TrainedModel {
    pub fn to_checkpoint_json(&self, experiment_config: Option<&str>) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
            experiment_config: experiment_config.map(str::to_owned),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        Ok(text)
    }

    /// Parses a checkpoint, returning the model and the stored experiment
    /// configuration text.
    pub fn from_checkpoint_json(text: &str) -> Result<(Self, Option<String>)> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag `{}`", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        let m = &file.model;
        let expected = m.config.param_count(m.group_labels.len());
        if m.network.len() != expected || m.network.input_dim() != m.config.input_dim() {
            return Err(Error::Checkpoint(format!(
                "network holds {} parameters; its configuration implies {expected}",
                m.network.len()
            )));
        }
        Ok((file.model, file.experiment_config))
    }

    pub fn save(&self, path: &Path, experiment_config: Option<&str>) -> Result<()> {
        let text = self.to_checkpoint_json(experiment_config)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, Option<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debias::DebiasMethod;
    use crate::forecaster::ModelConfig;
    use crate::panel::Group;
    use crate::rng::PortableRng;
    use proptest::prelude::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig {
            encoder_len: 5,
            horizon: 2,
            hidden_sizes: vec![7, 3],
            ..ModelConfig::default()
        };
        let mut m = TrainedModel::init(cfg, DebiasMethod::Sufficiency { penalty_weight: 0.3 }, vec![Group::Black, Group::White])
            .unwrap();
        let mut rng = PortableRng::new(8);
        for p in &mut m.network.params {
            *p = rng.normal() * 10f64.powi(rng.index_below(20) as i32 - 10);
        }
        m.history.epoch_losses = vec![1.0 / 3.0, 0.1];
        let text = m.to_checkpoint_json(Some("seed = 1\n")).unwrap();
        let (back, extra) = TrainedModel::from_checkpoint_json(&text).unwrap();
        assert_eq!(extra.as_deref(), Some("seed = 1\n"));
        for (a, b) in back.network.params.iter().zip(&m.network.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, m);
    }

    #[test]
    fn foreign_or_inconsistent_files_are_rejected() {
        let m = TrainedModel::init(ModelConfig::default(), DebiasMethod::None, vec![]).unwrap();
        let text = m.to_checkpoint_json(None).unwrap();
        let bad_tag = text.replacen(CHECKPOINT_FORMAT, "other", 1);
        assert!(matches!(TrainedModel::from_checkpoint_json(&bad_tag), Err(Error::Checkpoint(_))));
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["model"]["config"]["horizon"] = 3.into();
        let resized = serde_json::to_string(&v).unwrap();
        assert!(matches!(TrainedModel::from_checkpoint_json(&resized), Err(Error::Checkpoint(_))));
        assert!(matches!(TrainedModel::from_checkpoint_json("{"), Err(Error::Checkpoint(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn arbitrary_finite_params_round_trip(bits in proptest::collection::vec(any::<f64>(), 1..8)) {
            let cfg = ModelConfig { encoder_len: 1, horizon: 1, quantiles: vec![0.5], hidden_sizes: vec![], use_static: false, ..ModelConfig::default() };
            let mut m = TrainedModel::init(cfg, DebiasMethod::None, vec![]).unwrap();
            for (p, v) in m.network.params.iter_mut().zip(bits.iter().filter(|v| v.is_finite())) {
                *p = *v;
            }
            let (back, _) = TrainedModel::from_checkpoint_json(&m.to_checkpoint_json(None).unwrap()).unwrap();
            for (a, b) in back.network.params.iter().zip(&m.network.params) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
