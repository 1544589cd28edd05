//! Multi-horizon, multi-quantile feed-forward forecaster.
//!
//! Inputs per window: the standardized encoder targets, the exogenous
//! series, an exogenous-presence flag and, optionally, the unit's four
//! demographic fractions and `log10(population) - 5`. Outputs are `H × Q`
//! standardized values (row-major by lookahead) that the unit's scaler maps
//! back to case units.

mod checkpoint;
mod gradcheck;
pub mod network;
mod train;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::debias::DebiasMethod;
use crate::error::{Error, Result};
use crate::loss::DEFAULT_QUANTILES;
use crate::panel::{Group, WindowSample};

pub use checkpoint::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, sample_loss_and_gradient};
pub use network::Network;
pub use train::{evaluate_loss, train, train_observed, BatchRecord, TrainObserver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_len: usize,
    pub horizon: usize,
    pub quantiles: Vec<f64>,
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    /// Heavy-ball momentum; 0 gives plain mini-batch gradient descent.
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub use_static: bool,
    /// Sort each lookahead's outputs in forecasts (training is unaffected).
    pub sort_quantiles: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_len: 21,
            horizon: 7,
            quantiles: DEFAULT_QUANTILES.to_vec(),
            hidden_sizes: vec![32],
            learning_rate: 0.1,
            momentum: 0.0,
            batch_size: 64,
            epochs: 50,
            seed: 1,
            use_static: true,
            sort_quantiles: false,
        }
    }
}

/// Static features appended when `use_static` is set.
pub const STATIC_FEATURES: usize = 5;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.encoder_len == 0 || self.horizon == 0 {
            return fail("encoder_len and horizon must be positive".into());
        }
        if self.quantiles.is_empty() {
            return fail("at least one quantile is required".into());
        }
        if self.quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return fail(format!("quantiles must lie in (0, 1): {:?}", self.quantiles));
        }
        if self.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("quantiles must be strictly increasing: {:?}", self.quantiles));
        }
        if self.hidden_sizes.contains(&0) {
            return fail("hidden layer sizes must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} is outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch_size and epochs must be positive".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        2 * self.encoder_len + 1 + if self.use_static { STATIC_FEATURES } else { 0 }
    }

    pub fn output_dim(&self) -> usize {
        self.horizon * self.quantiles.len()
    }

    pub fn param_count(&self, n_group_heads: usize) -> usize {
        Network::param_count(self.input_dim(), &self.hidden_sizes, self.output_dim(), n_group_heads)
    }

    /// Index of the quantile closest to the median.
    pub fn median_index(&self) -> usize {
        let mut best = 0;
        for (i, q) in self.quantiles.iter().enumerate() {
            if (q - 0.5).abs() < (self.quantiles[best] - 0.5).abs() {
                best = i;
            }
        }
        best
    }

    /// Network input vector for one window.
    pub fn features(&self, sample: &WindowSample) -> Result<Vec<f64>> {
        if sample.encoder_len() != self.encoder_len || sample.horizon() != self.horizon {
            return Err(Error::Dimension(format!(
                "window of unit `{}` has encoder {} / horizon {}, model expects {} / {}",
                sample.unit_id,
                sample.encoder_len(),
                sample.horizon(),
                self.encoder_len,
                self.horizon
            )));
        }
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend(sample.encoder.iter().map(|(y, _)| sample.scaler.forward(*y)));
        x.extend(sample.encoder.iter().map(|(_, e)| *e));
        x.push(if sample.exog_present { 1.0 } else { 0.0 });
        if self.use_static {
            x.extend(sample.demo_fractions);
            x.push((sample.population as f64).log10() - 5.0);
        }
        Ok(x)
    }
}

/// Per-epoch record of the mean unadjusted training loss (case units).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Loss of the initialized model on the whole training set.
    pub initial_loss: f64,
    /// Mean batch loss of each epoch, measured before each batch's update.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub method: DebiasMethod,
    pub network: Network,
    /// Labels owning a group head, in head order (Sufficiency only).
    pub group_labels: Vec<Group>,
    /// Divisor applied to the case-unit objective during training.
    pub loss_scale: f64,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub unit_id: String,
    pub first_target_date: NaiveDate,
    /// `values[h][q]`: case-unit prediction at lookahead `h + 1`.
    pub values: Vec<Vec<f64>>,
}

impl TrainedModel {
    /// Untrained model with freshly initialized parameters.
    pub fn init(config: ModelConfig, method: DebiasMethod, group_labels: Vec<Group>) -> Result<Self> {
        config.validate()?;
        method.validate()?;
        let mut rng = crate::rng::PortableRng::new(config.seed);
        let network = Network::init(
            config.input_dim(),
            &config.hidden_sizes,
            config.output_dim(),
            group_labels.len(),
            &mut rng,
        );
        Ok(Self {
            config,
            method,
            network,
            group_labels,
            loss_scale: 1.0,
            history: TrainingHistory::default(),
        })
    }

    /// Raw standardized outputs of the joint head.
    pub fn predict_standardized(&self, sample: &WindowSample) -> Result<Vec<f64>> {
        self.network.forward(&self.config.features(sample)?)
    }

    pub fn forecast(&self, sample: &WindowSample) -> Result<QuantileForecast> {
        let z = self.predict_standardized(sample)?;
        let q = self.config.quantiles.len();
        let values = z
            .chunks(q)
            .map(|row| {
                let mut v: Vec<f64> = row.iter().map(|&z| sample.scaler.inverse(z)).collect();
                if self.config.sort_quantiles {
                    v.sort_by(f64::total_cmp);
                }
                v
            })
            .collect();
        Ok(QuantileForecast {
            unit_id: sample.unit_id.clone(),
            first_target_date: sample.first_target_date,
            values,
        })
    }

    /// One forecast per sample, in order.
    pub fn forward(&self, batch: &[WindowSample]) -> Result<Vec<QuantileForecast>> {
        batch.iter().map(|s| self.forecast(s)).collect()
    }
}
