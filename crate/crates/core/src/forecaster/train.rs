//! Mini-batch training loop with de-biasing hooks.

use std::collections::BTreeMap;

use crate::audit::majority_label;
use crate::debias::{
    demopts_adjust, group_penalty, individual_penalty, sufficiency_penalty, BatchContext, DebiasMethod,
    DemOptsAdjustment,
};
use crate::error::{Error, Result};
use crate::loss::{pinball_grad_pred, pinball_unchecked};
use crate::panel::{Group, WindowSample};
use crate::rng::PortableRng;

use super::{ModelConfig, TrainedModel};

/// What the training loop saw on one batch, passed to observers after the
/// parameter update.
#[derive(Debug)]
pub struct BatchRecord<'a> {
    pub epoch: usize,
    pub batch: usize,
    /// Quantile-averaged loss per (sample, lookahead) row, in case units.
    pub base_losses: &'a [f64],
    /// Rows after the DemOpts factors; equal to `base_losses` otherwise.
    pub adjusted_losses: &'a [f64],
    pub demopts: Option<&'a DemOptsAdjustment>,
    /// The method's scalar objective in case units.
    pub objective: f64,
}

pub trait TrainObserver {
    fn on_batch(&mut self, record: &BatchRecord<'_>, model: &TrainedModel) -> Result<()>;
}

impl TrainObserver for () {
    fn on_batch(&mut self, _: &BatchRecord<'_>, _: &TrainedModel) -> Result<()> {
        Ok(())
    }
}

/// Offset between the initialization and shuffling generator seeds.
const SHUFFLE_STREAM: u64 = 1;

pub fn train(windows: &[WindowSample], config: &ModelConfig, method: DebiasMethod) -> Result<TrainedModel> {
    train_observed(windows, config, method, &mut ())
}

/// Mean quantile-averaged loss of the joint head over every
/// (window, lookahead) row, in case units.
pub fn evaluate_loss(model: &TrainedModel, windows: &[WindowSample]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("no windows to evaluate"));
    }
    let qs = &model.config.quantiles;
    let mut sum = 0.0;
    let mut rows = 0usize;
    for s in windows {
        let z = model.predict_standardized(s)?;
        for (h, &y) in s.horizon_targets.iter().enumerate() {
            let row = &z[h * qs.len()..(h + 1) * qs.len()];
            sum += qs
                .iter()
                .zip(row)
                .map(|(&q, &z)| pinball_unchecked(q, y, s.scaler.inverse(z)))
                .sum::<f64>()
                / qs.len() as f64;
            rows += 1;
        }
    }
    Ok(sum / rows as f64)
}

pub fn train_observed(
    windows: &[WindowSample],
    config: &ModelConfig,
    method: DebiasMethod,
    observer: &mut dyn TrainObserver,
) -> Result<TrainedModel> {
    config.validate()?;
    method.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyInput("no training windows"));
    }
    let features: Vec<Vec<f64>> = windows.iter().map(|s| config.features(s)).collect::<Result<_>>()?;
    let labels: Vec<Group> = windows.iter().map(|s| majority_label(&s.demo_fractions)).collect();
    let group_labels: Vec<Group> = match method {
        DebiasMethod::Sufficiency { .. } => {
            let mut present: Vec<Group> = labels.clone();
            present.sort();
            present.dedup();
            present
        }
        _ => Vec::new(),
    };
    let mut model = TrainedModel::init(config.clone(), method, group_labels)?;
    model.loss_scale = windows.iter().map(|s| s.scaler.scale).sum::<f64>() / windows.len() as f64;
    model.history.initial_loss = evaluate_loss(&model, windows)?;

    let mut step = Step::new(&model);
    let mut rng = PortableRng::new(config.seed.wrapping_add(SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut velocity = vec![0.0; model.network.len()];
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut rows = 0usize;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let out = step.run(&model, windows, &features, &labels, idx, epoch, batch)?;
            for (p, (v, g)) in model.network.params.iter_mut().zip(velocity.iter_mut().zip(&step.grad)) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
            loss_sum += step.ctx_losses.iter().sum::<f64>();
            rows += step.ctx_losses.len();
            let adjusted: Vec<f64> = match &out.demopts {
                Some(adj) => adj.adjusted.clone(),
                None => step.ctx_losses.clone(),
            };
            let record = BatchRecord {
                epoch,
                batch,
                base_losses: &step.ctx_losses,
                adjusted_losses: &adjusted,
                demopts: out.demopts.as_ref(),
                objective: out.objective,
            };
            observer.on_batch(&record, &model)?;
        }
        let mean = loss_sum / rows as f64;
        log::debug!("epoch {epoch}: mean training loss {mean}");
        model.history.epoch_losses.push(mean);
    }
    Ok(model)
}

struct StepOutput {
    objective: f64,
    demopts: Option<DemOptsAdjustment>,
}

/// Scratch buffers reused across batches.
struct Step {
    grad: Vec<f64>,
    ctx_losses: Vec<f64>,
}

impl Step {
    fn new(model: &TrainedModel) -> Self {
        Self {
            grad: vec![0.0; model.network.len()],
            ctx_losses: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        model: &TrainedModel,
        windows: &[WindowSample],
        features: &[Vec<f64>],
        labels: &[Group],
        idx: &[usize],
        epoch: usize,
        batch: usize,
    ) -> Result<StepOutput> {
        if idx.is_empty() {
            return Err(Error::Internal(format!("empty batch {batch} in epoch {epoch}")));
        }
        let cfg = &model.config;
        let qs = &cfg.quantiles;
        let nq = qs.len();
        let med = cfg.median_index();
        let net = &model.network;
        let diverged = || Error::Divergence { epoch, batch };

        let mut caches = Vec::with_capacity(idx.len());
        let mut outputs = Vec::with_capacity(idx.len());
        let n_rows = idx.len() * cfg.horizon;
        let mut losses = Vec::with_capacity(n_rows);
        let mut demo = Vec::with_capacity(n_rows);
        let mut looks = Vec::with_capacity(n_rows);
        let mut row_labels = Vec::with_capacity(n_rows);
        let mut residuals = Vec::with_capacity(n_rows);
        for &i in idx {
            let s = &windows[i];
            let cache = net.trunk_forward(&features[i])?;
            let z = net.head_forward(&cache, None);
            for (h, &y) in s.horizon_targets.iter().enumerate() {
                let row = &z[h * nq..(h + 1) * nq];
                let l = qs
                    .iter()
                    .zip(row)
                    .map(|(&q, &z)| pinball_unchecked(q, y, s.scaler.inverse(z)))
                    .sum::<f64>()
                    / nq as f64;
                losses.push(l);
                demo.push(s.demo_fractions);
                looks.push(s.lookaheads[h]);
                row_labels.push(labels[i]);
                residuals.push(row[med] - s.scaler.forward(y));
            }
            caches.push(cache);
            outputs.push(z);
        }
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(diverged());
        }
        let ctx = BatchContext::new(losses, demo, looks, row_labels, residuals)?;
        let n = n_rows as f64;

        // d objective / d row loss and d objective / d row residual
        let mut d_losses = vec![1.0 / n; n_rows];
        let mut d_residuals = vec![0.0; n_rows];
        let mut demopts = None;
        let mut suff = None;
        let objective = match model.method {
            DebiasMethod::None => ctx.mean_loss(),
            DebiasMethod::DemOpts { p_threshold, compounding } => {
                let adj = demopts_adjust(&ctx, p_threshold, compounding);
                for (d, m) in d_losses.iter_mut().zip(&adj.multipliers) {
                    *d = m / n;
                }
                let value = adj.mean_adjusted();
                demopts = Some(adj);
                value
            }
            DebiasMethod::Individual { penalty_weight } => {
                let p = individual_penalty(&ctx, penalty_weight);
                d_losses = p.d_losses;
                d_residuals = p.d_residuals;
                p.value
            }
            DebiasMethod::Group { penalty_weight } => {
                let p = group_penalty(&ctx, penalty_weight);
                d_losses = p.d_losses;
                d_residuals = p.d_residuals;
                p.value
            }
            DebiasMethod::Sufficiency { penalty_weight } => {
                let s = SufficiencyTerms::compute(model, windows, labels, idx, &caches, &outputs, &ctx, penalty_weight);
                let value = s.objective;
                suff = Some(s);
                value
            }
        };
        if !objective.is_finite() {
            return Err(diverged());
        }

        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let inv_scale = 1.0 / model.loss_scale;
        for (b, &i) in idx.iter().enumerate() {
            let s = &windows[i];
            let z = &outputs[b];
            let mut dz = vec![0.0; z.len()];
            for (h, &y) in s.horizon_targets.iter().enumerate() {
                let r = b * cfg.horizon + h;
                for (k, &q) in qs.iter().enumerate() {
                    let pred = s.scaler.inverse(z[h * nq + k]);
                    dz[h * nq + k] = d_losses[r] * pinball_grad_pred(q, y, pred) * s.scaler.scale / nq as f64;
                }
                dz[h * nq + med] += d_residuals[r];
            }
            let mut heads: Vec<(Option<usize>, Vec<f64>)> = Vec::with_capacity(2);
            if let Some(terms) = &suff {
                for (d, extra) in dz.iter_mut().zip(&terms.d_joint[b]) {
                    *d += extra;
                }
                heads.push((Some(terms.head_of[b]), terms.d_head[b].clone()));
            }
            heads.push((None, dz));
            for (_, d) in heads.iter_mut() {
                d.iter_mut().for_each(|v| *v *= inv_scale);
            }
            let refs: Vec<(Option<usize>, &[f64])> = heads.iter().map(|(k, d)| (*k, d.as_slice())).collect();
            net.backward(&caches[b], &refs, &mut self.grad);
        }
        if self.grad.iter().any(|g| !g.is_finite()) {
            return Err(diverged());
        }
        self.ctx_losses = ctx.losses;
        Ok(StepOutput { objective, demopts })
    }
}

/// Joint-versus-group-head terms of the Sufficiency objective for a batch.
struct SufficiencyTerms {
    objective: f64,
    /// Head index of each batch sample.
    head_of: Vec<usize>,
    /// Extra objective gradient on each sample's joint outputs.
    d_joint: Vec<Vec<f64>>,
    /// Objective gradient on each sample's own group-head outputs.
    d_head: Vec<Vec<f64>>,
}

impl SufficiencyTerms {
    #[allow(clippy::too_many_arguments)]
    fn compute(
        model: &TrainedModel,
        windows: &[WindowSample],
        labels: &[Group],
        idx: &[usize],
        caches: &[super::network::ForwardCache],
        outputs: &[Vec<f64>],
        ctx: &BatchContext,
        lambda: f64,
    ) -> Self {
        let cfg = &model.config;
        let qs = &cfg.quantiles;
        let nq = qs.len();
        let head_of: Vec<usize> = idx
            .iter()
            .map(|&i| {
                model
                    .group_labels
                    .binary_search(&labels[i])
                    .expect("every training label owns a head")
            })
            .collect();
        let mut rows_per_group: BTreeMap<Group, usize> = BTreeMap::new();
        for &i in idx {
            *rows_per_group.entry(labels[i]).or_default() += cfg.horizon;
        }
        let n_groups = rows_per_group.len() as f64;

        let mut head_loss: BTreeMap<Group, f64> = BTreeMap::new();
        let mut discrepancy: BTreeMap<Group, f64> = BTreeMap::new();
        let mut d_joint = Vec::with_capacity(idx.len());
        let mut d_head = Vec::with_capacity(idx.len());
        for (b, &i) in idx.iter().enumerate() {
            let s = &windows[i];
            let g = labels[i];
            let n_g = rows_per_group[&g] as f64;
            let zh = model.network.head_forward(&caches[b], Some(head_of[b]));
            let zj = &outputs[b];
            let mut dj = vec![0.0; zj.len()];
            let mut dh = vec![0.0; zh.len()];
            let mut loss = 0.0;
            let mut disc = 0.0;
            for (h, &y) in s.horizon_targets.iter().enumerate() {
                for (k, &q) in qs.iter().enumerate() {
                    let o = h * nq + k;
                    let pred = s.scaler.inverse(zh[o]);
                    loss += pinball_unchecked(q, y, pred) / nq as f64;
                    let diff = zj[o] - zh[o];
                    disc += diff * diff;
                    let d_disc = lambda * 2.0 * diff / (n_groups * n_g * nq as f64);
                    dj[o] = d_disc;
                    dh[o] = -d_disc + pinball_grad_pred(q, y, pred) * s.scaler.scale / (n_groups * n_g * nq as f64);
                }
            }
            *head_loss.entry(g).or_default() += loss / n_g;
            *discrepancy.entry(g).or_default() += disc / (n_g * nq as f64);
            d_joint.push(dj);
            d_head.push(dh);
        }
        let mean_head_loss = head_loss.values().sum::<f64>() / n_groups;
        Self {
            objective: sufficiency_penalty(ctx.mean_loss(), &discrepancy, lambda) + mean_head_loss,
            head_of,
            d_joint,
            d_head,
        }
    }
}
