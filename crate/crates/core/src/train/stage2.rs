//! Stage 2: the fusion network trained with the weighted Cox loss on frozen
//! VAE latents (z = μ).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::early::EarlyStopping;
use super::optim::{adam_step, AdamState};
use super::sampler::event_stratified_batches;
use super::{collect_grads, EpochLog};
use crate::data::{GeneScaler, PatientBundle};
use crate::error::{Error, Result};
use crate::fusion::{predict, prepare_input, risk_graph, FusionConfig, ModelParams, PatientInput, VaeParams};
use crate::survival::{cox_loss_node, event_weights, weighted_cox_loss, CoxMode, RiskBatch, SurvivalRecord};
use crate::tensor::{Graph, Precision};

/// Whether event samples are up-weighted in the Cox loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    #[default]
    Weighted,
    Unweighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Weight of event samples in [`LossMode::Weighted`].
    pub w_event: f64,
    pub loss_mode: LossMode,
    pub cox_mode: CoxMode,
    pub min_events_per_batch: usize,
    /// Standardize genes with statistics of the training patients.
    pub standardize_genes: bool,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            lr: 1e-3,
            batch_size: 12,
            patience: 10,
            max_epochs: 100,
            w_event: 3.0,
            loss_mode: LossMode::Weighted,
            cox_mode: CoxMode::TimeSorted,
            min_events_per_batch: 2,
            standardize_genes: true,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("stage-2 learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("stage-2 batch size must be ≥ 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be ≥ 1".into()));
        }
        if !(self.w_event > 0.0 && self.w_event.is_finite()) {
            return Err(Error::Config(format!("event weight {} must be positive", self.w_event)));
        }
        Ok(())
    }

    /// Records carrying the loss weights of this configuration.
    pub fn weighted_records(&self, records: &[SurvivalRecord]) -> Vec<SurvivalRecord> {
        let w = match self.loss_mode {
            LossMode::Weighted => self.w_event,
            LossMode::Unweighted => 1.0,
        };
        let events: Vec<bool> = records.iter().map(|r| r.event).collect();
        records
            .iter()
            .zip(event_weights(&events, w))
            .map(|(r, wt)| SurvivalRecord::weighted(r.time, r.event, wt))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Stage2Result {
    /// Parameters with the lowest monitored loss seen (epoch 0 included).
    pub model: ModelParams,
    pub best_epoch: usize,
    /// Last epoch trained.
    pub stopped_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Batches that needed extra events drawn in.
    pub resampled_batches: usize,
}

/// Loss of the current model on a patient set, or `None` when it has no events.
fn monitored_loss(
    model: &ModelParams,
    cfg: &FusionConfig,
    inputs: &[PatientInput],
    records: &[SurvivalRecord],
    mode: CoxMode,
) -> Result<Option<f64>> {
    if !records.iter().any(|r| r.event) {
        return Ok(None);
    }
    let risks = inputs.iter().map(|x| predict(x, model, cfg)).collect::<Result<Vec<f64>>>()?;
    Ok(Some(weighted_cox_loss(&RiskBatch::new(risks, records.to_vec())?, mode)?))
}

/// Trains a freshly initialized fusion network on precomputed inputs.
///
/// Early stopping watches the validation loss, or the training loss when the
/// validation patients have no events.
#[allow(clippy::too_many_arguments)]
pub fn fit_risk_model(
    train_inputs: &[PatientInput],
    train_records: &[SurvivalRecord],
    val_inputs: &[PatientInput],
    val_records: &[SurvivalRecord],
    gene_scaler: Option<GeneScaler>,
    cfg: &FusionConfig,
    s2: &Stage2Config,
    precision: Precision,
    seed: u64,
) -> Result<Stage2Result> {
    cfg.validate()?;
    s2.validate()?;
    if train_inputs.len() != train_records.len() || val_inputs.len() != val_records.len() {
        return Err(Error::shape("train_stage2", "inputs and records differ in length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelParams::init(cfg, &mut rng);
    model.gene_scaler = gene_scaler;
    let train_w = s2.weighted_records(train_records);
    let val_w = s2.weighted_records(val_records);
    let use_val = val_w.iter().any(|r| r.event);
    let monitor = |m: &ModelParams| -> Result<f64> {
        let loss = if use_val {
            monitored_loss(m, cfg, val_inputs, &val_w, s2.cox_mode)?
        } else {
            monitored_loss(m, cfg, train_inputs, &train_w, s2.cox_mode)?
        };
        loss.ok_or_else(|| Error::UndefinedLoss("no events among the training patients".into()))
    };

    let initial = monitor(&model)?;
    let mut log = vec![EpochLog { epoch: 0, train_loss: None, val_loss: initial }];
    let mut stopper = EarlyStopping::new(s2.patience, initial);
    let mut best = model.clone();
    let mut state = AdamState::new(model.store.tensors());
    let events: Vec<bool> = train_records.iter().map(|r| r.event).collect();
    let mut resampled_batches = 0;
    let mut stopped_epoch = 0;
    for epoch in 1..=s2.max_epochs {
        let plan = event_stratified_batches(&events, s2.batch_size, s2.min_events_per_batch, &mut rng)?;
        if plan.resampled > 0 {
            log::warn!("stage 2 epoch {epoch}: {} batches short of events were resampled", plan.resampled);
        }
        resampled_batches += plan.resampled;
        let mut epoch_loss = 0.0;
        for (step, batch) in plan.batches.iter().enumerate() {
            let diverged =
                |e: Error| Error::Numeric(format!("stage 2 diverged at epoch {epoch}, step {}: {e}", step + 1));
            let mut g = Graph::with_precision(precision);
            let p = model.store.bind(&mut g, true);
            let mut risks = Vec::with_capacity(batch.len());
            for &i in batch {
                let vars = train_inputs[i].bind(&mut g)?;
                risks.push(risk_graph(&mut g, cfg, &p, &vars).map_err(diverged)?.risk);
            }
            let r = g.concat_rows(&risks)?;
            let recs: Vec<SurvivalRecord> = batch.iter().map(|&i| train_w[i]).collect();
            let loss = cox_loss_node(&mut g, r, &recs, s2.cox_mode).map_err(diverged)?;
            g.backward(loss).map_err(diverged)?;
            let grads = collect_grads(&g, p.vars(), model.store.tensors());
            epoch_loss += g.value(loss).item();
            adam_step(model.store.tensors_mut(), &grads, &mut state, s2.lr)?;
            if !model.store.all_finite() {
                return Err(diverged(Error::NonFinite { op: "adam_step" }));
            }
        }
        let monitored = monitor(&model)?;
        let train_loss = epoch_loss / plan.batches.len() as f64;
        log::info!("stage 2 epoch {epoch}: train {train_loss:.6}, monitor {monitored:.6}");
        log.push(EpochLog { epoch, train_loss: Some(train_loss), val_loss: monitored });
        stopped_epoch = epoch;
        if stopper.observe(epoch, monitored) {
            best = model.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok(Stage2Result { model: best, best_epoch: stopper.best_epoch(), stopped_epoch, log, resampled_batches })
}

/// Gene scaler fitted on `train` when standardization is enabled.
pub fn fit_gene_scaler(train: &[PatientBundle], s2: &Stage2Config) -> Result<Option<GeneScaler>> {
    if s2.standardize_genes {
        Ok(Some(GeneScaler::fit(train.iter().map(|p| p.genes.as_slice()))?))
    } else {
        Ok(None)
    }
}

pub fn prepare_inputs(
    patients: &[PatientBundle],
    vae: &VaeParams,
    scaler: Option<&GeneScaler>,
    cfg: &FusionConfig,
) -> Result<Vec<PatientInput>> {
    patients.iter().map(|p| prepare_input(p, vae, scaler, cfg)).collect()
}

/// Fits the gene scaler on `train`, encodes every patient with the frozen VAE and
/// trains the fusion network.
pub fn train_stage2(
    train: &[PatientBundle],
    val: &[PatientBundle],
    vae: &VaeParams,
    cfg: &FusionConfig,
    s2: &Stage2Config,
    precision: Precision,
    seed: u64,
) -> Result<Stage2Result> {
    if train.is_empty() {
        return Err(Error::Validation("stage 2 needs at least one training patient".into()));
    }
    let scaler = fit_gene_scaler(train, s2)?;
    let train_inputs = prepare_inputs(train, vae, scaler.as_ref(), cfg)?;
    let val_inputs = prepare_inputs(val, vae, scaler.as_ref(), cfg)?;
    let train_records: Vec<SurvivalRecord> = train.iter().map(|p| p.record).collect();
    let val_records: Vec<SurvivalRecord> = val.iter().map(|p| p.record).collect();
    fit_risk_model(&train_inputs, &train_records, &val_inputs, &val_records, scaler, cfg, s2, precision, seed)
}
