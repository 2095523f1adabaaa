//! Stage 1: the patch-level VAE.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adamw_step, AdamState};
use super::{collect_grads, EpochLog};
use crate::data::PatientBundle;
use crate::error::{Error, Result};
use crate::fusion::vae::{reparameterize, vae_decode, vae_encode, vae_loss, Encoding};
use crate::fusion::{FusionConfig, VaeParams};
use crate::tensor::{Graph, Precision, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub lr: f64,
    /// Patients per batch; every patch of those patients enters the batch.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub weight_decay: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config { lr: 1e-4, batch_size: 12, max_epochs: 50, weight_decay: 1e-2 }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("stage-1 learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("stage-1 batch size must be ≥ 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("stage-1 weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Stage1Result {
    /// Parameters with the lowest monitored loss seen (epoch 0 included).
    pub vae: VaeParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

fn stack_patches(patients: &[&PatientBundle]) -> Result<Tensor> {
    let parts: Vec<&Tensor> = patients.iter().map(|p| &p.patch_features).collect();
    Tensor::vstack(&parts)
}

/// A VAE loss recorded on a graph.
pub struct VaeObjective {
    pub loss: f64,
    /// Parameter handles in store order.
    pub vars: Vec<Var>,
    pub root: Var,
}

/// Objective on `x` with a given ε; ε = `None` evaluates at z = μ.
pub fn vae_objective(
    g: &mut Graph,
    vae: &VaeParams,
    x: &Tensor,
    eps: Option<&Tensor>,
    beta: f64,
    trainable: bool,
) -> Result<VaeObjective> {
    let p = vae.store.bind(g, trainable);
    let xv = g.constant(x.clone());
    let enc: Encoding = vae_encode(g, &p, xv)?;
    let z = match eps {
        Some(e) => {
            let ev = g.constant(e.clone());
            reparameterize(g, enc.mu, enc.sigma, ev)?
        }
        None => enc.mu,
    };
    let x_hat = vae_decode(g, &p, z)?;
    let loss = vae_loss(g, xv, x_hat, &enc, beta)?;
    Ok(VaeObjective { loss: g.value(loss).item(), vars: p.vars().to_vec(), root: loss })
}

/// Deterministic (z = μ) loss over a patient set, averaged per patch row.
pub fn vae_eval_loss(vae: &VaeParams, patients: &[&PatientBundle], beta: f64, batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut rows = 0usize;
    for chunk in patients.chunks(batch_size.max(1)) {
        let x = stack_patches(chunk)?;
        let mut g = Graph::new();
        let loss = vae_objective(&mut g, vae, &x, None, beta, false)?.loss;
        total += loss * x.rows() as f64;
        rows += x.rows();
    }
    Ok(total / rows as f64)
}

/// Trains the VAE with AdamW; ε is drawn from the seeded generator for every batch.
/// The monitored loss is the validation loss, or the training loss when `val` is empty.
pub fn train_stage1(
    train: &[PatientBundle],
    val: &[PatientBundle],
    cfg: &FusionConfig,
    s1: &Stage1Config,
    precision: Precision,
    seed: u64,
) -> Result<Stage1Result> {
    cfg.validate()?;
    s1.validate()?;
    if train.is_empty() {
        return Err(Error::Validation("stage 1 needs at least one training patient".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vae = VaeParams::init(cfg, &mut rng);
    let train_refs: Vec<&PatientBundle> = train.iter().collect();
    let val_refs: Vec<&PatientBundle> = val.iter().collect();
    let monitor = |vae: &VaeParams| -> Result<f64> {
        let set = if val_refs.is_empty() { &train_refs } else { &val_refs };
        vae_eval_loss(vae, set, cfg.vae_beta, s1.batch_size)
    };

    let initial = monitor(&vae)?;
    let mut log = vec![EpochLog { epoch: 0, train_loss: None, val_loss: initial }];
    let (mut best, mut best_epoch, mut best_vae) = (initial, 0, vae.clone());
    let mut state = AdamState::new(vae.store.tensors());
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=s1.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_rows = 0usize;
        for (step, chunk) in order.chunks(s1.batch_size).enumerate() {
            let batch: Vec<&PatientBundle> = chunk.iter().map(|&i| &train[i]).collect();
            let x = stack_patches(&batch)?;
            let eps = Tensor::matrix(
                x.rows(),
                cfg.latent_dim,
                (0..x.rows() * cfg.latent_dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect(),
            )?;
            let diverged = |detail: String| {
                Error::Numeric(format!("stage 1 diverged at epoch {epoch}, step {}: {detail}", step + 1))
            };
            let mut g = Graph::with_precision(precision);
            let VaeObjective { loss, vars, root } =
                vae_objective(&mut g, &vae, &x, Some(&eps), cfg.vae_beta, true).map_err(|e| diverged(e.to_string()))?;
            if !loss.is_finite() {
                return Err(diverged(format!("loss {loss}")));
            }
            g.backward(root).map_err(|e| diverged(e.to_string()))?;
            let grads = collect_grads(&g, &vars, vae.store.tensors());
            adamw_step(vae.store.tensors_mut(), &grads, &mut state, s1.lr, s1.weight_decay)?;
            if !vae.store.all_finite() {
                return Err(diverged("non-finite parameters".into()));
            }
            epoch_loss += loss * x.rows() as f64;
            epoch_rows += x.rows();
        }
        let val_loss = monitor(&vae)?;
        log::info!("stage 1 epoch {epoch}: train {:.6}, monitor {val_loss:.6}", epoch_loss / epoch_rows as f64);
        log.push(EpochLog { epoch, train_loss: Some(epoch_loss / epoch_rows as f64), val_loss });
        if val_loss < best {
            best = val_loss;
            best_epoch = epoch;
            best_vae = vae.clone();
        }
    }
    Ok(Stage1Result { vae: best_vae, best_epoch, log })
}
