//! The two-stage pipeline per fold and k-fold cross-validation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_fold, Computational, EvalReport, FoldEvaluation};
use super::stage1::{train_stage1, Stage1Config};
use super::stage2::{fit_gene_scaler, fit_risk_model, prepare_inputs, Stage2Config};
use crate::data::{make_folds, FoldSplit, PatientBundle};
use crate::error::{Error, Result};
use crate::fusion::{encode_checkpoint, forward_flops, predict, FusionConfig, Modalities, ModelParams, VaeParams};
use crate::survival::SurvivalRecord;
use crate::tensor::Precision;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub seed: u64,
    pub precision: Precision,
    /// Which loss early stopping and checkpoint selection watch.
    pub monitor: Monitor,
    /// Parts the training patients are split into for [`Monitor::InnerSplit`];
    /// one part is held back.
    pub inner_val_folds: usize,
}

/// Patient set whose loss drives early stopping and best-checkpoint selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// The training loss over all training patients; no held-back data.
    #[default]
    Training,
    /// A stratified part of the training patients, held back from fitting.
    InnerSplit,
    /// The fold's validation patients, which are also the evaluation set.
    ValidationFold,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            seed: 0,
            precision: Precision::F64,
            monitor: Monitor::Training,
            inner_val_folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()
    }
}

/// Independent, reproducible seed for one named stream of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // SplitMix64 finalizer over the combined input.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits training patients into a fitting part and an early-stopping part.
pub fn inner_split(
    patients: &[PatientBundle],
    k: usize,
    seed: u64,
) -> Result<(Vec<PatientBundle>, Vec<PatientBundle>)> {
    let n_events = patients.iter().filter(|p| p.record.event).count();
    if k < 2 || patients.len() < k || n_events < k {
        return Ok((patients.to_vec(), Vec::new()));
    }
    let ids: Vec<String> = patients.iter().map(|p| p.id.clone()).collect();
    let records: Vec<SurvivalRecord> = patients.iter().map(|p| p.record).collect();
    let split = make_folds(&ids, &records, k, seed)?.swap_remove(0);
    let val: std::collections::HashSet<&str> = split.val.iter().map(String::as_str).collect();
    Ok(patients.iter().cloned().partition(|p| !val.contains(p.id.as_str())))
}

/// Patients of `cohort` named by `ids`, in `ids` order.
pub fn select_patients(cohort: &[PatientBundle], ids: &[String]) -> Result<Vec<PatientBundle>> {
    let index: HashMap<&str, usize> = cohort.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    ids.iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| cohort[i].clone())
                .ok_or_else(|| Error::Validation(format!("fold refers to unknown patient '{id}'")))
        })
        .collect()
}

/// Risk scores with z = μ.
pub fn risk_scores(
    patients: &[PatientBundle],
    vae: &VaeParams,
    model: &ModelParams,
    cfg: &FusionConfig,
) -> Result<Vec<f64>> {
    let inputs = prepare_inputs(patients, vae, model.gene_scaler.as_ref(), cfg)?;
    inputs.iter().map(|x| predict(x, model, cfg)).collect()
}

pub fn computational(cfg: &FusionConfig, vae: &VaeParams, model: &ModelParams) -> Result<Computational> {
    let vae_bytes = encode_checkpoint(&vae.to_checkpoint(cfg))?.len() as u64;
    let model_bytes = encode_checkpoint(&model.to_checkpoint(cfg))?.len() as u64;
    let (v, m) = (vae.store.n_scalars(), model.store.n_scalars());
    Ok(Computational {
        vae_parameters: v,
        model_parameters: m,
        parameter_count: v + m,
        checkpoint_bytes: vae_bytes + model_bytes,
        flops_estimate: forward_flops(cfg, vae, model)?,
    })
}

/// Result of cross-validating one modality configuration.
#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub report: EvalReport,
    pub evaluations: Vec<FoldEvaluation>,
    /// Validation (id, risk) pairs per fold.
    pub val_risks: Vec<Vec<(String, f64)>>,
}

/// Trains and evaluates `cfg` on every fold.
pub fn run_cross_validation(
    cohort: &[PatientBundle],
    folds: &[FoldSplit],
    cfg: &FusionConfig,
    tc: &TrainConfig,
) -> Result<CvOutcome> {
    let mut out = run_cross_validation_variants(cohort, folds, cfg, tc, &[cfg.modalities])?;
    Ok(out.swap_remove(0))
}

/// Cross-validates several modality subsets. Within a fold every variant shares
/// the same stage-1 VAE, inner split and stage-2 seed, so runs are paired.
pub fn run_cross_validation_variants(
    cohort: &[PatientBundle],
    folds: &[FoldSplit],
    cfg: &FusionConfig,
    tc: &TrainConfig,
    variants: &[Modalities],
) -> Result<Vec<CvOutcome>> {
    cfg.validate()?;
    tc.validate()?;
    let variant_cfgs: Vec<FusionConfig> =
        variants.iter().map(|&m| FusionConfig { modalities: m, ..cfg.clone() }).collect();
    for c in &variant_cfgs {
        c.validate()?;
    }
    let mut outcomes: Vec<CvOutcome> = variant_cfgs
        .iter()
        .map(|c| CvOutcome {
            report: EvalReport::new(c.modalities.label(), Vec::new(), None),
            evaluations: Vec::new(),
            val_risks: Vec::new(),
        })
        .collect();
    let mut computational_stats: Vec<Option<Computational>> = vec![None; variants.len()];

    for split in folds {
        let stream = split.fold as u64 * 16;
        let train = select_patients(cohort, &split.train)?;
        let val = select_patients(cohort, &split.val)?;
        let (fit, early) = match tc.monitor {
            Monitor::Training => (train.clone(), Vec::new()),
            Monitor::InnerSplit => inner_split(&train, tc.inner_val_folds, derive_seed(tc.seed, stream + 1))?,
            Monitor::ValidationFold => (train.clone(), val.clone()),
        };
        log::info!(
            "fold {}: {} fitting, {} early-stopping, {} validation patients",
            split.fold,
            fit.len(),
            early.len(),
            val.len()
        );

        let s1 = train_stage1(&fit, &early, cfg, &tc.stage1, tc.precision, derive_seed(tc.seed, stream + 2))?;
        let scaler = fit_gene_scaler(&train, &tc.stage2)?;
        let fit_records: Vec<SurvivalRecord> = fit.iter().map(|p| p.record).collect();
        let early_records: Vec<SurvivalRecord> = early.iter().map(|p| p.record).collect();
        let val_records: Vec<SurvivalRecord> = val.iter().map(|p| p.record).collect();

        for (v, vcfg) in variant_cfgs.iter().enumerate() {
            let fit_inputs = prepare_inputs(&fit, &s1.vae, scaler.as_ref(), vcfg)?;
            let early_inputs = prepare_inputs(&early, &s1.vae, scaler.as_ref(), vcfg)?;
            let s2 = fit_risk_model(
                &fit_inputs,
                &fit_records,
                &early_inputs,
                &early_records,
                scaler.clone(),
                vcfg,
                &tc.stage2,
                tc.precision,
                derive_seed(tc.seed, stream + 3),
            )?;
            let train_risks = risk_scores(&train, &s1.vae, &s2.model, vcfg)?;
            let val_risks = risk_scores(&val, &s1.vae, &s2.model, vcfg)?;
            let mut eval = evaluate_fold(split.fold, &train_risks, &val_risks, &val_records)?;
            eval.report.best_epoch = Some(s2.best_epoch);
            eval.report.stopped_epoch = Some(s2.stopped_epoch);
            log::info!("fold {} [{}]: C-index {:?}", split.fold, vcfg.modalities.label(), eval.report.c_index);
            if computational_stats[v].is_none() {
                computational_stats[v] = Some(computational(vcfg, &s1.vae, &s2.model)?);
            }
            let o = &mut outcomes[v];
            o.report.folds.push(eval.report.clone());
            o.evaluations.push(eval);
            o.val_risks.push(val.iter().map(|p| p.id.clone()).zip(val_risks).collect());
        }
    }
    for (o, comp) in outcomes.iter_mut().zip(computational_stats) {
        o.report = EvalReport::new(o.report.label.clone(), std::mem::take(&mut o.report.folds), comp);
    }
    Ok(outcomes)
}
