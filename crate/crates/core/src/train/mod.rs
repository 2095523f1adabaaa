//! Optimizers, the two training stages and cross-validated evaluation.

mod cv;
mod early;
mod evaluate;
mod gradsuite;
mod optim;
mod sampler;
mod stage1;
mod stage2;

pub use cv::{
    computational, derive_seed, inner_split, risk_scores, run_cross_validation, run_cross_validation_variants,
    select_patients, CvOutcome, Monitor, TrainConfig,
};
pub use early::EarlyStopping;
pub use evaluate::{
    evaluate_fold, median_threshold, Aggregate, Computational, EvalReport, FoldEvaluation, FoldReport, MeanStd,
    AUC_HORIZONS,
};
pub use gradsuite::{gradient_suite, GradReport, GRADCHECK_TOLERANCE};
pub use optim::{adam_step, adamw_step, AdamState};
pub use sampler::{event_stratified_batches, EpochBatches};
pub use stage1::{train_stage1, vae_eval_loss, vae_objective, Stage1Config, Stage1Result, VaeObjective};
pub use stage2::{fit_gene_scaler, fit_risk_model, prepare_inputs, train_stage2, LossMode, Stage2Config, Stage2Result};

use serde::{Deserialize, Serialize};

use crate::tensor::{Graph, Tensor, Var};

/// Loss trace entry; epoch 0 is the evaluation before any update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    /// Loss on the monitored set (validation, or training when there is none).
    pub val_loss: f64,
}

/// Gradients of `vars` in order; parameters the loss does not reach get zeros.
pub(crate) fn collect_grads(g: &Graph, vars: &[Var], params: &[Tensor]) -> Vec<Tensor> {
    vars.iter().zip(params).map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| p.map(|_| 0.0))).collect()
}
