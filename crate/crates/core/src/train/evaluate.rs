//! Held-out evaluation of risk scores and cross-fold aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    concordance_index, kaplan_meier, log_rank, risk_groups, split_by_group, time_dependent_auc, AucOptions, KmCurve,
    LogRankResult, RiskGroup, TiePolicy,
};
use crate::survival::SurvivalRecord;

/// AUC horizons in months (5 and 10 years).
pub const AUC_HORIZONS: [f64; 2] = [60.0, 120.0];

/// Exact median; the mean of the middle two values for an even count.
pub fn median_threshold(risks: &[f64]) -> Result<f64> {
    if risks.is_empty() {
        return Err(Error::Validation("median of an empty risk list".into()));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numeric("risk scores must be finite".into()));
    }
    let mut s = risks.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub c_index: Option<f64>,
    pub auc_60: Option<f64>,
    pub auc_120: Option<f64>,
    pub mean_auc: Option<f64>,
    /// Median training risk used to split validation patients.
    pub theta_opt: f64,
    pub n_high: usize,
    pub n_low: usize,
    pub log_rank: Option<LogRankResult>,
    pub best_epoch: Option<usize>,
    pub stopped_epoch: Option<usize>,
    pub warnings: Vec<String>,
}

/// A fold's report plus the Kaplan–Meier curves of its risk groups.
#[derive(Clone, Debug)]
pub struct FoldEvaluation {
    pub report: FoldReport,
    pub km_high: KmCurve,
    pub km_low: KmCurve,
}

/// Scores validation risks: C-index, IPCW AUC at 60/120 months, and the log-rank
/// test between the groups split at the training median.
pub fn evaluate_fold(
    fold: usize,
    train_risks: &[f64],
    val_risks: &[f64],
    val_records: &[SurvivalRecord],
) -> Result<FoldEvaluation> {
    if val_risks.len() != val_records.len() {
        return Err(Error::shape("evaluate", format!("{} risks for {} records", val_risks.len(), val_records.len())));
    }
    let theta = median_threshold(train_risks)?;
    let mut warnings = Vec::new();
    let c_index = match concordance_index(val_risks, val_records, TiePolicy::HalfCredit) {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(format!("c_index: {e}"));
            None
        }
    };
    let (auc_60, auc_120, mean_auc) =
        match time_dependent_auc(val_risks, val_records, &AUC_HORIZONS, AucOptions::default()) {
            Ok(a) => {
                warnings.extend(a.warnings.iter().map(|w| format!("auc: {w}")));
                (a.auc_at[0], a.auc_at[1], a.mean_auc)
            }
            Err(e) => {
                warnings.push(format!("auc: {e}"));
                (None, None, None)
            }
        };
    let groups = risk_groups(val_risks, theta);
    let (high, low) = split_by_group(val_records, &groups);
    let log_rank = match log_rank(&high, &low) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("log_rank: {e}"));
            None
        }
    };
    let n_high = groups.iter().filter(|g| **g == RiskGroup::High).count();
    Ok(FoldEvaluation {
        report: FoldReport {
            fold,
            n_train: train_risks.len(),
            n_val: val_risks.len(),
            c_index,
            auc_60,
            auc_120,
            mean_auc,
            theta_opt: theta,
            n_high,
            n_low: groups.len() - n_high,
            log_rank,
            best_epoch: None,
            stopped_epoch: None,
            warnings,
        },
        km_high: kaplan_meier(&high),
        km_low: kaplan_meier(&low),
    })
}

/// Mean and sample standard deviation over the folds where a metric is defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Some(MeanStd { mean, std, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub c_index: Option<MeanStd>,
    pub auc_60: Option<MeanStd>,
    pub auc_120: Option<MeanStd>,
    pub mean_auc: Option<MeanStd>,
}

impl Aggregate {
    pub fn from_folds(folds: &[FoldReport]) -> Self {
        let agg = |f: fn(&FoldReport) -> Option<f64>| MeanStd::of(folds.iter().filter_map(f));
        Aggregate {
            c_index: agg(|r| r.c_index),
            auc_60: agg(|r| r.auc_60),
            auc_120: agg(|r| r.auc_120),
            mean_auc: agg(|r| r.mean_auc),
        }
    }
}

/// Size and cost of the trained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Computational {
    pub vae_parameters: usize,
    pub model_parameters: usize,
    pub parameter_count: usize,
    /// Bytes of the VAE plus model checkpoints.
    pub checkpoint_bytes: u64,
    /// Matmul FLOPs (2·m·k·n each) of one patient's forward pass.
    pub flops_estimate: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub folds: Vec<FoldReport>,
    pub aggregate: Aggregate,
    pub computational: Option<Computational>,
}

impl EvalReport {
    pub fn new(label: impl Into<String>, folds: Vec<FoldReport>, computational: Option<Computational>) -> Self {
        let aggregate = Aggregate::from_folds(&folds);
        EvalReport { label: label.into(), folds, aggregate, computational }
    }
}
