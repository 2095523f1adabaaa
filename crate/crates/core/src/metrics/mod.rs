//! Censored-data evaluation: concordance, time-dependent AUC, Kaplan–Meier,
//! log-rank, IPCW weights and risk grouping.

mod auc;
mod concordance;
mod groups;
mod km;

pub use auc::{
    censoring_weights_ipcw, time_dependent_auc, AucOptions, AucResult, AucWeighting, Ipcw, DEFAULT_IPCW_CAP,
};
pub use concordance::{concordance_index, TiePolicy};
pub use groups::{risk_groups, split_by_group, RiskGroup};
pub use km::{kaplan_meier, log_rank, KmCurve, LogRankResult};
