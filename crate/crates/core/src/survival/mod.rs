//! Weighted Cox partial-likelihood loss and the classical proportional-hazards fitter.

mod cox_loss;
mod coxph;
mod hazard;

pub use cox_loss::{
    alg1_trace, cox_loss_node, event_weights, weighted_cox_loss, weighted_cox_loss_grad, weighted_cox_loss_with_grad,
    Alg1Trace, CoxMode,
};
pub use coxph::{fit_coxph, partial_log_likelihood, CoxModel};
pub use hazard::{
    hazard_table, render_hazard_comparison_csv, render_hazard_comparison_text, render_hazard_csv, render_hazard_text,
    univariate_and_multivariate, HazardRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One patient's observed follow-up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    /// Observed time in months.
    pub time: f64,
    /// `true` when death was observed, `false` when censored.
    pub event: bool,
    pub weight: f64,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool) -> Self {
        SurvivalRecord { time, event, weight: 1.0 }
    }

    pub fn weighted(time: f64, event: bool, weight: f64) -> Self {
        SurvivalRecord { time, event, weight }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time > 0.0 && self.time.is_finite()) {
            return Err(Error::Validation(format!("survival time must be positive, got {}", self.time)));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::Validation(format!("weight must be positive, got {}", self.weight)));
        }
        Ok(())
    }

    pub fn event_indicator(&self) -> f64 {
        if self.event {
            1.0
        } else {
            0.0
        }
    }
}

/// Predicted log hazard ratios aligned with their outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskBatch {
    pub risks: Vec<f64>,
    pub records: Vec<SurvivalRecord>,
}

impl RiskBatch {
    pub fn new(risks: Vec<f64>, records: Vec<SurvivalRecord>) -> Result<Self> {
        if risks.len() != records.len() {
            return Err(Error::shape("risk_batch", format!("{} risks for {} records", risks.len(), records.len())));
        }
        Ok(RiskBatch { risks, records })
    }

    pub fn from_parts(risks: &[f64], times: &[f64], events: &[bool], weights: &[f64]) -> Result<Self> {
        if times.len() != events.len() || times.len() != weights.len() {
            return Err(Error::shape("risk_batch", "times, events and weights differ in length"));
        }
        let records =
            times.iter().zip(events).zip(weights).map(|((&t, &e), &w)| SurvivalRecord::weighted(t, e, w)).collect();
        Self::new(risks.to_vec(), records)
    }

    pub fn len(&self) -> usize {
        self.risks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risks.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }
}
