use serde::{Deserialize, Serialize};

use crate::survival::SurvivalRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskGroup {
    High,
    Low,
}

/// High when risk > θ, otherwise low (a risk exactly at θ is low).
pub fn risk_groups(risks: &[f64], theta: f64) -> Vec<RiskGroup> {
    risks.iter().map(|&r| if r > theta { RiskGroup::High } else { RiskGroup::Low }).collect()
}

/// (high, low) record subsets.
pub fn split_by_group(records: &[SurvivalRecord], groups: &[RiskGroup]) -> (Vec<SurvivalRecord>, Vec<SurvivalRecord>) {
    let mut high = Vec::new();
    let mut low = Vec::new();
    for (r, g) in records.iter().zip(groups) {
        match g {
            RiskGroup::High => high.push(*r),
            RiskGroup::Low => low.push(*r),
        }
    }
    (high, low)
}
