use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;

/// Credit given to comparable pairs with equal predicted risk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Tied predictions count as discordant.
    #[default]
    Strict,
    HalfCredit,
}

/// Fraction of comparable pairs (yᵢ < yⱼ, δᵢ = 1) where the earlier failure has the
/// higher predicted risk.
pub fn concordance_index(risks: &[f64], records: &[SurvivalRecord], tie: TiePolicy) -> Result<f64> {
    if risks.len() != records.len() {
        return Err(Error::shape("concordance_index", "risks and records differ in length"));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].time.total_cmp(&records[b].time));

    let mut concordant = 0.0;
    let mut comparable = 0u64;
    for (pos, &i) in order.iter().enumerate() {
        if !records[i].event {
            continue;
        }
        let ti = records[i].time;
        for &j in order[pos + 1..].iter().filter(|&&j| records[j].time > ti) {
            comparable += 1;
            if risks[i] > risks[j] {
                concordant += 1.0;
            } else if risks[i] == risks[j] && tie == TiePolicy::HalfCredit {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::UndefinedMetric("no comparable pairs for the concordance index".into()));
    }
    Ok(concordant / comparable as f64)
}
