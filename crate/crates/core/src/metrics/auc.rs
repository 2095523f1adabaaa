use serde::{Deserialize, Serialize};

use super::km::kaplan_meier;
use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;

pub const DEFAULT_IPCW_CAP: f64 = 20.0;

/// Inverse-probability-of-censoring weights ωᵢ = 1/Ĝ(yᵢ⁻).
#[derive(Clone, Debug, PartialEq)]
pub struct Ipcw {
    pub weights: Vec<f64>,
    /// indices whose weight hit the cap
    pub capped: Vec<usize>,
}

/// Ĝ is the Kaplan–Meier curve of the censoring distribution (event indicators swapped).
pub fn censoring_weights_ipcw(records: &[SurvivalRecord], cap: f64) -> Result<Ipcw> {
    if records.is_empty() {
        return Err(Error::Validation("IPCW weights need at least one record".into()));
    }
    if !(cap >= 1.0) {
        return Err(Error::Config(format!("IPCW cap must be ≥ 1, got {cap}")));
    }
    let swapped: Vec<SurvivalRecord> = records.iter().map(|r| SurvivalRecord { event: !r.event, ..*r }).collect();
    let g = kaplan_meier(&swapped);
    let mut capped = Vec::new();
    let weights = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let gi = g.survival_before(r.time);
            if gi <= 0.0 || 1.0 / gi > cap {
                capped.push(i);
                cap
            } else {
                1.0 / gi
            }
        })
        .collect();
    if !capped.is_empty() {
        log::warn!("{} IPCW weights capped at {cap}", capped.len());
    }
    Ok(Ipcw { weights, capped })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AucWeighting {
    /// ωᵢ = δᵢ
    Uniform,
    /// ωᵢ = δᵢ / Ĝ(yᵢ⁻), capped
    Ipcw { cap: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucOptions {
    pub weighting: AucWeighting,
    /// Use f(xⱼ) < f(xᵢ) instead of the non-strict comparison.
    pub strict: bool,
}

impl Default for AucOptions {
    fn default() -> Self {
        AucOptions { weighting: AucWeighting::Ipcw { cap: DEFAULT_IPCW_CAP }, strict: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub horizons: Vec<f64>,
    /// `None` where the horizon has no cases or no controls.
    pub auc_at: Vec<Option<f64>>,
    /// Mean over the defined horizons.
    pub mean_auc: Option<f64>,
    pub weights_used: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Cumulative/dynamic AUC(t): cases fail by t (yᵢ ≤ t, δᵢ = 1), controls survive past t.
pub fn time_dependent_auc(
    risks: &[f64],
    records: &[SurvivalRecord],
    horizons: &[f64],
    opts: AucOptions,
) -> Result<AucResult> {
    if risks.len() != records.len() {
        return Err(Error::shape("time_dependent_auc", "risks and records differ in length"));
    }
    let weights: Vec<f64> = match opts.weighting {
        AucWeighting::Uniform => records.iter().map(|r| r.event_indicator()).collect(),
        AucWeighting::Ipcw { cap } => {
            let ipcw = censoring_weights_ipcw(records, cap)?;
            records.iter().zip(ipcw.weights).map(|(r, w)| r.event_indicator() * w).collect()
        }
    };
    let mut warnings = Vec::new();
    if risks.windows(2).all(|w| w[0] == w[1]) && !opts.strict {
        warnings.push("constant predictions score 1.0 under the non-strict comparison".to_string());
    }

    let mut auc_at = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let case_weight: f64 = records.iter().zip(&weights).filter(|(r, _)| r.time <= t).map(|(_, w)| w).sum();
        let n_controls = records.iter().filter(|r| r.time > t).count();
        if case_weight <= 0.0 || n_controls == 0 {
            warnings.push(format!("AUC undefined at t={t}: {} cases weight, {n_controls} controls", case_weight));
            auc_at.push(None);
            continue;
        }
        let mut num = 0.0;
        for (i, ri) in records.iter().enumerate() {
            if ri.time > t || weights[i] == 0.0 {
                continue;
            }
            let hits = records
                .iter()
                .zip(risks)
                .filter(|(rj, &fj)| rj.time > t && if opts.strict { fj < risks[i] } else { fj <= risks[i] })
                .count();
            num += weights[i] * hits as f64;
        }
        auc_at.push(Some(num / (case_weight * n_controls as f64)));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let defined: Vec<f64> = auc_at.iter().flatten().copied().collect();
    let mean_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(AucResult { horizons: horizons.to_vec(), auc_at, mean_auc, weights_used: weights, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(t: &[f64], e: &[bool]) -> Vec<SurvivalRecord> {
        t.iter().zip(e).map(|(&t, &e)| SurvivalRecord::new(t, e)).collect()
    }

    const UNIFORM: AucOptions = AucOptions { weighting: AucWeighting::Uniform, strict: false };

    #[test]
    fn no_censoring_gives_unit_weights() {
        let w = censoring_weights_ipcw(&recs(&[1.0, 2.0, 3.0], &[true; 3]), 20.0).unwrap();
        assert_eq!(w.weights, vec![1.0; 3]);
        assert!(w.capped.is_empty());
    }

    #[test]
    fn mixed_cohort_matches_hand_product_limit() {
        // censoring KM drops to 4/5 after t=2 and to 8/15 after t=4
        let r = recs(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[true, false, true, false, true, true]);
        let w = censoring_weights_ipcw(&r, 20.0).unwrap().weights;
        let expected = [1.0, 1.0, 1.25, 1.25, 15.0 / 8.0, 15.0 / 8.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{w:?}");
        }
    }

    #[test]
    fn all_censored_weights_hit_cap() {
        let r = recs(&[1.0, 2.0, 3.0], &[false; 3]);
        let w = censoring_weights_ipcw(&r, 20.0).unwrap();
        for (a, b) in w.weights.iter().zip([1.0, 1.5, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        let r = recs(&[1.0, 2.0], &[false, false]);
        let w = censoring_weights_ipcw(&r, 1.5).unwrap();
        assert_eq!(w.capped, vec![1]);
        assert_eq!(w.weights, vec![1.0, 1.5]);
    }

    #[test]
    fn perfect_separation_scores_one() {
        let r = recs(&[10.0, 20.0, 70.0, 90.0, 130.0, 150.0], &[true, true, true, false, true, false]);
        let risks = [6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let res = time_dependent_auc(&risks, &r, &[60.0, 120.0], UNIFORM).unwrap();
        assert_eq!(res.auc_at, vec![Some(1.0), Some(1.0)]);
        assert_eq!(res.mean_auc, Some(1.0));
    }

    #[test]
    fn constant_risk_is_one_under_non_strict() {
        let r = recs(&[10.0, 20.0, 70.0, 90.0], &[true, true, true, false]);
        let res = time_dependent_auc(&[0.3; 4], &r, &[60.0], UNIFORM).unwrap();
        assert_eq!(res.auc_at, vec![Some(1.0)]);
        assert!(!res.warnings.is_empty());
        let strict = time_dependent_auc(&[0.3; 4], &r, &[60.0], AucOptions { strict: true, ..UNIFORM }).unwrap();
        assert_eq!(strict.auc_at, vec![Some(0.0)]);
    }

    #[test]
    fn undefined_horizon_is_excluded_from_mean() {
        let r = recs(&[10.0, 20.0, 70.0], &[true, true, false]);
        let res = time_dependent_auc(&[2.0, 1.0, 0.0], &r, &[60.0, 120.0], UNIFORM).unwrap();
        assert_eq!(res.auc_at, vec![Some(1.0), None]);
        assert_eq!(res.mean_auc, Some(1.0));
    }
}
