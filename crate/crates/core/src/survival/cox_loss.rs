use serde::{Deserialize, Serialize};

use super::{RiskBatch, SurvivalRecord};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// How the cumulative hazard's risk sets are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoxMode {
    /// Risk set of sample i is every sample with t_j ≥ t_i (Breslow ties).
    #[default]
    TimeSorted,
    /// Samples ordered by descending predicted risk; the cumulative sum runs over
    /// that order and observed times are ignored.
    VerbatimAlg1,
}

/// `w_event` on event samples, 1 on censored ones.
pub fn event_weights(events: &[bool], w_event: f64) -> Vec<f64> {
    events.iter().map(|&e| if e { w_event } else { 1.0 }).collect()
}

/// Sorted layout shared by the loss and its gradient.
struct Layout {
    order: Vec<usize>,
    /// last sorted position belonging to the risk set of position p
    end: Vec<usize>,
    /// first sorted position whose risk set contains position p
    start: Vec<usize>,
}

fn layout(batch: &RiskBatch, mode: CoxMode) -> Layout {
    let n = batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    match mode {
        CoxMode::TimeSorted => {
            order.sort_by(|&a, &b| batch.records[b].time.total_cmp(&batch.records[a].time));
            let mut end = vec![0; n];
            let mut start = vec![0; n];
            let mut p = 0;
            while p < n {
                let t = batch.records[order[p]].time;
                let mut q = p;
                while q + 1 < n && batch.records[order[q + 1]].time == t {
                    q += 1;
                }
                for k in p..=q {
                    start[k] = p;
                    end[k] = q;
                }
                p = q + 1;
            }
            Layout { order, end, start }
        }
        CoxMode::VerbatimAlg1 => {
            order.sort_by(|&a, &b| batch.risks[b].total_cmp(&batch.risks[a]));
            Layout { order, end: (0..n).collect(), start: (0..n).collect() }
        }
    }
}

fn validate(batch: &RiskBatch) -> Result<f64> {
    if batch.risks.len() != batch.records.len() {
        return Err(Error::shape("weighted_cox_loss", "risks and records differ in length"));
    }
    if let Some(i) = batch.risks.iter().position(|r| !r.is_finite()) {
        return Err(Error::Numeric(format!("risk {i} is not finite")));
    }
    let total: f64 = batch.records.iter().map(|r| r.weight * r.event_indicator()).sum();
    if batch.n_events() == 0 || total <= 0.0 {
        return Err(Error::UndefinedLoss("batch contains no events".into()));
    }
    Ok(total)
}

/// L = −(1/Σ wᵢeᵢ) Σ wᵢeᵢ (rᵢ − log H_wᵢ), H_wᵢ = Σ_{j ∈ Rᵢ} wⱼ exp(rⱼ).
pub fn weighted_cox_loss(batch: &RiskBatch, mode: CoxMode) -> Result<f64> {
    weighted_cox_loss_with_grad(batch, mode).map(|(l, _)| l)
}

/// ∂L/∂rᵢ in the original sample order.
pub fn weighted_cox_loss_grad(batch: &RiskBatch, mode: CoxMode) -> Result<Vec<f64>> {
    weighted_cox_loss_with_grad(batch, mode).map(|(_, g)| g)
}

pub fn weighted_cox_loss_with_grad(batch: &RiskBatch, mode: CoxMode) -> Result<(f64, Vec<f64>)> {
    let total = validate(batch)?;
    let n = batch.len();
    let Layout { order, end, start } = layout(batch, mode);

    let r: Vec<f64> = order.iter().map(|&i| batch.risks[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| batch.records[i].weight).collect();
    let a: Vec<f64> = order.iter().map(|&i| batch.records[i].weight * batch.records[i].event_indicator()).collect();

    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = r.iter().zip(&w).map(|(ri, wi)| wi * (ri - max).exp()).collect();
    let mut cum = vec![0.0; n];
    let mut acc = 0.0;
    for p in 0..n {
        acc += scaled[p];
        cum[p] = acc;
    }

    let mut loss = 0.0;
    for p in 0..n {
        if a[p] != 0.0 {
            let log_h = max + cum[end[p]].ln();
            loss += a[p] * (r[p] - log_h);
        }
    }
    loss = -loss / total;
    if !loss.is_finite() {
        return Err(Error::Numeric("weighted Cox loss is not finite".into()));
    }

    // tail[p] = Σ_{p' ≥ p} a_{p'} / cum[end(p')]
    let mut tail = vec![0.0; n + 1];
    for p in (0..n).rev() {
        let term = if a[p] != 0.0 { a[p] / cum[end[p]] } else { 0.0 };
        tail[p] = tail[p + 1] + term;
    }
    let mut grad = vec![0.0; n];
    for q in 0..n {
        let g = -(a[q] - scaled[q] * tail[start[q]]) / total;
        grad[order[q]] = g;
    }
    Ok((loss, grad))
}

/// Every intermediate of the risk-ordered procedure, in sorted order.
#[derive(Clone, Debug, PartialEq)]
pub struct Alg1Trace {
    pub total_weighted_events: f64,
    /// original indices in descending-risk order
    pub order: Vec<usize>,
    pub risks: Vec<f64>,
    pub events: Vec<f64>,
    pub weights: Vec<f64>,
    pub hazard: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    pub masked: Vec<f64>,
    pub loss: f64,
}

/// Step-by-step evaluation of the risk-ordered weighted Cox loss without
/// log-sum-exp stabilization.
pub fn alg1_trace(batch: &RiskBatch) -> Result<Alg1Trace> {
    let total = validate(batch)?;
    let Layout { order, .. } = layout(batch, CoxMode::VerbatimAlg1);
    let risks: Vec<f64> = order.iter().map(|&i| batch.risks[i]).collect();
    let events: Vec<f64> = order.iter().map(|&i| batch.records[i].event_indicator()).collect();
    let weights: Vec<f64> = order.iter().map(|&i| batch.records[i].weight).collect();
    let hazard: Vec<f64> = risks.iter().map(|r| r.exp()).collect();
    let mut cumulative_hazard = Vec::with_capacity(risks.len());
    let mut h = 0.0;
    for (wi, hi) in weights.iter().zip(&hazard) {
        h += wi * hi;
        cumulative_hazard.push(h);
    }
    let log_likelihood: Vec<f64> =
        weights.iter().zip(&risks).zip(&cumulative_hazard).map(|((wi, ri), hi)| wi * (ri - hi.ln())).collect();
    let masked: Vec<f64> = log_likelihood.iter().zip(&events).map(|(u, e)| u * e).collect();
    let loss = -masked.iter().sum::<f64>() / total;
    if !loss.is_finite() {
        return Err(Error::Numeric("hazard overflow in unstabilized trace".into()));
    }
    Ok(Alg1Trace {
        total_weighted_events: total,
        order,
        risks,
        events,
        weights,
        hazard,
        cumulative_hazard,
        log_likelihood,
        masked,
        loss,
    })
}

/// Records the loss on a graph; `risks` must be `n×1` or `1×n`.
pub fn cox_loss_node(graph: &mut Graph, risks: Var, records: &[SurvivalRecord], mode: CoxMode) -> Result<Var> {
    let value = graph.value(risks);
    if value.len() != records.len() {
        return Err(Error::shape("cox_loss", format!("{} risks for {} records", value.len(), records.len())));
    }
    let batch = RiskBatch::new(value.data().to_vec(), records.to_vec())?;
    let (loss, grad) = weighted_cox_loss_with_grad(&batch, mode)?;
    let grad = Tensor::new(value.shape().to_vec(), grad)?;
    graph.scalar_fn(risks, loss, grad, "weighted_cox_loss")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(r: &[f64], t: &[f64], e: &[bool], w: &[f64]) -> RiskBatch {
        RiskBatch::from_parts(r, t, e, w).unwrap()
    }

    /// Builds each risk set explicitly and evaluates the weighted loss term by term.
    fn enumeration_oracle(b: &RiskBatch) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, ri) in b.records.iter().enumerate() {
            if !ri.event {
                continue;
            }
            let h: f64 = b
                .records
                .iter()
                .zip(&b.risks)
                .filter(|(rj, _)| rj.time >= ri.time)
                .map(|(rj, r)| rj.weight * r.exp())
                .sum();
            num += ri.weight * (b.risks[i] - h.ln());
            den += ri.weight;
        }
        -num / den
    }

    #[test]
    fn event_weight_examples() {
        assert_eq!(event_weights(&[true, false, false, true], 3.0), vec![3.0, 1.0, 1.0, 3.0]);
        assert_eq!(event_weights(&[true, false], 1.0), vec![1.0, 1.0]);
        assert_eq!(event_weights(&[false, false], 3.0), vec![1.0, 1.0]);
    }

    #[test]
    fn single_event_sample_has_zero_loss_and_gradient() {
        let b = batch(&[0.0], &[5.0], &[true], &[1.0]);
        for mode in [CoxMode::TimeSorted, CoxMode::VerbatimAlg1] {
            let (l, g) = weighted_cox_loss_with_grad(&b, mode).unwrap();
            assert_eq!(l, 0.0);
            assert_eq!(g, vec![0.0]);
        }
        let b = batch(&[2.7], &[5.0], &[true], &[1.0]);
        let g = weighted_cox_loss_grad(&b, CoxMode::TimeSorted).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn three_sample_example_matches_enumeration() {
        let b = batch(&[0.5, -0.2, 0.1], &[3.0, 2.0, 1.0], &[true, true, false], &[3.0, 3.0, 1.0]);
        let l = weighted_cox_loss(&b, CoxMode::TimeSorted).unwrap();
        let expected = enumeration_oracle(&b);
        assert!((l - expected).abs() < 1e-14, "{l} vs {expected}");
        // risk sets {0} and {0, 1}: −(3(0.5 − ln 3e^0.5) + 3(−0.2 − ln(3e^0.5 + 3e^−0.2))) / 6
        let frozen = -(3.0 * (0.5 - (3.0 * 0.5f64.exp()).ln())
            + 3.0 * (-0.2 - (3.0 * 0.5f64.exp() + 3.0 * (-0.2f64).exp()).ln()))
            / 6.0;
        assert!((l - frozen).abs() < 1e-14);
    }

    #[test]
    fn tied_times_share_risk_set() {
        let b = batch(&[0.3, -0.4, 1.1, 0.0], &[2.0, 2.0, 2.0, 5.0], &[true, true, false, true], &[1.0; 4]);
        let l = weighted_cox_loss(&b, CoxMode::TimeSorted).unwrap();
        assert!((l - enumeration_oracle(&b)).abs() < 1e-14);
    }

    #[test]
    fn zero_events_is_undefined() {
        let b = batch(&[0.1, 0.2], &[1.0, 2.0], &[false, false], &[1.0, 1.0]);
        assert!(matches!(weighted_cox_loss(&b, CoxMode::TimeSorted), Err(Error::UndefinedLoss(_))));
    }

    #[test]
    fn non_finite_risk_is_numeric_error() {
        let b = batch(&[f64::NAN, 0.2], &[1.0, 2.0], &[true, false], &[1.0, 1.0]);
        assert!(matches!(weighted_cox_loss(&b, CoxMode::TimeSorted), Err(Error::Numeric(_))));
    }

    #[test]
    fn large_risks_do_not_overflow() {
        let b = batch(&[800.0, 790.0, 805.0], &[1.0, 2.0, 3.0], &[true, true, false], &[1.0; 3]);
        let l = weighted_cox_loss(&b, CoxMode::TimeSorted).unwrap();
        let shifted = batch(&[10.0, 0.0, 15.0], &[1.0, 2.0, 3.0], &[true, true, false], &[1.0; 3]);
        let l2 = weighted_cox_loss(&shifted, CoxMode::TimeSorted).unwrap();
        assert!((l - l2).abs() < 1e-10);
    }

    #[test]
    fn verbatim_mode_ignores_times() {
        let a = batch(&[0.4, -1.0, 0.9], &[1.0, 2.0, 3.0], &[true, false, true], &[3.0, 1.0, 3.0]);
        let b = batch(&[0.4, -1.0, 0.9], &[9.0, 0.5, 4.0], &[true, false, true], &[3.0, 1.0, 3.0]);
        assert_eq!(
            weighted_cox_loss(&a, CoxMode::VerbatimAlg1).unwrap(),
            weighted_cox_loss(&b, CoxMode::VerbatimAlg1).unwrap()
        );
        let trace = alg1_trace(&a).unwrap();
        assert_eq!(trace.order, vec![2, 0, 1]);
        assert!((trace.loss - weighted_cox_loss(&a, CoxMode::VerbatimAlg1).unwrap()).abs() < 1e-14);
    }
}
