use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;

/// Product-limit survival curve over the distinct event times.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub event_times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
}

impl KmCurve {
    /// S(t), right-continuous; 1 before the first event.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.event_times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// S(t⁻): product over event times strictly before `t`.
    pub fn survival_before(&self, t: f64) -> f64 {
        let k = self.event_times.partition_point(|&x| x < t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// CSV with header `time,survival,at_risk,n_events`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,survival,at_risk,n_events\n");
        for k in 0..self.event_times.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.event_times[k], self.survival[k], self.at_risk[k], self.n_events[k]
            ));
        }
        out
    }
}

/// S(t) = Π_{t_k ≤ t} (1 − d_k / n_k). Subjects censored at t_k are still at risk at t_k.
pub fn kaplan_meier(records: &[SurvivalRecord]) -> KmCurve {
    let mut times: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.event)).collect();
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut curve = KmCurve::default();
    let mut s = 1.0;
    let mut at_risk = times.len();
    let mut k = 0;
    while k < times.len() {
        let t = times[k].0;
        let mut end = k;
        let mut deaths = 0;
        while end < times.len() && times[end].0 == t {
            deaths += usize::from(times[end].1);
            end += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            curve.event_times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.n_events.push(deaths);
        }
        at_risk -= end - k;
        k = end;
    }
    curve
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub chi2: f64,
    pub p: f64,
    pub df: usize,
}

/// Two-group log-rank test with hypergeometric variance.
pub fn log_rank(group_a: &[SurvivalRecord], group_b: &[SurvivalRecord]) -> Result<LogRankResult> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Validation("log-rank needs two nonempty groups".into()));
    }
    let mut pooled: Vec<(f64, bool, bool)> = group_a
        .iter()
        .map(|r| (r.time, r.event, true))
        .chain(group_b.iter().map(|r| (r.time, r.event, false)))
        .collect();
    if !pooled.iter().any(|p| p.1) {
        return Err(Error::UndefinedMetric("log-rank test with zero events".into()));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut n_a = group_a.len() as f64;
    let mut n = pooled.len() as f64;
    let mut o_minus_e = 0.0;
    let mut var = 0.0;
    let mut k = 0;
    while k < pooled.len() {
        let t = pooled[k].0;
        let (mut d, mut d_a, mut leave, mut leave_a) = (0.0, 0.0, 0.0, 0.0);
        let mut end = k;
        while end < pooled.len() && pooled[end].0 == t {
            let (_, ev, in_a) = pooled[end];
            leave += 1.0;
            if in_a {
                leave_a += 1.0;
            }
            if ev {
                d += 1.0;
                if in_a {
                    d_a += 1.0;
                }
            }
            end += 1;
        }
        if d > 0.0 {
            let frac = n_a / n;
            o_minus_e += d_a - d * frac;
            if n > 1.0 {
                var += d * frac * (1.0 - frac) * (n - d) / (n - 1.0);
            }
        }
        n -= leave;
        n_a -= leave_a;
        k = end;
    }
    if var <= 0.0 {
        return Err(Error::UndefinedMetric("log-rank variance is zero".into()));
    }
    let chi2 = o_minus_e * o_minus_e / var;
    // chi-square survival with one degree of freedom
    let p = erfc((chi2 / 2.0).sqrt()).clamp(0.0, 1.0);
    Ok(LogRankResult { chi2, p, df: 1 })
}
