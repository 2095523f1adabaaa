use serde::{Deserialize, Serialize};

use super::SurvivalRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

/// Fitted proportional-hazards model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the estimate.
    pub covariance: Vec<Vec<f64>>,
    pub n_iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    /// (count of 1s, count of 0s) for binary covariates.
    pub group_counts: Vec<Option<(usize, usize)>>,
}

impl CoxModel {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.covariance[j][j].max(0.0).sqrt()).collect()
    }
}

struct Derivs {
    loglik: f64,
    score: Vec<f64>,
    info: Vec<Vec<f64>>,
}

/// Breslow log partial likelihood of `beta`; unit weights.
pub fn partial_log_likelihood(x: &Tensor, records: &[SurvivalRecord], beta: &[f64]) -> f64 {
    derivatives(x, records, beta, &time_order(records), false).loglik
}

fn time_order(records: &[SurvivalRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].time.total_cmp(&records[a].time));
    order
}

fn derivatives(x: &Tensor, records: &[SurvivalRecord], beta: &[f64], order: &[usize], second: bool) -> Derivs {
    let p = beta.len();
    let n = order.len();
    let eta: Vec<f64> = (0..x.rows()).map(|i| x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![vec![0.0; p]; if second { p } else { 0 }];
    let mut out = Derivs { loglik: 0.0, score: vec![0.0; p], info: vec![vec![0.0; p]; p] };

    let mut k = 0;
    while k < n {
        // absorb the whole tie group into the risk sums first
        let t = records[order[k]].time;
        let mut end = k;
        while end < n && records[order[end]].time == t {
            let i = order[end];
            let xi = x.row(i);
            let e = (eta[i] - shift).exp();
            s0 += e;
            for a in 0..p {
                s1[a] += e * xi[a];
                if second {
                    for b in 0..p {
                        s2[a][b] += e * xi[a] * xi[b];
                    }
                }
            }
            end += 1;
        }
        for &i in &order[k..end] {
            if !records[i].event {
                continue;
            }
            let xi = x.row(i);
            out.loglik += eta[i] - shift - s0.ln();
            for a in 0..p {
                let mean_a = s1[a] / s0;
                out.score[a] += xi[a] - mean_a;
                if second {
                    for b in 0..p {
                        out.info[a][b] += s2[a][b] / s0 - mean_a * s1[b] / s0;
                    }
                }
            }
        }
        k = end;
    }
    out
}

/// Cholesky factor of a symmetric positive-definite matrix; on failure returns the
/// index of the column whose pivot vanished.
#[allow(clippy::needless_range_loop)] // index form mirrors the factorization
fn cholesky(a: &[Vec<f64>]) -> std::result::Result<Vec<Vec<f64>>, usize> {
    let p = a.len();
    let scale = (0..p).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut l = vec![vec![0.0; p]; p];
    for j in 0..p {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d <= 1e-12 * scale || !d.is_finite() {
            return Err(j);
        }
        l[j][j] = d.sqrt();
        for i in j + 1..p {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = b.len();
    let mut y = vec![0.0; p];
    for i in 0..p {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

#[allow(clippy::needless_range_loop)]
fn cholesky_inverse(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = l.len();
    let mut inv = vec![vec![0.0; p]; p];
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        let col = cholesky_solve(l, &e);
        for i in 0..p {
            inv[i][j] = col[i];
        }
    }
    // symmetrize against round-off
    for i in 0..p {
        for j in 0..i {
            let m = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = m;
            inv[j][i] = m;
        }
    }
    inv
}

/// Newton–Raphson maximization of the Breslow partial likelihood.
///
/// Record weights are ignored. Iteration stops when max |Δβ| < 1e-8 or after
/// 100 iterations; a step that lowers the likelihood is halved until it does not.
pub fn fit_coxph(x: &Tensor, records: &[SurvivalRecord]) -> Result<CoxModel> {
    let (n, p) = (x.rows(), x.cols());
    if n != records.len() {
        return Err(Error::shape("fit_coxph", format!("{n} covariate rows for {} records", records.len())));
    }
    if n <= p {
        return Err(Error::Validation(format!("need more samples than covariates ({n} ≤ {p})")));
    }
    if !records.iter().any(|r| r.event) {
        return Err(Error::UndefinedLoss("no events; partial likelihood undefined".into()));
    }
    if !x.all_finite() {
        return Err(Error::Validation("covariates contain non-finite values".into()));
    }
    let mut group_counts = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| x.get(i, j)).collect();
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::RankDeficient { column: format!("column {j}") });
        }
        let binary = col.iter().all(|&v| v == 0.0 || v == 1.0);
        group_counts.push(binary.then(|| {
            let ones = col.iter().filter(|&&v| v == 1.0).count();
            (ones, n - ones)
        }));
    }

    let order = time_order(records);
    let mut beta = vec![0.0; p];
    let mut d = derivatives(x, records, &beta, &order, true);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let l = cholesky(&d.info).map_err(|j| Error::RankDeficient { column: format!("column {j}") })?;
        let mut step = cholesky_solve(&l, &d.score);
        let mut candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
        let mut next = derivatives(x, records, &candidate, &order, true);
        let mut halvings = 0;
        while !(next.loglik >= d.loglik - 1e-12 * d.loglik.abs().max(1.0)) && halvings < 30 {
            step.iter_mut().for_each(|s| *s *= 0.5);
            candidate = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
            next = derivatives(x, records, &candidate, &order, true);
            halvings += 1;
        }
        let max_step = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        beta = candidate;
        d = next;
        if max_step < TOL {
            converged = true;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numeric("coefficients diverged".into()));
    }
    let l = cholesky(&d.info).map_err(|j| Error::RankDeficient { column: format!("column {j}") })?;
    Ok(CoxModel {
        coefficients: beta,
        covariance: cholesky_inverse(&l),
        n_iterations: iterations,
        converged,
        log_likelihood: d.loglik,
        group_counts,
    })
}
