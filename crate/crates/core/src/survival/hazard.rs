use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{fit_coxph, CoxModel, SurvivalRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const Z_95: f64 = 1.96;

/// One row of a hazard-ratio table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardRow {
    pub name: String,
    /// (count in the "1" group, count in the "0" group) for binary covariates.
    pub n_per_group: Option<(usize, usize)>,
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
}

fn two_sided_p(beta: f64, se: f64) -> f64 {
    let z = beta / se;
    if z.is_nan() {
        // β = 0 with se = 0
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// HR = exp(β), 95% Wald interval exp(β ± 1.96·se), two-sided Wald p-value.
pub fn hazard_table(model: &CoxModel, labels: &[&str]) -> Result<Vec<HazardRow>> {
    if !model.converged {
        return Err(Error::NotConverged(format!(
            "Newton iterations stopped after {} steps without convergence",
            model.n_iterations
        )));
    }
    if labels.len() != model.coefficients.len() {
        return Err(Error::shape(
            "hazard_table",
            format!("{} labels for {} coefficients", labels.len(), model.coefficients.len()),
        ));
    }
    let se = model.std_errors();
    Ok(labels
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let b = model.coefficients[j];
            HazardRow {
                name: name.to_string(),
                n_per_group: model.group_counts.get(j).copied().flatten(),
                hr: b.exp(),
                ci_low: (b - Z_95 * se[j]).exp(),
                ci_high: (b + Z_95 * se[j]).exp(),
                p: two_sided_p(b, se[j]),
            }
        })
        .collect())
}

fn format_p(p: f64) -> String {
    if p < 0.005 {
        "<0.005".to_string()
    } else {
        format!("{p:.2}")
    }
}

fn format_groups(g: Option<(usize, usize)>) -> String {
    g.map_or_else(|| "-".to_string(), |(a, b)| format!("{a} vs {b}"))
}

impl HazardRow {
    pub fn hr_text(&self) -> String {
        format!("{:.2}", self.hr)
    }

    pub fn ci_text(&self) -> String {
        format!("{:.2}–{:.2}", self.ci_low, self.ci_high)
    }

    pub fn p_text(&self) -> String {
        format_p(self.p)
    }
}

/// Fixed-width table with columns Parameter, n, HR, 95% CI, p.
pub fn render_hazard_text(rows: &[HazardRow]) -> String {
    let width = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(0).max(9);
    let mut out = format!("{:<width$}  {:>12}  {:>5}  {:>11}  {:>6}\n", "Parameter", "n", "HR", "95% CI", "p");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>12}  {:>5}  {:>11}  {:>6}\n",
            r.name,
            format_groups(r.n_per_group),
            r.hr_text(),
            r.ci_text(),
            r.p_text()
        ));
    }
    out
}

/// CSV with header `parameter,n_per_group,hr,ci_low,ci_high,p`.
pub fn render_hazard_csv(rows: &[HazardRow]) -> String {
    let mut out = String::from("parameter,n_per_group,hr,ci_low,ci_high,p\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name,
            format_groups(r.n_per_group),
            r.hr,
            r.ci_low,
            r.ci_high,
            r.p
        ));
    }
    out
}

/// Fits every covariate alone and all covariates jointly; returns
/// (univariate rows, multivariate rows) in column order.
pub fn univariate_and_multivariate(
    x: &Tensor,
    records: &[SurvivalRecord],
    labels: &[&str],
) -> Result<(Vec<HazardRow>, Vec<HazardRow>)> {
    if labels.len() != x.cols() {
        return Err(Error::shape("coxph", format!("{} labels for {} covariates", labels.len(), x.cols())));
    }
    let mut univariate = Vec::with_capacity(labels.len());
    for (j, label) in labels.iter().enumerate() {
        let column: Vec<f64> = (0..x.rows()).map(|r| x.get(r, j)).collect();
        let xj = Tensor::matrix(x.rows(), 1, column)?;
        let model = fit_coxph(&xj, records).map_err(|e| match e {
            Error::RankDeficient { .. } => Error::RankDeficient { column: label.to_string() },
            other => other,
        })?;
        univariate.extend(hazard_table(&model, &[label])?);
    }
    let joint = fit_coxph(x, records).map_err(|e| match e {
        Error::RankDeficient { column } => {
            let name = column
                .strip_prefix("column ")
                .and_then(|i| i.parse::<usize>().ok())
                .and_then(|i| labels.get(i))
                .map_or(column.clone(), |l| l.to_string());
            Error::RankDeficient { column: name }
        }
        other => other,
    })?;
    Ok((univariate, hazard_table(&joint, labels)?))
}

/// Univariate and multivariate estimates side by side, one row per covariate.
/// Header: `parameter,n_per_group,uni_hr,uni_ci_low,uni_ci_high,uni_p,multi_hr,multi_ci_low,multi_ci_high,multi_p`.
pub fn render_hazard_comparison_csv(univariate: &[HazardRow], multivariate: &[HazardRow]) -> Result<String> {
    check_paired(univariate, multivariate)?;
    let mut out = String::from(
        "parameter,n_per_group,uni_hr,uni_ci_low,uni_ci_high,uni_p,multi_hr,multi_ci_low,multi_ci_high,multi_p\n",
    );
    for (u, m) in univariate.iter().zip(multivariate) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            u.name,
            format_groups(u.n_per_group),
            u.hr,
            u.ci_low,
            u.ci_high,
            u.p,
            m.hr,
            m.ci_low,
            m.ci_high,
            m.p
        ));
    }
    Ok(out)
}

/// Text form of [`render_hazard_comparison_csv`].
pub fn render_hazard_comparison_text(univariate: &[HazardRow], multivariate: &[HazardRow]) -> Result<String> {
    check_paired(univariate, multivariate)?;
    let width = univariate.iter().map(|r| r.name.chars().count()).max().unwrap_or(0).max(9);
    let mut out = format!(
        "{:<width$}  {:>12}  {:>31}  {:>31}\n{:<width$}  {:>12}  {:>5}  {:>11}  {:>9}  {:>5}  {:>11}  {:>9}\n",
        "", "", "Univariate", "Multivariate", "Parameter", "n", "HR", "95% CI", "p", "HR", "95% CI", "p"
    );
    for (u, m) in univariate.iter().zip(multivariate) {
        out.push_str(&format!(
            "{:<width$}  {:>12}  {:>5}  {:>11}  {:>9}  {:>5}  {:>11}  {:>9}\n",
            u.name,
            format_groups(u.n_per_group),
            u.hr_text(),
            u.ci_text(),
            u.p_text(),
            m.hr_text(),
            m.ci_text(),
            m.p_text()
        ));
    }
    Ok(out)
}

fn check_paired(univariate: &[HazardRow], multivariate: &[HazardRow]) -> Result<()> {
    if univariate.len() != multivariate.len() || univariate.iter().zip(multivariate).any(|(u, m)| u.name != m.name) {
        return Err(Error::Validation("univariate and multivariate tables list different covariates".into()));
    }
    Ok(())
}
