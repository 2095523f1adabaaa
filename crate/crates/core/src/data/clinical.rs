//! Clinical variables: the raw table, binarization for the network and the
//! covariate coding used by the proportional-hazards analysis.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClinicalFeatures;
use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;

/// Fixed value substituted for a missing lymph-node status in the CoxPH analysis.
pub const LN_MISSING_COXPH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LnStatus {
    Positive,
    Negative,
    Missing,
}

impl LnStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LnStatus::Positive => "pos",
            LnStatus::Negative => "neg",
            LnStatus::Missing => "",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pos" | "positive" | "1" => Some(LnStatus::Positive),
            "neg" | "negative" | "0" => Some(LnStatus::Negative),
            "" | "na" | "missing" => Some(LnStatus::Missing),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawClinical {
    pub grade: u8,
    pub size_mm: f64,
    pub age_years: f64,
    pub ln_status: LnStatus,
}

/// Binary coding of the four clinical variables (grade 3, size > 20 mm,
/// age > 55, lymph-node positive) in both of its forms.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarizedClinical {
    /// Network input: a missing LN status becomes 0 with its flag set.
    pub network: ClinicalFeatures,
    /// CoxPH covariates: a missing LN status becomes [`LN_MISSING_COXPH`].
    pub coxph: [f64; 4],
}

pub fn binarize_clinical(raw: &RawClinical) -> Result<BinarizedClinical> {
    if !(1..=3).contains(&raw.grade) {
        return Err(Error::Validation(format!("tumour grade {} is outside 1..3", raw.grade)));
    }
    if !(raw.size_mm > 0.0 && raw.size_mm.is_finite()) {
        return Err(Error::Validation(format!("tumour size {} mm must be positive", raw.size_mm)));
    }
    if !(raw.age_years > 0.0 && raw.age_years.is_finite()) {
        return Err(Error::Validation(format!("age {} years must be positive", raw.age_years)));
    }
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    let grade = bit(raw.grade == 3);
    let size = bit(raw.size_mm > 20.0);
    let age = bit(raw.age_years > 55.0);
    let ln = bit(raw.ln_status == LnStatus::Positive);
    let ln_missing = raw.ln_status == LnStatus::Missing;
    Ok(BinarizedClinical {
        network: ClinicalFeatures {
            values: vec![grade, size, age, ln],
            missing: vec![false, false, false, ln_missing],
        },
        coxph: [grade, size, age, if ln_missing { LN_MISSING_COXPH } else { ln }],
    })
}

/// One row of the clinical table.
#[derive(Clone, Debug, PartialEq)]
pub struct ClinicalRow {
    pub id: String,
    pub raw: RawClinical,
    pub record: SurvivalRecord,
}

const COLUMNS: [&str; 7] = ["patient_id", "grade", "size_mm", "age_years", "ln_status", "time_months", "event"];

/// Reads `patient_id, grade, size_mm, age_years, ln_status, time_months, event`
/// (any column order). Rows and columns in errors are 1-based, counting the header.
pub fn read_clinical_csv(path: impl AsRef<Path>) -> Result<Vec<ClinicalRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut pos = [0usize; 7];
    let mut missing = Vec::new();
    for (slot, name) in pos.iter_mut().zip(COLUMNS) {
        match headers.iter().position(|h| h.trim() == name) {
            Some(i) => *slot = i,
            None => missing.push(name),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Validation(format!("clinical table lacks columns: {}", missing.join(", "))));
    }
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = r + 2;
        let field = |k: usize| rec.get(pos[k]).unwrap_or("").trim();
        let parse_err = |k: usize, detail: String| Error::Parse { row, col: pos[k] + 1, detail };
        let num = |k: usize| -> Result<f64> {
            field(k).parse::<f64>().map_err(|_| parse_err(k, format!("{} '{}' is not a number", COLUMNS[k], field(k))))
        };
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(parse_err(0, "empty patient_id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!("duplicate patient_id '{id}' in clinical table")));
        }
        let grade =
            field(1).parse::<u8>().map_err(|_| parse_err(1, format!("grade '{}' is not an integer", field(1))))?;
        let ln_status =
            LnStatus::parse(field(4)).ok_or_else(|| parse_err(4, format!("unknown ln_status '{}'", field(4))))?;
        let event = match field(6) {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(6, format!("event '{other}' must be 0 or 1"))),
        };
        let raw = RawClinical { grade, size_mm: num(2)?, age_years: num(3)?, ln_status };
        let record = SurvivalRecord::new(num(5)?, event);
        record.validate().map_err(|e| parse_err(5, e.to_string()))?;
        rows.push(ClinicalRow { id, raw, record });
    }
    Ok(rows)
}

pub fn write_clinical_csv(path: impl AsRef<Path>, rows: &[ClinicalRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.raw.grade.to_string(),
            r.raw.size_mm.to_string(),
            r.raw.age_years.to_string(),
            r.raw.ln_status.as_str().to_string(),
            r.record.time.to_string(),
            u8::from(r.record.event).to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(super) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: malformed CSV: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(grade: u8, size: f64, age: f64, ln: LnStatus) -> RawClinical {
        RawClinical { grade, size_mm: size, age_years: age, ln_status: ln }
    }

    #[test]
    fn cutoffs() {
        let b = binarize_clinical(&raw(2, 25.0, 60.0, LnStatus::Positive)).unwrap();
        assert_eq!(b.network.values, vec![0.0, 1.0, 1.0, 1.0]);
        let b = binarize_clinical(&raw(3, 20.0, 55.0, LnStatus::Negative)).unwrap();
        assert_eq!(b.network.values, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.coxph, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_ln_has_two_codings() {
        let b = binarize_clinical(&raw(1, 10.0, 40.0, LnStatus::Missing)).unwrap();
        assert_eq!(b.coxph[3], 2.0);
        assert_eq!(b.network.values[3], 0.0);
        assert_eq!(b.network.missing, vec![false, false, false, true]);
    }

    #[test]
    fn grade_out_of_range() {
        for g in [0, 4] {
            assert!(matches!(binarize_clinical(&raw(g, 10.0, 40.0, LnStatus::Negative)), Err(Error::Validation(_))));
        }
    }
}
