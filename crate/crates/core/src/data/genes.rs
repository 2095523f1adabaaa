//! Gene-expression table: `patient_id` plus one column per gene.

use std::collections::HashSet;
use std::path::Path;

use super::clinical::csv_err;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneMatrix {
    /// Patient ids in file order.
    pub ids: Vec<String>,
    /// Gene names in panel order.
    pub genes: Vec<String>,
    /// `patients × genes`, values exactly as read.
    pub values: Tensor,
}

impl GeneMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}

/// Reads the panel's columns, in panel order, without any transformation.
/// Rows and columns in errors are 1-based, counting the header.
pub fn load_gene_matrix<S: AsRef<str>>(path: impl AsRef<Path>, panel: &[S]) -> Result<GeneMatrix> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = find("patient_id").ok_or_else(|| Error::Validation("gene table lacks a patient_id column".into()))?;
    let missing: Vec<&str> = panel.iter().map(AsRef::as_ref).filter(|g| find(g).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!("gene table lacks panel genes: {}", missing.join(", "))));
    }
    let cols: Vec<usize> = panel.iter().map(|g| find(g.as_ref()).expect("checked above")).collect();

    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut data = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = r + 2;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::Parse { row, col: id_col + 1, detail: "empty patient_id".into() });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!("duplicate patient_id '{id}' in gene table")));
        }
        for &c in &cols {
            let cell = rec.get(c).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                detail: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, col: c + 1, detail: format!("'{cell}' is not finite") });
            }
            data.push(v);
        }
        ids.push(id);
    }
    let values =
        if ids.is_empty() { Tensor::zeros(0, cols.len()) } else { Tensor::matrix(ids.len(), cols.len(), data)? };
    Ok(GeneMatrix { ids, genes: panel.iter().map(|g| g.as_ref().to_string()).collect(), values })
}

pub fn write_gene_csv(path: impl AsRef<Path>, m: &GeneMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<&str> = std::iter::once("patient_id").chain(m.genes.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, id) in m.ids.iter().enumerate() {
        let row: Vec<String> = std::iter::once(id.clone()).chain(m.row(i).iter().map(f64::to_string)).collect();
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
