//! A cohort on disk: `clinical.csv`, `genes.csv` and `features/<patient_id>.bfnf`.

use std::collections::HashMap;
use std::path::Path;

use super::clinical::csv_err;
use super::{
    binarize_clinical, load_gene_matrix, read_clinical_csv, read_feature_file, write_clinical_csv, write_feature_file,
    write_gene_csv, ClinicalRow, GeneMatrix, PatientBundle,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CLINICAL_FILE: &str = "clinical.csv";
pub const GENES_FILE: &str = "genes.csv";
pub const FEATURES_DIR: &str = "features";

/// Writes a cohort whose patients all carry raw clinical variables.
pub fn write_dataset(dir: impl AsRef<Path>, patients: &[PatientBundle], gene_names: &[String]) -> Result<()> {
    let dir = dir.as_ref();
    let features = dir.join(FEATURES_DIR);
    std::fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    let mut clinical = Vec::with_capacity(patients.len());
    let mut gene_rows = Vec::with_capacity(patients.len() * gene_names.len());
    for p in patients {
        let raw = p
            .raw_clinical
            .ok_or_else(|| Error::Validation(format!("patient {} has no raw clinical variables", p.id)))?;
        if p.genes.len() != gene_names.len() {
            return Err(Error::shape("write_dataset", format!("patient {} has {} genes", p.id, p.genes.len())));
        }
        clinical.push(ClinicalRow { id: p.id.clone(), raw, record: p.record });
        gene_rows.extend_from_slice(&p.genes);
        write_feature_file(features.join(format!("{}.bfnf", p.id)), &p.patch_features)?;
    }
    write_clinical_csv(dir.join(CLINICAL_FILE), &clinical)?;
    let values = if patients.is_empty() {
        Tensor::zeros(0, gene_names.len())
    } else {
        Tensor::matrix(patients.len(), gene_names.len(), gene_rows)?
    };
    let genes = GeneMatrix { ids: patients.iter().map(|p| p.id.clone()).collect(), genes: gene_names.to_vec(), values };
    write_gene_csv(dir.join(GENES_FILE), &genes)
}

/// Loads every patient of the clinical table, in its order. The gene panel is the
/// gene table's header minus `patient_id`.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Vec<PatientBundle>, Vec<String>)> {
    let dir = dir.as_ref();
    let clinical = read_clinical_csv(dir.join(CLINICAL_FILE))?;
    let genes_path = dir.join(GENES_FILE);
    let panel: Vec<String> = {
        let mut r = csv::Reader::from_path(&genes_path).map_err(|e| csv_err(&genes_path, e))?;
        let headers = r.headers().map_err(|e| csv_err(&genes_path, e))?;
        headers.iter().map(|h| h.trim().to_string()).filter(|h| h != "patient_id").collect()
    };
    let genes = load_gene_matrix(&genes_path, &panel)?;
    let gene_row: HashMap<&str, usize> = genes.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mut patients = Vec::with_capacity(clinical.len());
    for row in clinical {
        let g = *gene_row
            .get(row.id.as_str())
            .ok_or_else(|| Error::Validation(format!("patient {} has no gene expression row", row.id)))?;
        let features = read_feature_file(dir.join(FEATURES_DIR).join(format!("{}.bfnf", row.id)))?;
        let bundle = PatientBundle {
            patch_features: features,
            genes: genes.row(g).to_vec(),
            clinical: binarize_clinical(&row.raw)?.network,
            raw_clinical: Some(row.raw),
            record: row.record,
            id: row.id,
        };
        bundle.validate()?;
        patients.push(bundle);
    }
    Ok((patients, panel))
}
