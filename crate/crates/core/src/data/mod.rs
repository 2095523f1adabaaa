//! Patient data: feature files, gene and clinical tables, fold splitting and a
//! seeded synthetic cohort generator.

mod bfnf;
mod clinical;
mod dataset;
mod folds;
mod genes;
mod synth;

pub use bfnf::{decode_features, encode_features, read_feature_file, write_feature_file, BFNF_MAGIC, BFNF_VERSION};
pub use clinical::{
    binarize_clinical, read_clinical_csv, write_clinical_csv, BinarizedClinical, ClinicalRow, LnStatus, RawClinical,
    LN_MISSING_COXPH,
};
pub use dataset::{load_dataset, write_dataset, CLINICAL_FILE, FEATURES_DIR, GENES_FILE};
pub use folds::{make_folds, read_folds_json, write_folds_json, FoldSplit};
pub use genes::{load_gene_matrix, write_gene_csv, GeneMatrix};
pub use synth::{synthesize_cohort, SyntheticCohort, SyntheticSpec, TrueWeights};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;
use crate::tensor::Tensor;

/// Network-path clinical inputs: binary values and per-field missing flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalFeatures {
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl ClinicalFeatures {
    pub fn complete(values: Vec<f64>) -> Self {
        let missing = vec![false; values.len()];
        ClinicalFeatures { values, missing }
    }
}

/// Everything the network needs for one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientBundle {
    pub id: String,
    /// `P×concat_dim` patch features.
    pub patch_features: Tensor,
    pub genes: Vec<f64>,
    pub clinical: ClinicalFeatures,
    /// Raw clinical variables when available; the CoxPH path reads these.
    pub raw_clinical: Option<RawClinical>,
    pub record: SurvivalRecord,
}

impl PatientBundle {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("patient {}: {what}", self.id)));
        if self.patch_features.rows() == 0 {
            return bad("no patch features");
        }
        if !self.patch_features.all_finite() {
            return bad("non-finite patch features");
        }
        if self.genes.iter().any(|g| !g.is_finite()) {
            return bad("non-finite gene expression");
        }
        if self.clinical.values.len() != self.clinical.missing.len() {
            return bad("clinical values and flags differ in length");
        }
        if self.clinical.values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return bad("clinical values must be 0 or 1");
        }
        self.record.validate()
    }

    /// Brings the patch count to exactly `p`: extra rows are subsampled without
    /// replacement, missing rows are filled by resampling with replacement.
    /// Original row order is kept for the retained rows.
    pub fn fit_patch_count<R: Rng + ?Sized>(&mut self, p: usize, rng: &mut R) {
        let n = self.patch_features.rows();
        if n == p || p == 0 {
            return;
        }
        let idx: Vec<usize> = if n > p {
            let mut idx = sample(rng, n, p).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).chain((n..p).map(|_| rng.random_range(0..n))).collect()
        };
        self.patch_features = self.patch_features.select_rows(&idx);
    }
}

/// Per-gene standardization fitted on a training fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GeneScaler {
    /// Population mean and standard deviation per gene; constant genes get std 1.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let Some(first) = rows.first() else {
            return Err(Error::Validation("cannot fit a gene scaler on zero patients".into()));
        };
        let dim = first.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::shape("gene_scaler", "patients have different gene counts"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(GeneScaler { mean, std })
    }

    pub fn apply(&self, genes: &[f64]) -> Result<Vec<f64>> {
        if genes.len() != self.mean.len() {
            return Err(Error::shape(
                "gene_scaler",
                format!("fitted on {} genes, got {}", self.mean.len(), genes.len()),
            ));
        }
        Ok(genes.iter().zip(&self.mean).zip(&self.std).map(|((g, m), s)| (g - m) / s).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle(rows: usize) -> PatientBundle {
        let data = (0..rows * 2).map(|v| v as f64).collect();
        PatientBundle {
            id: "p".into(),
            patch_features: Tensor::matrix(rows, 2, data).unwrap(),
            genes: vec![1.0],
            clinical: ClinicalFeatures::complete(vec![0.0, 1.0]),
            raw_clinical: None,
            record: SurvivalRecord::new(1.0, true),
        }
    }

    #[test]
    fn patch_count_is_resampled_up_and_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = bundle(3);
        b.fit_patch_count(7, &mut rng);
        assert_eq!(b.patch_features.rows(), 7);
        assert_eq!(&b.patch_features.data()[..6], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut b = bundle(10);
        b.fit_patch_count(4, &mut rng);
        assert_eq!(b.patch_features.rows(), 4);
        let firsts: Vec<f64> = (0..4).map(|r| b.patch_features.get(r, 0)).collect();
        assert!(firsts.windows(2).all(|w| w[0] < w[1]), "distinct rows, original order");
    }

    #[test]
    fn scaler_standardizes_training_rows() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = GeneScaler::fit(rows.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 6.0]).unwrap(), vec![1.0, 1.0]);
        assert!(s.apply(&[1.0]).is_err());
    }

    #[test]
    fn bundle_validation_rejects_non_binary_clinical() {
        let mut b = bundle(2);
        b.validate().unwrap();
        b.clinical.values[0] = 2.0;
        assert!(b.validate().is_err());
    }
}
