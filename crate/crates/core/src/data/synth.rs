//! Seeded synthetic cohorts with a known generating log-hazard.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{binarize_clinical, ClinicalFeatures, LnStatus, PatientBundle, RawClinical};
use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;
use crate::tensor::Tensor;

/// Coefficients of each modality's latent factor in the true log-hazard.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueWeights {
    pub image: f64,
    pub genetic: f64,
    pub clinical: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_patients: usize,
    /// Patches per patient.
    pub patches: usize,
    pub feat_dim: usize,
    pub gene_dim: usize,
    pub clinical_dim: usize,
    pub true_weights: TrueWeights,
    pub weibull_shape: f64,
    /// Baseline Weibull scale in months.
    pub weibull_scale: f64,
    /// Target share of censored patients, in (0, 1).
    pub censoring_fraction: f64,
    pub seed: u64,
    /// Length of the image factor's direction in informative patches.
    pub image_signal: f64,
    /// Share of a patient's patches that carry the image factor.
    pub informative_fraction: f64,
    pub patch_noise: f64,
    pub gene_noise: f64,
    pub clinical_noise: f64,
    /// Probability that a lymph-node status is unrecorded (four-variable clinical only).
    pub ln_missing_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_patients: 249,
            patches: 500,
            feat_dim: 1152,
            gene_dim: 138,
            clinical_dim: 4,
            true_weights: TrueWeights { image: 1.0, genetic: 1.0, clinical: 0.5 },
            weibull_shape: 1.5,
            weibull_scale: 100.0,
            censoring_fraction: 0.67,
            seed: 0,
            image_signal: 3.0,
            informative_fraction: 0.5,
            patch_noise: 0.5,
            gene_noise: 1.0,
            clinical_noise: 0.5,
            ln_missing_rate: 0.05,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_patients", self.n_patients),
            ("patches", self.patches),
            ("feat_dim", self.feat_dim),
            ("gene_dim", self.gene_dim),
            ("clinical_dim", self.clinical_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be ≥ 1")));
        }
        if !(self.censoring_fraction > 0.0 && self.censoring_fraction < 1.0) {
            return Err(Error::Config(format!("censoring fraction {} is outside (0, 1)", self.censoring_fraction)));
        }
        let positive = [("weibull_shape", self.weibull_shape), ("weibull_scale", self.weibull_scale)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} = {v} must be positive")));
        }
        let unit = [("informative_fraction", self.informative_fraction), ("ln_missing_rate", self.ln_missing_rate)];
        if let Some((name, v)) = unit.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")));
        }
        let w = self.true_weights;
        let finite =
            [w.image, w.genetic, w.clinical, self.image_signal, self.patch_noise, self.gene_noise, self.clinical_noise];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("synthetic weights and noise levels must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCohort {
    pub patients: Vec<PatientBundle>,
    /// True log-hazard of each patient.
    pub eta: Vec<f64>,
    pub gene_names: Vec<String>,
    /// Censoring share actually realized.
    pub censored_fraction: f64,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn unit_direction<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x / norm).collect()
}

/// Generates a cohort where each modality is a noisy view of its own standard-normal
/// patient factor and the log-hazard is `η = w_I u_I + w_G u_G + w_C u_C`.
///
/// Survival times are Weibull with cumulative hazard `(t/scale)^shape · e^η`; censoring
/// times are exponential with a rate found by bisection so the censored share matches
/// the target.
pub fn synthesize_cohort(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_patients;

    // Cohort-wide structure: where each factor lives in feature space.
    let image_dir = unit_direction(spec.feat_dim, &mut rng);
    let nuisance_dir = unit_direction(spec.feat_dim, &mut rng);
    let gene_base: Vec<f64> = (0..spec.gene_dim).map(|_| rng.random_range(50.0..500.0)).collect();
    let gene_spread: Vec<f64> = (0..spec.gene_dim).map(|_| rng.random_range(10.0..50.0)).collect();
    let gene_load: Vec<f64> = (0..spec.gene_dim)
        .map(|_| {
            let m: f64 = rng.random_range(0.5..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    let clinical_load: Vec<f64> = (0..spec.clinical_dim).map(|_| rng.random_range(0.6..1.0)).collect();

    let w = spec.true_weights;
    let n_informative = ((spec.patches as f64) * spec.informative_fraction).round() as usize;
    let mut patients = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    for i in 0..n {
        let (u_img, u_gene, u_clin) = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
        eta.push(w.image * u_img + w.genetic * u_gene + w.clinical * u_clin);

        let nuisance = normal(&mut rng);
        let mut feats = Vec::with_capacity(spec.patches * spec.feat_dim);
        for p in 0..spec.patches {
            let signal = if p < n_informative { u_img * spec.image_signal } else { 0.0 };
            for d in 0..spec.feat_dim {
                feats.push(signal * image_dir[d] + nuisance * nuisance_dir[d] + spec.patch_noise * normal(&mut rng));
            }
        }
        let genes = (0..spec.gene_dim)
            .map(|j| gene_base[j] + gene_spread[j] * (gene_load[j] * u_gene + spec.gene_noise * normal(&mut rng)))
            .collect();
        let bits: Vec<bool> =
            clinical_load.iter().map(|a| a * u_clin + spec.clinical_noise * normal(&mut rng) > 0.0).collect();
        let (clinical, raw_clinical) = if spec.clinical_dim == 4 {
            let raw = raw_from_bits(&bits, spec.ln_missing_rate, &mut rng);
            (binarize_clinical(&raw)?.network, Some(raw))
        } else {
            (ClinicalFeatures::complete(bits.iter().map(|&b| f64::from(u8::from(b))).collect()), None)
        };
        patients.push(PatientBundle {
            id: format!("SYN-{i:04}"),
            patch_features: Tensor::matrix(spec.patches, spec.feat_dim, feats)?,
            genes,
            clinical,
            raw_clinical,
            record: SurvivalRecord::new(1.0, false),
        });
    }

    let event_times: Vec<f64> = eta
        .iter()
        .map(|e| {
            let h: f64 = rng.sample(Exp1);
            spec.weibull_scale * (h / e.exp()).powf(1.0 / spec.weibull_shape)
        })
        .collect();
    let unit_censor: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
    let rate = calibrate_censoring(&event_times, &unit_censor, spec.censoring_fraction)?;
    let mut n_censored = 0;
    for ((p, &t), &v) in patients.iter_mut().zip(&event_times).zip(&unit_censor) {
        let c = v / rate;
        let event = t <= c;
        n_censored += usize::from(!event);
        p.record = SurvivalRecord::new(t.min(c), event);
        p.record.validate()?;
    }
    Ok(SyntheticCohort {
        patients,
        eta,
        gene_names: (0..spec.gene_dim).map(|j| format!("GENE{:03}", j + 1)).collect(),
        censored_fraction: n_censored as f64 / n as f64,
    })
}

fn censored_share(times: &[f64], unit_censor: &[f64], rate: f64) -> f64 {
    let c = times.iter().zip(unit_censor).filter(|(t, v)| *v / rate < **t).count();
    c as f64 / times.len() as f64
}

/// Exponential censoring rate whose realized censored share is closest to `target`.
fn calibrate_censoring(times: &[f64], unit_censor: &[f64], target: f64) -> Result<f64> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let centre = -sorted[sorted.len() / 2].ln();
    let (mut lo, mut hi) = (centre - 40.0, centre + 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored_share(times, unit_censor, mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (f_lo, f_hi) = (censored_share(times, unit_censor, lo.exp()), censored_share(times, unit_censor, hi.exp()));
    let (rate, achieved) =
        if (f_lo - target).abs() <= (f_hi - target).abs() { (lo.exp(), f_lo) } else { (hi.exp(), f_hi) };
    let tolerance = (2.0 / times.len() as f64).max(0.02);
    if (achieved - target).abs() > tolerance {
        return Err(Error::Calibration(format!("reached a censored share of {achieved:.3}, target {target:.3}")));
    }
    Ok(rate)
}

/// Raw clinical values consistent with the given binarized bits.
fn raw_from_bits<R: Rng>(bits: &[bool], ln_missing_rate: f64, rng: &mut R) -> RawClinical {
    let grade = if bits[0] { 3 } else { rng.random_range(1..=2) };
    let size_mm = if bits[1] { rng.random_range(21.0..60.0) } else { rng.random_range(5.0..20.0) };
    let age_years = if bits[2] { rng.random_range(56.0..85.0) } else { rng.random_range(30.0..55.0) };
    let ln_status = if rng.random::<f64>() < ln_missing_rate {
        LnStatus::Missing
    } else if bits[3] {
        LnStatus::Positive
    } else {
        LnStatus::Negative
    };
    // Round to one decimal so the CSV form is short and re-binarizes identically.
    let round = |v: f64| (v * 10.0).round() / 10.0;
    RawClinical { grade, size_mm: round(size_mm), age_years: round(age_years), ln_status }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec { n_patients: 40, patches: 3, feat_dim: 5, gene_dim: 4, seed, ..SyntheticSpec::default() }
    }

    #[test]
    fn same_seed_same_cohort() {
        let a = synthesize_cohort(&small(9)).unwrap();
        let b = synthesize_cohort(&small(9)).unwrap();
        assert_eq!(a.patients, b.patients);
        assert_eq!(a.eta, b.eta);
        let c = synthesize_cohort(&small(10)).unwrap();
        assert_ne!(a.eta, c.eta);
    }

    #[test]
    fn shapes_and_clinical_consistency() {
        let c = synthesize_cohort(&small(1)).unwrap();
        for p in &c.patients {
            assert_eq!(p.patch_features.shape(), &[3, 5]);
            assert_eq!(p.genes.len(), 4);
            p.validate().unwrap();
            let raw = p.raw_clinical.unwrap();
            assert_eq!(binarize_clinical(&raw).unwrap().network, p.clinical);
        }
    }

    #[test]
    fn invalid_censoring_target() {
        let spec = SyntheticSpec { censoring_fraction: 1.0, ..small(1) };
        assert!(matches!(synthesize_cohort(&spec), Err(Error::Config(_))));
    }
}
