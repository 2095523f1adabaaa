//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use biofusion_core::data::{synthesize_cohort, PatientBundle, SyntheticSpec, TrueWeights};
use biofusion_core::fusion::{FusionConfig, Modalities};
use biofusion_core::survival::SurvivalRecord;
use rand::Rng;

/// A small cohort: 8 patches of 12 features, 6 genes, 4 clinical bits.
pub fn small_spec(n_patients: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_patients,
        patches: 8,
        feat_dim: 12,
        gene_dim: 6,
        clinical_dim: 4,
        true_weights: TrueWeights { image: 1.0, genetic: 1.0, clinical: 0.5 },
        seed,
        ..SyntheticSpec::default()
    }
}

pub fn small_cohort(n_patients: usize, seed: u64) -> Vec<PatientBundle> {
    synthesize_cohort(&small_spec(n_patients, seed)).unwrap().patients
}

/// Architecture matching [`small_spec`].
pub fn small_config() -> FusionConfig {
    FusionConfig {
        feat_dim_per_extractor: 4,
        n_extractors: 3,
        vae_hidden: 8,
        latent_dim: 4,
        patches_per_patient: 8,
        gene_dim: 6,
        clinical_dim: 4,
        pool_key_dim: 4,
        image_tokens: 2,
        gene_tokens: 2,
        token_dim: 8,
        n_heads: 2,
        n_encoder_layers: 1,
        ffn_hidden: 8,
        fc_dims: [8, 8, 4, 4],
        vae_beta: 1.0,
        modalities: Modalities::ALL,
    }
}

/// Random records with distinct times drawn from (0.5, 100.5) and the given event rate.
pub fn random_records<R: Rng>(rng: &mut R, n: usize, event_rate: f64) -> Vec<SurvivalRecord> {
    (0..n).map(|_| SurvivalRecord::new(0.5 + 100.0 * rng.random::<f64>(), rng.random::<f64>() < event_rate)).collect()
}

/// Like [`random_records`] but with times on an integer grid so ties are common.
pub fn tied_records<R: Rng>(rng: &mut R, n: usize, event_rate: f64) -> Vec<SurvivalRecord> {
    (0..n).map(|_| SurvivalRecord::new(rng.random_range(1..=8) as f64, rng.random::<f64>() < event_rate)).collect()
}

/// Proportional-hazards cohort with one standard-normal covariate: event times are
/// exponential with rate 0.1·exp(βx), censoring times exponential with rate 0.04
/// (about 30% censored at β = 0.7).
pub fn exponential_cohort<R: Rng>(rng: &mut R, n: usize, beta: f64) -> (Vec<f64>, Vec<SurvivalRecord>) {
    use rand_distr::{Distribution, Exp, StandardNormal};
    let censor = Exp::new(0.04).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = StandardNormal.sample(rng);
        let t = Exp::new(0.1 * (beta * xi).exp()).unwrap().sample(rng);
        let c = censor.sample(rng);
        x.push(xi);
        records.push(SurvivalRecord::new(t.min(c), t <= c));
    }
    (x, records)
}
