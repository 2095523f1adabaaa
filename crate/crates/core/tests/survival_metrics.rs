mod common;

use biofusion_core::data::{synthesize_cohort, SyntheticSpec, TrueWeights};
use biofusion_core::metrics::{
    concordance_index, kaplan_meier, log_rank, risk_groups, split_by_group, time_dependent_auc, AucOptions,
    AucWeighting, RiskGroup, TiePolicy,
};
use biofusion_core::survival::SurvivalRecord;
use biofusion_core::train::median_threshold;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cohort() -> impl Strategy<Value = (Vec<f64>, Vec<SurvivalRecord>)> {
    (2usize..=40, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = common::random_records(&mut rng, n, 0.6);
        let risks = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        (risks, records)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn c_index_is_invariant_under_increasing_transforms((risks, records) in cohort(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        prop_assume!(concordance_index(&risks, &records, TiePolicy::Strict).is_ok());
        for tie in [TiePolicy::Strict, TiePolicy::HalfCredit] {
            let c = concordance_index(&risks, &records, tie).unwrap();
            let affine: Vec<f64> = risks.iter().map(|r| a * r + b).collect();
            let cubic: Vec<f64> = risks.iter().map(|r| r * r * r).collect();
            prop_assert_eq!(c, concordance_index(&affine, &records, tie).unwrap());
            prop_assert_eq!(c, concordance_index(&cubic, &records, tie).unwrap());
        }
    }

    #[test]
    fn c_index_of_negated_risks_is_complementary((risks, records) in cohort()) {
        prop_assume!(concordance_index(&risks, &records, TiePolicy::Strict).is_ok());
        let neg: Vec<f64> = risks.iter().map(|r| -r).collect();
        let sum = concordance_index(&risks, &records, TiePolicy::Strict).unwrap()
            + concordance_index(&neg, &records, TiePolicy::Strict).unwrap();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn km_curve_is_monotone((_, records) in cohort()) {
        let km = kaplan_meier(&records);
        prop_assert!(km.survival.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(km.survival.iter().all(|s| (0.0..=1.0).contains(s)));
        prop_assert!(km.at_risk.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(km.event_times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn log_rank_is_symmetric((risks, records) in cohort()) {
        let groups = risk_groups(&risks, 0.0);
        let (high, low) = split_by_group(&records, &groups);
        if let (Ok(a), Ok(b)) = (log_rank(&high, &low), log_rank(&low, &high)) {
            prop_assert!((a.chi2 - b.chi2).abs() <= 1e-12);
            prop_assert!(a.chi2 >= 0.0 && (0.0..=1.0).contains(&a.p));
            prop_assert_eq!(a.df, 1);
        }
    }

    #[test]
    fn auc_values_are_probabilities_and_mean_is_their_average((risks, records) in cohort()) {
        let res = time_dependent_auc(&risks, &records, &[20.0, 50.0, 80.0], AucOptions::default()).unwrap();
        let defined: Vec<f64> = res.auc_at.iter().flatten().copied().collect();
        prop_assert!(defined.iter().all(|a| (0.0..=1.0).contains(a)));
        match res.mean_auc {
            Some(m) => prop_assert!((m - defined.iter().sum::<f64>() / defined.len() as f64).abs() <= 1e-12),
            None => prop_assert!(defined.is_empty()),
        }
    }
}

/// Enumerates ordered pairs (i, j) and applies the indicator products directly.
fn brute_force_c_index(risks: &[f64], records: &[SurvivalRecord]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..records.len() {
        for j in 0..records.len() {
            let comparable = f64::from(u8::from(records[i].time < records[j].time && records[i].event));
            den += comparable;
            num += comparable * f64::from(u8::from(risks[i] > risks[j]));
        }
    }
    num / den
}

#[test]
fn four_patient_example_matches_pair_enumeration() {
    let records: Vec<SurvivalRecord> =
        [(2.0, true), (4.0, false), (5.0, true), (7.0, true)].iter().map(|&(t, e)| SurvivalRecord::new(t, e)).collect();
    let risks = [0.9, 0.3, 0.8, 0.1];
    let c = concordance_index(&risks, &records, TiePolicy::Strict).unwrap();
    assert_eq!(c, brute_force_c_index(&risks, &records));
    // comparable pairs (0,1), (0,2), (0,3), (2,3) are all concordant
    assert_eq!(c, 1.0);
}

#[test]
fn trivial_rankings() {
    let records: Vec<SurvivalRecord> = (1..=3).map(|t| SurvivalRecord::new(t as f64, true)).collect();
    assert_eq!(concordance_index(&[3.0, 2.0, 1.0], &records, TiePolicy::Strict).unwrap(), 1.0);
    assert_eq!(concordance_index(&[1.0, 2.0, 3.0], &records, TiePolicy::Strict).unwrap(), 0.0);
}

#[test]
fn uniform_auc_recovers_concordance_on_single_horizon() {
    // With every case before t and every control after it, AUC(t) is the share of
    // case/control pairs ranked correctly (ties counting fully under ≤).
    let records = vec![
        SurvivalRecord::new(1.0, true),
        SurvivalRecord::new(2.0, true),
        SurvivalRecord::new(8.0, false),
        SurvivalRecord::new(9.0, true),
    ];
    let opts = AucOptions { weighting: AucWeighting::Uniform, strict: false };
    let res = time_dependent_auc(&[0.5, 0.9, 0.7, 0.1], &records, &[5.0], opts).unwrap();
    // pairs: (0.5 vs 0.7, 0.1) → 1 hit; (0.9 vs 0.7, 0.1) → 2 hits
    assert_eq!(res.auc_at[0], Some(0.75));
}

#[test]
fn median_grouping_on_separable_cohort_is_significant() {
    let spec = SyntheticSpec {
        n_patients: 240,
        patches: 2,
        feat_dim: 6,
        gene_dim: 4,
        true_weights: TrueWeights { image: 1.0, genetic: 1.0, clinical: 0.5 },
        seed: 12,
        ..SyntheticSpec::default()
    };
    let cohort = synthesize_cohort(&spec).unwrap();
    let records: Vec<SurvivalRecord> = cohort.patients.iter().map(|p| p.record).collect();
    let theta = median_threshold(&cohort.eta).unwrap();
    let groups = risk_groups(&cohort.eta, theta);
    assert_eq!(groups.iter().filter(|g| **g == RiskGroup::High).count(), 120);
    let (high, low) = split_by_group(&records, &groups);
    let lr = log_rank(&high, &low).unwrap();
    assert!(lr.p < 0.05, "{lr:?}");
    let km_high = kaplan_meier(&high);
    let km_low = kaplan_meier(&low);
    assert!(km_high.survival_at(60.0) < km_low.survival_at(60.0));
}

#[test]
fn equality_with_threshold_goes_low() {
    assert_eq!(
        risk_groups(&[1.0, 2.0, 2.5, 3.0, 4.0], 2.5),
        vec![RiskGroup::Low, RiskGroup::Low, RiskGroup::Low, RiskGroup::High, RiskGroup::High]
    );
    assert!(risk_groups(&[0.1, 0.2], 5.0).iter().all(|g| *g == RiskGroup::Low));
}
