mod common;

use biofusion_core::data::make_folds;
use biofusion_core::fusion::{encode_checkpoint, FusionConfig, VaeParams};
use biofusion_core::survival::SurvivalRecord;
use biofusion_core::tensor::{Graph, Precision, Tensor};
use biofusion_core::train::{
    adam_step, adamw_step, event_stratified_batches, run_cross_validation, train_stage1, train_stage2, vae_objective,
    AdamState, EarlyStopping, LossMode, MeanStd, Stage1Config, Stage2Config, TrainConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn batches_cover_everyone_and_meet_the_event_quota(
        events in prop::collection::vec(any::<bool>(), 1..80), batch_size in 2usize..16, seed in any::<u64>()
    ) {
        let n_events = events.iter().filter(|e| **e).count();
        prop_assume!(n_events > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = event_stratified_batches(&events, batch_size, 2, &mut rng).unwrap();
        let quota = 2.min(n_events).min(batch_size);
        for b in &plan.batches {
            prop_assert!(!b.is_empty() && b.len() <= batch_size);
            prop_assert!(b.iter().filter(|&&i| events[i]).count() >= quota);
        }
        if plan.resampled == 0 {
            let mut all: Vec<usize> = plan.batches.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..events.len()).collect::<Vec<_>>());
        }
        if n_events >= 2 * plan.batches.len() {
            prop_assert_eq!(plan.resampled, 0);
        }
    }

    #[test]
    fn early_stopping_keeps_the_best_loss_seen(losses in prop::collection::vec(0.0f64..10.0, 1..60), patience in 1usize..12) {
        let mut es = EarlyStopping::new(patience, losses[0]);
        let mut seen = vec![losses[0]];
        for (epoch, &l) in losses.iter().enumerate().skip(1) {
            if es.should_stop() {
                break;
            }
            es.observe(epoch, l);
            seen.push(l);
            prop_assert!(seen.iter().all(|&s| es.best() <= s));
            prop_assert_eq!(seen[es.best_epoch()], es.best());
        }
    }

    #[test]
    fn zero_gradient_leaves_adam_parameters_unchanged(v in prop::collection::vec(-5.0f64..5.0, 1..20), lr in 1e-5f64..1e-1) {
        let mut params = vec![Tensor::row_vector(v.clone()).unwrap()];
        let grads = vec![Tensor::zeros(1, v.len())];
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, lr).unwrap();
        prop_assert_eq!(params[0].data(), v.as_slice());
    }

    #[test]
    fn adamw_without_decay_is_adam(v in prop::collection::vec(-5.0f64..5.0, 1..20), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![Tensor::row_vector(v.clone()).unwrap()];
        let mut b = a.clone();
        let (mut sa, mut sb) = (AdamState::new(&a), AdamState::new(&b));
        for _ in 0..5 {
            let g = vec![Tensor::randn(1, v.len(), 1.0, &mut rng)];
            adam_step(&mut a, &g, &mut sa, 1e-2).unwrap();
            adamw_step(&mut b, &g, &mut sb, 1e-2, 0.0).unwrap();
        }
        for (x, y) in a[0].data().iter().zip(b[0].data()) {
            prop_assert!((x - y).abs() <= 1e-15);
        }
    }
}

#[test]
fn vae_loss_decreases_on_a_fixed_batch() {
    let cfg = common::small_config();
    let cohort = common::small_cohort(12, 21);
    let parts: Vec<&Tensor> = cohort.iter().map(|p| &p.patch_features).collect();
    let x = Tensor::vstack(&parts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut vae = VaeParams::init(&cfg, &mut rng);
    let eps = Tensor::randn(x.rows(), cfg.latent_dim, 1.0, &mut rng);
    let mut state = AdamState::new(vae.store.tensors());
    let mut losses = Vec::new();
    for _ in 0..=20 {
        let mut g = Graph::new();
        let obj = vae_objective(&mut g, &vae, &x, Some(&eps), cfg.vae_beta, true).unwrap();
        g.backward(obj.root).unwrap();
        let grads: Vec<Tensor> = obj.vars.iter().map(|&v| g.grad(v).unwrap().clone()).collect();
        losses.push(obj.loss);
        adamw_step(vae.store.tensors_mut(), &grads, &mut state, 1e-4, 1e-2).unwrap();
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn stage_one_improves_validation_loss_and_is_reproducible() {
    let cfg = common::small_config();
    let cohort = common::small_cohort(50, 22);
    let (train, val) = cohort.split_at(40);
    let s1 = Stage1Config { max_epochs: 20, lr: 1e-3, ..Stage1Config::default() };
    let a = train_stage1(train, val, &cfg, &s1, Precision::F64, 5).unwrap();
    assert_eq!(a.log.len(), 21);
    assert!(a.log[20].val_loss < a.log[0].val_loss, "{:?}", a.log);
    let b = train_stage1(train, val, &cfg, &s1, Precision::F64, 5).unwrap();
    assert_eq!(
        encode_checkpoint(&a.vae.to_checkpoint(&cfg)).unwrap(),
        encode_checkpoint(&b.vae.to_checkpoint(&cfg)).unwrap()
    );
    assert_eq!(a.vae, b.vae);
}

#[test]
fn pure_autoencoder_reconstruction_error_falls_every_epoch() {
    let cfg = FusionConfig { vae_beta: 0.0, ..common::small_config() };
    let cohort = common::small_cohort(50, 23);
    let s1 = Stage1Config { max_epochs: 10, ..Stage1Config::default() };
    let res = train_stage1(&cohort, &[], &cfg, &s1, Precision::F64, 6).unwrap();
    let mse: Vec<f64> = res.log.iter().map(|e| e.val_loss).collect();
    assert!(mse.windows(2).all(|w| w[1] < w[0]), "{mse:?}");
}

#[test]
fn single_precision_training_runs() {
    let cfg = common::small_config();
    let cohort = common::small_cohort(24, 24);
    let s1 = Stage1Config { max_epochs: 2, ..Stage1Config::default() };
    let res = train_stage1(&cohort, &[], &cfg, &s1, Precision::F32, 1).unwrap();
    assert!(res.vae.store.all_finite());
}

fn stage2_fixture() -> (FusionConfig, Vec<biofusion_core::data::PatientBundle>, VaeParams) {
    let cfg = common::small_config();
    let cohort = common::small_cohort(60, 25);
    let vae = VaeParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(25));
    (cfg, cohort, vae)
}

#[test]
fn frozen_validation_loss_stops_after_exactly_the_patience() {
    let (cfg, cohort, vae) = stage2_fixture();
    let (train, val) = cohort.split_at(45);
    let s2 = Stage2Config { lr: 1e-300, ..Stage2Config::default() };
    let res = train_stage2(train, val, &vae, &cfg, &s2, Precision::F64, 2).unwrap();
    assert_eq!(res.best_epoch, 0);
    assert_eq!(res.stopped_epoch, 10);
    assert_eq!(res.log.len(), 11);
}

#[test]
fn returned_model_has_the_lowest_monitored_loss() {
    let (cfg, cohort, vae) = stage2_fixture();
    let (train, val) = cohort.split_at(45);
    let s2 = Stage2Config { max_epochs: 25, patience: 5, ..Stage2Config::default() };
    let res = train_stage2(train, val, &vae, &cfg, &s2, Precision::F64, 3).unwrap();
    let best = res.log[res.best_epoch].val_loss;
    assert!(res.log.iter().all(|e| e.val_loss >= best));
}

#[test]
fn unit_event_weight_makes_loss_modes_identical() {
    let (cfg, cohort, vae) = stage2_fixture();
    let (train, val) = cohort.split_at(45);
    let run = |mode| {
        let s2 = Stage2Config { loss_mode: mode, w_event: 1.0, max_epochs: 5, ..Stage2Config::default() };
        train_stage2(train, val, &vae, &cfg, &s2, Precision::F64, 4).unwrap()
    };
    let (a, b) = (run(LossMode::Weighted), run(LossMode::Unweighted));
    for (x, y) in a.model.store.tensors().iter().zip(b.model.store.tensors()) {
        assert!(x.max_abs_diff(y) <= 1e-12);
    }
}

#[test]
fn cross_validation_report_is_consistent_and_deterministic() {
    let cfg = common::small_config();
    let cohort = common::small_cohort(60, 26);
    let ids: Vec<String> = cohort.iter().map(|p| p.id.clone()).collect();
    let records: Vec<SurvivalRecord> = cohort.iter().map(|p| p.record).collect();
    let folds = make_folds(&ids, &records, 3, 1).unwrap();
    let mut tc = TrainConfig::default();
    tc.stage1.max_epochs = 2;
    tc.stage2.max_epochs = 4;
    let a = run_cross_validation(&cohort, &folds, &cfg, &tc).unwrap();
    let b = run_cross_validation(&cohort, &folds, &cfg, &tc).unwrap();
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());

    let report = &a.report;
    assert_eq!(report.folds.len(), 3);
    let c: Vec<f64> = report.folds.iter().filter_map(|f| f.c_index).collect();
    let agg = report.aggregate.c_index.unwrap();
    assert!((agg.mean - c.iter().sum::<f64>() / c.len() as f64).abs() <= 1e-12);
    assert_eq!(Some(agg), MeanStd::of(c.iter().copied()));
    let thetas: Vec<f64> = report.folds.iter().map(|f| f.theta_opt).collect();
    assert!(thetas.windows(2).any(|w| w[0] != w[1]), "{thetas:?}");
    for f in &report.folds {
        assert_eq!(f.n_high + f.n_low, f.n_val);
        assert_eq!(f.n_train + f.n_val, 60);
    }
    let comp = report.computational.as_ref().unwrap();
    assert_eq!(comp.parameter_count, comp.vae_parameters + comp.model_parameters);
    assert!(comp.checkpoint_bytes > 4 * comp.parameter_count as u64);
}
