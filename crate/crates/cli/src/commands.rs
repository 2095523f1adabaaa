//! Subcommand implementations. Every function reports failures as the core
//! error type so `main` can map them onto exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use biofusion_core::data::{
    binarize_clinical, load_dataset, make_folds, read_clinical_csv, read_folds_json, synthesize_cohort, write_dataset,
    write_folds_json, FoldSplit, PatientBundle, SyntheticSpec,
};
use biofusion_core::error::{Error, Result};
use biofusion_core::fusion::{read_checkpoint, write_checkpoint, FusionConfig, Modalities, ModelParams, VaeParams};
use biofusion_core::metrics::{kaplan_meier, log_rank, risk_groups, split_by_group, RiskGroup};
use biofusion_core::survival::{
    render_hazard_comparison_csv, render_hazard_comparison_text, univariate_and_multivariate, SurvivalRecord,
};
use biofusion_core::tensor::Tensor;
use biofusion_core::train::{
    self, computational, derive_seed, evaluate_fold, gradient_suite, inner_split, median_threshold, risk_scores,
    run_cross_validation_variants, select_patients, EvalReport, Monitor, TrainConfig,
};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seed stream used to subsample or resample patches to the configured count.
const PATCH_STREAM: u64 = 0x5041_5443;

/// Contents of `--config`: architecture plus training settings.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: FusionConfig,
    pub train: TrainConfig,
}

/// Restricts training to one fold's training patients.
#[derive(Args, Debug, Default)]
pub struct FoldArgs {
    /// Fold file; without it every patient is used for training.
    #[arg(long, requires = "fold")]
    folds: Option<PathBuf>,
    /// 1-based fold whose training patients are used.
    #[arg(long, requires = "folds")]
    fold: Option<usize>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_run_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut rc: RunConfig = match path {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        rc.train.seed = s;
    }
    rc.model.validate()?;
    rc.train.validate()?;
    Ok(rc)
}

/// Loads a cohort directory and checks it against the architecture, bringing
/// every patient to the configured patch count.
fn load_cohort(dir: &Path, cfg: &FusionConfig, seed: u64) -> Result<Vec<PatientBundle>> {
    let (mut patients, panel) = load_dataset(dir)?;
    if panel.len() != cfg.gene_dim {
        return Err(Error::Validation(format!(
            "cohort has {} genes but the configuration expects {}",
            panel.len(),
            cfg.gene_dim
        )));
    }
    for (i, p) in patients.iter_mut().enumerate() {
        if p.patch_features.cols() != cfg.concat_dim() {
            return Err(Error::Validation(format!(
                "patient '{}' has {}-dimensional patch features; expected {}",
                p.id,
                p.patch_features.cols(),
                cfg.concat_dim()
            )));
        }
        if p.clinical.values.len() != cfg.clinical_dim {
            return Err(Error::Validation(format!(
                "patient '{}' has {} clinical variables; expected {}",
                p.id,
                p.clinical.values.len(),
                cfg.clinical_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, PATCH_STREAM + i as u64));
        p.fit_patch_count(cfg.patches_per_patient, &mut rng);
    }
    log::info!("loaded {} patients from {}", patients.len(), dir.display());
    Ok(patients)
}

/// Returns (fitting patients, early-stopping patients) for single-stage commands.
fn training_split(
    cohort: &[PatientBundle],
    fold: &FoldArgs,
    tc: &TrainConfig,
) -> Result<(Vec<PatientBundle>, Vec<PatientBundle>, u64)> {
    let (train, val, stream) = match (&fold.folds, fold.fold) {
        (Some(path), Some(k)) => {
            let split = find_fold(&read_folds_json(path)?, k)?;
            (select_patients(cohort, &split.train)?, select_patients(cohort, &split.val)?, k as u64 * 16)
        }
        _ => (cohort.to_vec(), Vec::new(), 0),
    };
    let (fit, early) = match tc.monitor {
        Monitor::Training => (train, Vec::new()),
        Monitor::InnerSplit => inner_split(&train, tc.inner_val_folds, derive_seed(tc.seed, stream + 1))?,
        Monitor::ValidationFold => {
            if val.is_empty() {
                log::warn!("monitor 'validation_fold' without a fold; monitoring the training loss");
            }
            (train, val)
        }
    };
    Ok((fit, early, stream))
}

fn find_fold(folds: &[FoldSplit], k: usize) -> Result<FoldSplit> {
    folds
        .iter()
        .find(|f| f.fold == k)
        .cloned()
        .ok_or_else(|| Error::Validation(format!("fold {k} is not in the fold file ({} folds)", folds.len())))
}

pub fn synth(spec_path: Option<&Path>, out: &Path, k: usize, seed: Option<u64>) -> Result<()> {
    let mut spec: SyntheticSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let cohort = synthesize_cohort(&spec)?;
    write_dataset(out, &cohort.patients, &cohort.gene_names)?;
    if k > 0 {
        let ids: Vec<String> = cohort.patients.iter().map(|p| p.id.clone()).collect();
        let records: Vec<SurvivalRecord> = cohort.patients.iter().map(|p| p.record).collect();
        let folds = make_folds(&ids, &records, k, derive_seed(spec.seed, 1))?;
        write_folds_json(out.join("folds.json"), &folds)?;
    }
    println!(
        "wrote {} patients to {} ({:.1}% censored)",
        cohort.patients.len(),
        out.display(),
        100.0 * cohort.censored_fraction
    );
    Ok(())
}

pub fn train_stage1(data: &Path, config: Option<&Path>, out: &Path, fold: &FoldArgs, seed: Option<u64>) -> Result<()> {
    let rc = load_run_config(config, seed)?;
    let cohort = load_cohort(data, &rc.model, rc.train.seed)?;
    let (fit, early, stream) = training_split(&cohort, fold, &rc.train)?;
    let s1 = train::train_stage1(
        &fit,
        &early,
        &rc.model,
        &rc.train.stage1,
        rc.train.precision,
        derive_seed(rc.train.seed, stream + 2),
    )?;
    let bytes = write_checkpoint(out, &s1.vae.to_checkpoint(&rc.model))?;
    println!(
        "stage 1: {} patients, best epoch {} of {}, wrote {} ({bytes} bytes)",
        fit.len(),
        s1.best_epoch,
        s1.log.len().saturating_sub(1),
        out.display()
    );
    Ok(())
}

fn load_vae(path: &Path, cfg: &FusionConfig) -> Result<VaeParams> {
    let (vcfg, vae) = read_checkpoint(path)?.into_vae()?;
    if (vcfg.concat_dim(), vcfg.vae_hidden, vcfg.latent_dim) != (cfg.concat_dim(), cfg.vae_hidden, cfg.latent_dim) {
        return Err(Error::Validation(format!(
            "VAE checkpoint {} was trained for a different architecture",
            path.display()
        )));
    }
    Ok(vae)
}

pub fn train_stage2(
    data: &Path,
    vae_path: &Path,
    config: Option<&Path>,
    out: &Path,
    fold: &FoldArgs,
    seed: Option<u64>,
) -> Result<()> {
    let rc = load_run_config(config, seed)?;
    let vae = load_vae(vae_path, &rc.model)?;
    let cohort = load_cohort(data, &rc.model, rc.train.seed)?;
    let (fit, early, stream) = training_split(&cohort, fold, &rc.train)?;
    let s2 = train::train_stage2(
        &fit,
        &early,
        &vae,
        &rc.model,
        &rc.train.stage2,
        rc.train.precision,
        derive_seed(rc.train.seed, stream + 3),
    )?;
    let bytes = write_checkpoint(out, &s2.model.to_checkpoint(&rc.model))?;
    println!(
        "stage 2: {} patients, best epoch {}, stopped at {}, {} resampled batches, wrote {} ({bytes} bytes)",
        fit.len(),
        s2.best_epoch,
        s2.stopped_epoch,
        s2.resampled_batches,
        out.display()
    );
    Ok(())
}

pub fn eval(
    data: &Path,
    vae_path: &Path,
    model_path: &Path,
    folds_path: &Path,
    report_path: &Path,
    km_dir: Option<&Path>,
    risks_path: Option<&Path>,
) -> Result<()> {
    let (cfg, model): (FusionConfig, ModelParams) = read_checkpoint(model_path)?.into_model()?;
    let vae = load_vae(vae_path, &cfg)?;
    let cohort = load_cohort(data, &cfg, 0)?;
    let folds = read_folds_json(folds_path)?;
    if let Some(dir) = km_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut risk_csv = String::from("patient_id,fold,risk,time_months,event\n");
    let mut reports = Vec::with_capacity(folds.len());
    for split in &folds {
        let train = select_patients(&cohort, &split.train)?;
        let val = select_patients(&cohort, &split.val)?;
        let train_risks = risk_scores(&train, &vae, &model, &cfg)?;
        let val_risks = risk_scores(&val, &vae, &model, &cfg)?;
        let records: Vec<SurvivalRecord> = val.iter().map(|p| p.record).collect();
        let eval = evaluate_fold(split.fold, &train_risks, &val_risks, &records)?;
        for w in &eval.report.warnings {
            log::info!("fold {}: {w}", split.fold);
        }
        for (p, r) in val.iter().zip(&val_risks) {
            risk_csv.push_str(&format!("{},{},{r},{},{}\n", p.id, split.fold, p.record.time, u8::from(p.record.event)));
        }
        if let Some(dir) = km_dir {
            write_text(&dir.join(format!("fold{}_km_high.csv", split.fold)), &eval.km_high.to_csv())?;
            write_text(&dir.join(format!("fold{}_km_low.csv", split.fold)), &eval.km_low.to_csv())?;
        }
        reports.push(eval.report);
    }
    let report = EvalReport::new(cfg.modalities.label(), reports, Some(computational(&cfg, &vae, &model)?));
    write_json(report_path, &report)?;
    if let Some(p) = risks_path {
        write_text(p, &risk_csv)?;
    }
    print_summary(&report);
    Ok(())
}

fn parse_variants(text: &str) -> Result<Vec<Modalities>> {
    text.split(';')
        .flat_map(|s| s.split_whitespace())
        .flat_map(|s| s.split(','))
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "all" => Ok(Modalities::ALL),
            "image+genetic" => Ok(Modalities::IMAGE_GENETIC),
            "image" => Ok(Modalities::IMAGE_ONLY),
            "genetic" => Ok(Modalities::GENETIC_ONLY),
            other => Err(Error::Validation(format!(
                "unknown variant '{other}'; expected all, image+genetic, image or genetic"
            ))),
        })
        .collect()
}

pub fn cv(
    data: &Path,
    config: Option<&Path>,
    folds_path: Option<&Path>,
    report_path: &Path,
    variants: &str,
    seed: Option<u64>,
) -> Result<()> {
    let rc = load_run_config(config, seed)?;
    let variants = parse_variants(variants)?;
    if variants.is_empty() {
        return Err(Error::Validation("no variants requested".into()));
    }
    let cohort = load_cohort(data, &rc.model, rc.train.seed)?;
    let folds = match folds_path {
        Some(p) => read_folds_json(p)?,
        None => {
            let ids: Vec<String> = cohort.iter().map(|p| p.id.clone()).collect();
            let records: Vec<SurvivalRecord> = cohort.iter().map(|p| p.record).collect();
            make_folds(&ids, &records, 5, derive_seed(rc.train.seed, 1))?
        }
    };
    let outcomes = run_cross_validation_variants(&cohort, &folds, &rc.model, &rc.train, &variants)?;
    let reports: Vec<&EvalReport> = outcomes.iter().map(|o| &o.report).collect();
    for r in &reports {
        print_summary(r);
    }
    if reports.len() == 1 {
        write_json(report_path, reports[0])
    } else {
        write_json(report_path, &reports)
    }
}

fn print_summary(report: &EvalReport) {
    let fmt = |m: Option<biofusion_core::train::MeanStd>| {
        m.map_or_else(|| "n/a".to_string(), |m| format!("{:.3} ± {:.3} (n={})", m.mean, m.std, m.n))
    };
    println!("{}", report.label);
    println!("  C-index   {}", fmt(report.aggregate.c_index));
    println!("  AUC(60)   {}", fmt(report.aggregate.auc_60));
    println!("  AUC(120)  {}", fmt(report.aggregate.auc_120));
    println!("  mean AUC  {}", fmt(report.aggregate.mean_auc));
}

#[derive(Deserialize)]
struct RiskRow {
    risk: f64,
    time_months: f64,
    event: u8,
}

pub fn km(risks_path: &Path, theta: &str, out: &[PathBuf]) -> Result<()> {
    let [high_path, low_path] = out else {
        return Err(Error::Validation("--out takes exactly two paths (high, low)".into()));
    };
    let mut reader = csv::Reader::from_path(risks_path).map_err(|e| csv_error(risks_path, e))?;
    let mut risks = Vec::new();
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<RiskRow>().enumerate() {
        let row = row.map_err(|e| csv_error(risks_path, e))?;
        if row.event > 1 {
            return Err(Error::Parse {
                row: i + 2,
                col: 0,
                detail: format!("event must be 0 or 1, got {}", row.event),
            });
        }
        let record = SurvivalRecord::new(row.time_months, row.event == 1);
        record.validate()?;
        risks.push(row.risk);
        records.push(record);
    }
    let theta = match theta {
        "auto" => median_threshold(&risks)?,
        t => t
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Validation(format!("--theta must be 'auto' or a number, got '{t}'")))?,
    };
    let groups = risk_groups(&risks, theta);
    let (high, low) = split_by_group(&records, &groups);
    write_text(high_path, &kaplan_meier(&high).to_csv())?;
    write_text(low_path, &kaplan_meier(&low).to_csv())?;
    let n_high = groups.iter().filter(|g| **g == RiskGroup::High).count();
    println!("theta = {theta}: {n_high} high-risk, {} low-risk patients", groups.len() - n_high);
    match log_rank(&high, &low) {
        Ok(lr) => println!("log-rank chi2 = {:.4}, p = {:.4e}", lr.chi2, lr.p),
        Err(e) => log::warn!("log-rank test skipped: {e}"),
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Parse { row: pos.line() as usize, col: 0, detail: format!("{}: {e}", path.display()) },
        None => Error::Validation(format!("{}: {e}", path.display())),
    }
}

const COVARIATES: [(&str, &str); 4] =
    [("grade", "Grade 3 vs 1-2"), ("size", "Size > 20 mm"), ("age", "Age > 55"), ("ln", "LN positive")];

pub fn coxph(clinical: &Path, covariates: &str, out: &Path) -> Result<()> {
    let mut selected = Vec::new();
    for name in covariates.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let j = COVARIATES
            .iter()
            .position(|(key, _)| *key == name)
            .ok_or_else(|| Error::Validation(format!("unknown covariate '{name}'; expected grade, size, age or ln")))?;
        if selected.contains(&j) {
            return Err(Error::Validation(format!("covariate '{name}' listed twice")));
        }
        selected.push(j);
    }
    if selected.is_empty() {
        return Err(Error::Validation("no covariates selected".into()));
    }
    let rows = read_clinical_csv(clinical)?;
    let mut data = Vec::with_capacity(rows.len() * selected.len());
    let mut records = Vec::with_capacity(rows.len());
    for row in &rows {
        let coded = binarize_clinical(&row.raw)?;
        data.extend(selected.iter().map(|&j| coded.coxph[j]));
        records.push(row.record);
    }
    let x = Tensor::matrix(rows.len(), selected.len(), data)?;
    let labels: Vec<&str> = selected.iter().map(|&j| COVARIATES[j].1).collect();
    let (uni, multi) = univariate_and_multivariate(&x, &records, &labels)?;
    write_text(out, &render_hazard_comparison_csv(&uni, &multi)?)?;
    print!("{}", render_hazard_comparison_text(&uni, &multi)?);
    Ok(())
}

pub fn gradcheck(seed: u64) -> Result<()> {
    let reports = gradient_suite(seed)?;
    let mut failed = Vec::new();
    for r in &reports {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<32} {:>6} coords  max rel err {:.3e}  {status}", r.name, r.n_coords, r.max_rel_error);
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}
