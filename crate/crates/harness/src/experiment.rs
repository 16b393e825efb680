//! The repeated hold-out protocol: each repeat `r` splits with seed
//! `seed + r` and trains every requested method on that one split.

use std::time::Instant;

use hybridae::baselines::plain_config;
use hybridae::dataset::{load_table, stratified_holdout_indices, Dataset, NormStats, Split};
use hybridae::hessae::{self, HessaeConfig};
use hybridae::metrics::accuracy;
use hybridae::pipeline::{run_stages, Stage, TrainedPipeline};
use hybridae::rng::{self, offsets};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{MethodRow, RepeatInfo, Report, ReportKind};

/// Name of the row holding the HESSAE softmax-head accuracy in ablations.
pub const HESSAE_ROW: &str = "HESSAE";

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    Ok(load_table(&cfg.dataset.path, &cfg.dataset.label_column())?)
}

pub fn repeat_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    cfg.seed.wrapping_add(r as u64)
}

pub fn repeat_split(data: &Dataset, cfg: &ExperimentConfig, r: usize) -> Result<Split> {
    Ok(stratified_holdout_indices(data, cfg.test_fraction, repeat_seed(cfg, r))?)
}

pub fn index_digest(indices: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in indices {
        h.update((i as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One method's result on one repeat.
struct Cell {
    accuracy: f64,
    n_features: Option<usize>,
    seconds: f64,
}

/// Run `methods` over every repeat. `eval` returns one cell per method name,
/// in order, for a given train/test split and repeat seed.
fn protocol<F>(cfg: &ExperimentConfig, data: &Dataset, kind: ReportKind, methods: &[String], mut eval: F) -> Result<Report>
where
    F: FnMut(&Dataset, &Dataset, u64) -> hybridae::Result<Vec<Cell>>,
{
    cfg.validate()?;
    let start = Instant::now();
    let m = methods.len();
    let mut acc = vec![Vec::with_capacity(cfg.repeats); m];
    let mut feats = vec![Vec::with_capacity(cfg.repeats); m];
    let mut secs = vec![Vec::with_capacity(cfg.repeats); m];
    let mut repeats = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let t = Instant::now();
        let seed = repeat_seed(cfg, r);
        let split = repeat_split(data, cfg, r)?;
        let (train, test) = split.apply(data);
        info!("repeat {}/{}: {} train, {} test rows", r + 1, cfg.repeats, train.n_samples(), test.n_samples());
        let outcome = eval(&train, &test, seed);
        let error = match outcome {
            Ok(cells) => {
                for (k, c) in cells.into_iter().enumerate() {
                    acc[k].push(Some(c.accuracy));
                    feats[k].push(c.n_features);
                    secs[k].push(c.seconds);
                }
                None
            }
            Err(e) => {
                warn!("repeat {} failed: {e}", r + 1);
                for k in 0..m {
                    acc[k].push(None);
                    feats[k].push(None);
                    secs[k].push(0.0);
                }
                Some(e.to_string())
            }
        };
        repeats.push(RepeatInfo {
            repeat: r,
            seed,
            train_digest: index_digest(&split.train),
            test_digest: index_digest(&split.test),
            n_train: split.train.len(),
            n_test: split.test.len(),
            error,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, name)| MethodRow::new(name.clone(), acc[k].clone(), feats[k].clone(), secs[k].clone()))
        .collect();
    Ok(Report {
        kind,
        dataset: cfg.dataset.path.display().to_string(),
        std_convention: "population".into(),
        rows,
        repeats,
        config: cfg.clone(),
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

fn stage_protocol(
    cfg: &ExperimentConfig,
    data: &Dataset,
    stages: &[Stage],
    kind: ReportKind,
    with_hessae: bool,
    mut models: Option<&mut Vec<TrainedPipeline>>,
) -> Result<Report> {
    let pcfg = cfg.pipeline();
    let mut names: Vec<String> = stages.iter().map(|s| s.name().to_string()).collect();
    let hessae_row = with_hessae && stages.iter().any(|s| s.needs_hessae());
    if hessae_row {
        names.push(HESSAE_ROW.into());
    }
    protocol(cfg, data, kind, &names, |train, test, seed| {
        let mut out = run_stages(train, test, &pcfg, stages, seed)?;
        if let Some(m) = models.as_deref_mut() {
            m.append(&mut out.pipelines);
        }
        let mut cells: Vec<Cell> = out
            .stages
            .iter()
            .map(|s| Cell { accuracy: s.accuracy, n_features: Some(s.n_features), seconds: s.seconds })
            .collect();
        if hessae_row {
            cells.push(Cell {
                accuracy: out.hessae_accuracy.expect("HESSAE trained"),
                n_features: None,
                seconds: out.hessae_seconds,
            });
        }
        Ok(cells)
    })
}

/// The configured stage over every repeat.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    run_experiment_on(cfg, &load_dataset(cfg)?)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<Report> {
    stage_protocol(cfg, data, &[cfg.stage], ReportKind::Experiment, false, None)
}

/// As [`run_experiment_on`], also returning the trained pipeline of every
/// successful repeat.
pub fn run_experiment_with_models(cfg: &ExperimentConfig, data: &Dataset) -> Result<(Report, Vec<TrainedPipeline>)> {
    let mut models = Vec::new();
    let report = stage_protocol(cfg, data, &[cfg.stage], ReportKind::Experiment, false, Some(&mut models))?;
    Ok((report, models))
}

/// Every stage, OF through the full pipeline, on shared splits, followed by
/// the HESSAE softmax-head row.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Report> {
    run_ablation_on(cfg, &load_dataset(cfg)?, &Stage::ALL)
}

/// Ablation over a subset of stages; rows follow the fixed stage order.
pub fn run_ablation_on(cfg: &ExperimentConfig, data: &Dataset, stages: &[Stage]) -> Result<Report> {
    let mut ordered = stages.to_vec();
    ordered.sort();
    ordered.dedup();
    stage_protocol(cfg, data, &ordered, ReportKind::Ablation, true, None)
}

/// Deep autoencoder classifiers compared on the same splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AeVariant {
    /// Plain stack, no sparsity penalty.
    Sae,
    /// Plain stack with the KL sparsity penalty.
    Ssae,
    Hessae,
    /// HESSAE without the sparsity penalty.
    Hesae,
}

impl AeVariant {
    pub const ALL: [AeVariant; 4] = [AeVariant::Sae, AeVariant::Ssae, AeVariant::Hessae, AeVariant::Hesae];

    pub fn name(self) -> &'static str {
        match self {
            AeVariant::Sae => "SAE",
            AeVariant::Ssae => "SSAE",
            AeVariant::Hessae => "HESSAE",
            AeVariant::Hesae => "HESAE",
        }
    }

    pub fn config(self, base: &HessaeConfig) -> HessaeConfig {
        match self {
            AeVariant::Sae => plain_config(base, false),
            AeVariant::Ssae => plain_config(base, true),
            AeVariant::Hessae => base.clone(),
            AeVariant::Hesae => {
                let mut c = base.clone();
                c.sparsity.beta = 0.0;
                c
            }
        }
    }
}

/// Train each variant on min-max normalized splits. Every variant uses the
/// same seed as the pipeline's HESSAE, so the `HESSAE` row here matches the
/// ablation's.
pub fn compare(cfg: &ExperimentConfig) -> Result<Report> {
    compare_on(cfg, &load_dataset(cfg)?, &AeVariant::ALL)
}

pub fn compare_on(cfg: &ExperimentConfig, data: &Dataset, variants: &[AeVariant]) -> Result<Report> {
    let base = cfg.hessae.resolve();
    let names: Vec<String> = variants.iter().map(|v| v.name().to_string()).collect();
    protocol(cfg, data, ReportKind::Compare, &names, |train, test, seed| {
        let norm = NormStats::fit(&train.features);
        let tr = train.with_features(norm.apply(&train.features)?, train.feature_ids.clone())?;
        let te = norm.apply(&test.features)?;
        variants
            .iter()
            .map(|v| {
                let t = Instant::now();
                let model = hessae::fit(&tr, &v.config(&base), rng::derive(seed, offsets::HESSAE))?;
                let acc = accuracy(&model.predict(te.view())?, &test.labels);
                info!("{}: accuracy {acc:.4}", v.name());
                Ok(Cell { accuracy: acc, n_features: Some(model.deep_dim()), seconds: t.elapsed().as_secs_f64() })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::HessaeSection;
    use hybridae::dataset::synthetic_small_sample;
    use hybridae::svm::SvmConfig;

    fn quick_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_dataset("synthetic.csv");
        cfg.repeats = 2;
        cfg.hessae = HessaeSection { hidden: vec![12, 6], lambda: 1e-4, beta: 3.0, rho: 0.05, epochs: 5 };
        cfg.svm = SvmConfig { gamma_scales: vec![1.0], c_grid: vec![1.0, 10.0], ..Default::default() };
        cfg.ensemble.units = 2;
        cfg
    }

    #[test]
    fn ablation_rows_in_fixed_order_and_paired() {
        let data = synthetic_small_sample(1, 3.0);
        let cfg = quick_config();
        let report = run_ablation_on(&cfg, &data, &[Stage::Full, Stage::Original, Stage::Hybrid]).unwrap();
        let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["OF", "HF", "HF&L1&Ensemble", HESSAE_ROW]);
        for row in &report.rows {
            assert_eq!(row.accuracies.len(), 2);
            let ok = row.successful();
            assert!((row.mean - hybridae::metrics::mean(&ok)).abs() < 1e-12);
            assert!((row.std - hybridae::metrics::population_std(&ok)).abs() < 1e-12);
        }
        assert!(report.failed_repeats().is_empty());
        let s0 = repeat_split(&data, &cfg, 0).unwrap();
        assert_eq!(report.repeats[0].train_digest, index_digest(&s0.train));
        assert_ne!(report.repeats[0].train_digest, report.repeats[1].train_digest);
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let data = synthetic_small_sample(2, 3.0);
        let mut cfg = quick_config();
        cfg.repeats = 1;
        cfg.stage = Stage::Original;
        let report = run_experiment_on(&cfg, &data).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].std, 0.0);
    }

    #[test]
    fn reports_are_reproducible() {
        let data = synthetic_small_sample(3, 3.0);
        let mut cfg = quick_config();
        cfg.stage = Stage::HybridL1;
        let a = run_experiment_on(&cfg, &data).unwrap();
        let b = run_experiment_on(&cfg, &data).unwrap();
        assert_eq!(a.without_timings(), b.without_timings());
    }

    #[test]
    fn kept_models_reproduce_report_accuracy() {
        let data = synthetic_small_sample(6, 3.0);
        let mut cfg = quick_config();
        cfg.stage = Stage::Hybrid;
        let (report, models) = run_experiment_with_models(&cfg, &data).unwrap();
        assert_eq!(models.len(), 2);
        for (r, m) in models.iter().enumerate() {
            let (_, test) = repeat_split(&data, &cfg, r).unwrap().apply(&data);
            let acc = accuracy(&m.predict(test.features.view()).unwrap(), &test.labels);
            assert_eq!(Some(acc), report.rows[0].accuracies[r]);
        }
    }

    #[test]
    fn compare_hessae_matches_ablation() {
        let data = synthetic_small_sample(4, 3.0);
        let mut cfg = quick_config();
        cfg.repeats = 1;
        let cmp = compare_on(&cfg, &data, &AeVariant::ALL).unwrap();
        assert_eq!(cmp.rows.len(), 4);
        let abl = run_ablation_on(&cfg, &data, &[Stage::Deep]).unwrap();
        assert_eq!(cmp.row("HESSAE").unwrap().accuracies, abl.row(HESSAE_ROW).unwrap().accuracies);
    }

    #[test]
    fn failed_repeats_are_marked() {
        let data = synthetic_small_sample(5, 3.0);
        let mut cfg = quick_config();
        cfg.repeats = 2;
        let names = vec!["m".to_string()];
        let mut calls = 0;
        let report = protocol(&cfg, &data, ReportKind::Experiment, &names, |_, _, _| {
            calls += 1;
            if calls == 2 {
                Err(hybridae::Error::Numerical("injected".into()))
            } else {
                Ok(vec![Cell { accuracy: 0.5, n_features: None, seconds: 0.0 }])
            }
        })
        .unwrap();
        assert_eq!(report.failed_repeats(), vec![1]);
        assert_eq!(report.rows[0].accuracies, vec![Some(0.5), None]);
        assert_eq!(report.rows[0].mean, 0.5);
    }
}
