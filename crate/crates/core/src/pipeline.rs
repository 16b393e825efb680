//! The staged classification pipeline and its ablations.
//!
//! Stages, each adding one step to the previous:
//!
//! - `OF`: original features, SVM.
//! - `DF`: HESSAE deep features, SVM.
//! - `HF`: original and deep features concatenated, SVM.
//! - `HF&L1`: hybrid features reduced by the L1 selector, SVM.
//! - `HF&L1&Ensemble`: the selected features fed to the w_LPPD + SVM ensemble.
//!
//! All stages of one run share the normalization, the HESSAE model and the L1
//! selection, so their accuracies compare on identical splits.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, NormStats};
use crate::ensemble::{fit_ensemble, EnsembleConfig, EnsembleModel};
use crate::error::{Error, Result};
use crate::hessae::{self, hybrid_features, HessaeConfig, HessaeModel};
use crate::lasso::{select_with_validation, L1Selection, LassoConfig};
use crate::metrics::accuracy;
use crate::rng::{self, offsets};
use crate::svm::{fit_svm, GridResult, MulticlassSvm, SvmConfig};
use crate::wlppd::WlppdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "OF")]
    Original,
    #[serde(rename = "DF")]
    Deep,
    #[serde(rename = "HF")]
    Hybrid,
    #[serde(rename = "HF&L1")]
    HybridL1,
    #[serde(rename = "HF&L1&Ensemble")]
    Full,
}

impl Stage {
    /// Every stage in report order.
    pub const ALL: [Stage; 5] = [Stage::Original, Stage::Deep, Stage::Hybrid, Stage::HybridL1, Stage::Full];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Original => "OF",
            Stage::Deep => "DF",
            Stage::Hybrid => "HF",
            Stage::HybridL1 => "HF&L1",
            Stage::Full => "HF&L1&Ensemble",
        }
    }

    pub fn needs_hessae(self) -> bool {
        self != Stage::Original
    }

    pub fn needs_selection(self) -> bool {
        matches!(self, Stage::HybridL1 | Stage::Full)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Ok(match key.as_str() {
            "of" | "original" => Stage::Original,
            "df" | "deep" => Stage::Deep,
            "hf" | "hybrid" => Stage::Hybrid,
            "hf&l1" | "hf-l1" | "l1" => Stage::HybridL1,
            "hf&l1&ensemble" | "full" | "ensemble" => Stage::Full,
            _ => return Err(Error::param(format!("unknown stage '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub hessae: HessaeConfig,
    pub lasso: LassoConfig,
    pub wlppd: WlppdConfig,
    pub svm: SvmConfig,
    pub ensemble: EnsembleConfig,
}

impl PipelineConfig {
    pub fn with_hessae(hessae: HessaeConfig) -> Self {
        Self {
            hessae,
            lasso: LassoConfig::default(),
            wlppd: WlppdConfig::default(),
            svm: SvmConfig::default(),
            ensemble: EnsembleConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hessae.validate()?;
        self.lasso.validate()?;
        self.wlppd.validate()?;
        self.svm.validate()?;
        self.ensemble.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Classifier {
    Svm { model: MulticlassSvm, grid: GridResult },
    Ensemble(EnsembleModel),
}

impl Classifier {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        match self {
            Classifier::Svm { model, .. } => model.predict(x),
            Classifier::Ensemble(e) => e.predict(x),
        }
    }
}

/// A trained pipeline for one stage; predicts from raw (unnormalized) rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub stage: Stage,
    pub norm: NormStats,
    pub hessae: Option<HessaeModel>,
    pub selection: Option<L1Selection>,
    pub classifier: Classifier,
}

impl TrainedPipeline {
    pub fn n_features(&self) -> usize {
        self.norm.min.len()
    }

    /// Feature matrix the classifier sees, from normalized rows.
    fn stage_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        stage_features(self.stage, x, self.hessae.as_ref(), self.selection.as_ref())
    }

    pub fn predict(&self, raw: ArrayView2<f64>) -> Result<Vec<usize>> {
        let x = self.norm.apply(&raw.to_owned())?;
        let f = self.stage_features(x.view())?;
        self.classifier.predict(f.view())
    }

    /// Softmax-head predictions of the HESSAE network, when present.
    pub fn predict_hessae(&self, raw: ArrayView2<f64>) -> Result<Option<Vec<usize>>> {
        match &self.hessae {
            None => Ok(None),
            Some(m) => {
                let x = self.norm.apply(&raw.to_owned())?;
                m.predict(x.view()).map(Some)
            }
        }
    }
}

fn stage_features(
    stage: Stage,
    x: ArrayView2<f64>,
    model: Option<&HessaeModel>,
    selection: Option<&L1Selection>,
) -> Result<Array2<f64>> {
    if stage == Stage::Original {
        return Ok(x.to_owned());
    }
    let model = model.ok_or_else(|| Error::param(format!("stage {stage} needs a HESSAE model")))?;
    let deep = model.extract_deep_features(x)?;
    match stage {
        Stage::Deep => Ok(deep),
        Stage::Hybrid => hybrid_features(x, deep.view()),
        _ => {
            let sel = selection.ok_or_else(|| Error::param(format!("stage {stage} needs an L1 selection")))?;
            sel.mask.apply(hybrid_features(x, deep.view())?.view())
        }
    }
}

/// Test accuracy and cost of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub accuracy: f64,
    /// Columns the classifier saw.
    pub n_features: usize,
    /// Seconds spent fitting and scoring this stage's classifier; shared
    /// HESSAE and selection time is reported separately.
    pub seconds: f64,
}

/// Everything produced by one train/test run over several stages.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub stages: Vec<StageOutcome>,
    /// Test accuracy of the HESSAE softmax head, if a model was trained.
    pub hessae_accuracy: Option<f64>,
    pub hessae_seconds: f64,
    pub selection: Option<L1Selection>,
    pub kappa_scores: Vec<(f64, f64)>,
    pub pipelines: Vec<TrainedPipeline>,
}

/// Validation evaluator used when choosing the lasso penalty.
fn svm_evaluator(cfg: &SvmConfig, seed: u64) -> impl FnMut(&Dataset, &Dataset) -> Result<f64> + '_ {
    move |tr, va| {
        let (m, _) = fit_svm(tr.features.view(), &tr.labels, tr.n_classes, cfg, seed)?;
        Ok(accuracy(&m.predict(va.features.view())?, &va.labels))
    }
}

fn fit_classifier(stage: Stage, train: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<Classifier> {
    if stage == Stage::Full {
        let m = fit_ensemble(train, &cfg.ensemble, &cfg.wlppd, &cfg.svm, rng::derive(seed, offsets::ENSEMBLE))?;
        Ok(Classifier::Ensemble(m))
    } else {
        let s = rng::derive(seed, offsets::SVM + stage as u64);
        let (model, grid) = fit_svm(train.features.view(), &train.labels, train.n_classes, &cfg.svm, s)?;
        Ok(Classifier::Svm { model, grid })
    }
}

/// Train the requested stages on `train` and score them on `test`. Both are
/// raw; min-max statistics come from `train`.
pub fn run_stages(
    train: &Dataset,
    test: &Dataset,
    cfg: &PipelineConfig,
    stages: &[Stage],
    seed: u64,
) -> Result<RunOutcome> {
    run(train, Some(test), cfg, stages, seed)
}

/// Train a single stage on raw `train`.
pub fn train_pipeline(train: &Dataset, cfg: &PipelineConfig, stage: Stage, seed: u64) -> Result<TrainedPipeline> {
    let mut out = run(train, None, cfg, &[stage], seed)?;
    Ok(out.pipelines.remove(0))
}

fn run(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &PipelineConfig,
    stages: &[Stage],
    seed: u64,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if test.is_some_and(|t| t.n_features() != train.n_features()) {
        return Err(Error::shape("train and test widths differ"));
    }
    let norm = NormStats::fit(&train.features);
    let tr = train.with_features(norm.apply(&train.features)?, train.feature_ids.clone())?;
    let te = match test {
        Some(t) => Some(t.with_features(norm.apply(&t.features)?, t.feature_ids.clone())?),
        None => None,
    };

    let mut out = RunOutcome {
        stages: Vec::new(),
        hessae_accuracy: None,
        hessae_seconds: 0.0,
        selection: None,
        kappa_scores: Vec::new(),
        pipelines: Vec::new(),
    };
    let mut model: Option<HessaeModel> = None;
    if stages.iter().any(|s| s.needs_hessae()) {
        let t = Instant::now();
        let m = hessae::fit(&tr, &cfg.hessae, rng::derive(seed, offsets::HESSAE))?;
        out.hessae_seconds = t.elapsed().as_secs_f64();
        if let Some(te) = &te {
            out.hessae_accuracy = Some(accuracy(&m.predict(te.features.view())?, &te.labels));
        }
        model = Some(m);
    }
    if stages.iter().any(|s| s.needs_selection()) {
        let m = model.as_ref().expect("trained above");
        let hf = hybrid_features(tr.features.view(), m.extract_deep_features(tr.features.view())?.view())?;
        let names = hybrid_names(&tr.feature_ids, m.deep_dim());
        let hf_data = tr.with_features(hf, names)?;
        let (sel, scores) = select_with_validation(
            &hf_data,
            &cfg.lasso,
            rng::derive(seed, offsets::LASSO),
            svm_evaluator(&cfg.svm, rng::derive(seed, offsets::LASSO + 1)),
        )?;
        log::info!("L1 selection keeps {} of {} hybrid features", sel.mask.len(), sel.mask.n_source);
        out.selection = Some(sel);
        out.kappa_scores = scores;
    }

    for &stage in stages {
        let t = Instant::now();
        let hmodel = if stage.needs_hessae() { model.as_ref() } else { None };
        let sel = if stage.needs_selection() { out.selection.as_ref() } else { None };
        let ftr = stage_features(stage, tr.features.view(), hmodel, sel)?;
        let names = (1..=ftr.ncols()).map(|i| format!("z{i}")).collect();
        let stage_train = tr.with_features(ftr, names)?;
        let classifier = fit_classifier(stage, &stage_train, cfg, seed)?;
        if let Some(te) = &te {
            let fte = stage_features(stage, te.features.view(), hmodel, sel)?;
            let acc = accuracy(&classifier.predict(fte.view())?, &te.labels);
            log::info!("stage {stage}: accuracy {acc:.4} on {} features", stage_train.n_features());
            out.stages.push(StageOutcome {
                stage,
                accuracy: acc,
                n_features: stage_train.n_features(),
                seconds: t.elapsed().as_secs_f64(),
            });
        }
        out.pipelines.push(TrainedPipeline {
            stage,
            norm: norm.clone(),
            hessae: hmodel.cloned(),
            selection: sel.cloned(),
            classifier,
        });
    }
    Ok(out)
}

fn hybrid_names(original: &[String], q: usize) -> Vec<String> {
    original.iter().cloned().chain((1..=q).map(|i| format!("deep{i}"))).collect()
}
