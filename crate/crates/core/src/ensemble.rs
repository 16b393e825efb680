//! Bagged w_LPPD + SVM ensemble with accuracy-weighted voting.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{bagging_sample, BagSample, Dataset};
use crate::error::{Error, Result};
use crate::rng;
use crate::svm::{fit_svm, GridResult, MulticlassSvm, SvmConfig};
use crate::wlppd::{fit_wlppd, Projector, WlppdConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    /// Number of bagging units `K`.
    pub units: usize,
    /// Row sampling ratio `delta_1`.
    pub delta_rows: f64,
    /// Feature sampling ratio `delta_2`.
    pub delta_features: f64,
    /// Weight each unit's vote by its per-class training recall instead of
    /// its overall training accuracy.
    pub per_class_weights: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { units: 5, delta_rows: 0.7, delta_features: 0.5, per_class_weights: false }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.units == 0 {
            return Err(Error::param("ensemble needs at least one unit"));
        }
        for d in [self.delta_rows, self.delta_features] {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::param(format!("sampling ratio {d} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleUnit {
    pub bag: BagSample,
    pub projector: Projector,
    pub svm: MulticlassSvm,
    pub grid: GridResult,
    /// Training accuracy over the full training set.
    pub weight: f64,
    /// Training recall per class (index `c - 1`); zero for absent classes.
    pub class_weights: Vec<f64>,
}

impl EnsembleUnit {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let sub = x.select(Axis(1), &self.bag.feature_indices);
        let z = self.projector.project(sub.view())?;
        self.svm.predict(z.view())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub units: Vec<EnsembleUnit>,
    pub n_classes: usize,
    pub n_features: usize,
    pub per_class_weights: bool,
}

/// Fraction of predictions equal to the truth.
pub fn classifier_weight(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truth.len() {
        return Err(Error::shape("classifier weight needs equal, non-empty inputs"));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

fn class_recalls(predictions: &[usize], truth: &[usize], n_classes: usize) -> Vec<f64> {
    let mut hit = vec![0usize; n_classes];
    let mut tot = vec![0usize; n_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        tot[t - 1] += 1;
        if p == t {
            hit[t - 1] += 1;
        }
    }
    hit.iter().zip(&tot).map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 }).collect()
}

/// Scores `score[c - 1] = sum_k weight(k, c) [pred_k = c]` and the winning
/// class; ties go to the lowest class.
pub fn weighted_vote(
    predictions: &[usize],
    n_classes: usize,
    weight: impl Fn(usize, usize) -> f64,
) -> (Vec<f64>, usize) {
    let mut scores = vec![0.0; n_classes];
    for (k, &p) in predictions.iter().enumerate() {
        scores[p - 1] += weight(k, p);
    }
    let mut best = 0;
    for c in 1..n_classes {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    (scores, best + 1)
}

pub fn fit_ensemble(
    train: &Dataset,
    cfg: &EnsembleConfig,
    wlppd: &WlppdConfig,
    svm: &SvmConfig,
    seed: u64,
) -> Result<EnsembleModel> {
    cfg.validate()?;
    let mut units = Vec::with_capacity(cfg.units);
    for k in 0..cfg.units {
        let unit_seed = rng::derive(seed, k as u64);
        let bag = bagging_sample(train, cfg.delta_rows, cfg.delta_features, rng::derive(unit_seed, 0))?;
        let sub = train.select_rows(&bag.sample_indices).select_features(&bag.feature_indices);
        let projector = fit_wlppd(&sub, wlppd, rng::derive(unit_seed, 1))?;
        let z = projector.project(sub.features.view())?;
        let (model, grid) = fit_svm(z.view(), &sub.labels, train.n_classes, svm, rng::derive(unit_seed, 2))?;
        let mut unit =
            EnsembleUnit { bag, projector, svm: model, grid, weight: 0.0, class_weights: Vec::new() };
        let pred = unit.predict(train.features.view())?;
        unit.weight = classifier_weight(&pred, &train.labels)?;
        unit.class_weights = class_recalls(&pred, &train.labels, train.n_classes);
        log::debug!("ensemble unit {k}: weight {:.4}, grid {:?}", unit.weight, unit.grid);
        units.push(unit);
    }
    Ok(EnsembleModel {
        units,
        n_classes: train.n_classes,
        n_features: train.n_features(),
        per_class_weights: cfg.per_class_weights,
    })
}

impl EnsembleModel {
    /// Per-unit predictions, `out[k][i]`.
    pub fn unit_predictions(&self, x: ArrayView2<f64>) -> Result<Vec<Vec<usize>>> {
        if x.ncols() != self.n_features {
            return Err(Error::shape(format!(
                "ensemble expects {} features, got {}",
                self.n_features,
                x.ncols()
            )));
        }
        self.units.iter().map(|u| u.predict(x)).collect()
    }

    fn weight(&self, k: usize, c: usize) -> f64 {
        if self.per_class_weights {
            self.units[k].class_weights[c - 1]
        } else {
            self.units[k].weight
        }
    }

    /// Per-class scores and the winning label for every row.
    pub fn vote(&self, x: ArrayView2<f64>) -> Result<Vec<(Vec<f64>, usize)>> {
        let per_unit = self.unit_predictions(x)?;
        Ok((0..x.nrows())
            .map(|i| {
                let preds: Vec<usize> = per_unit.iter().map(|p| p[i]).collect();
                weighted_vote(&preds, self.n_classes, |k, c| self.weight(k, c))
            })
            .collect())
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.vote(x)?.into_iter().map(|(_, l)| l).collect())
    }
}
