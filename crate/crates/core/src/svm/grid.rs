//! Hyperparameter grid with stratified k-fold cross-validation.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::multiclass::{train_multiclass, MulticlassSvm};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    /// RBF gamma candidates as multiples of `1/d`.
    pub gamma_scales: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    /// Cross-validation runs on a stratified subsample of at most this many rows.
    pub cv_max_samples: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            gamma_scales: (-4..=4).map(|e| 2f64.powi(e)).collect(),
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            folds: 5,
            cv_max_samples: 1000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::param("C grid must be non-empty and positive"));
        }
        if self.kernel == KernelKind::Rbf
            && (self.gamma_scales.is_empty() || self.gamma_scales.iter().any(|&g| !(g > 0.0)))
        {
            return Err(Error::param("gamma grid must be non-empty and positive"));
        }
        if self.folds < 2 {
            return Err(Error::param("cross-validation needs at least 2 folds"));
        }
        if self.cv_max_samples < self.folds {
            return Err(Error::param("cv_max_samples is smaller than the fold count"));
        }
        Ok(())
    }

    /// Candidate kernels for data of dimension `d`.
    pub fn kernels(&self, d: usize) -> Vec<KernelSpec> {
        match self.kernel {
            KernelKind::Linear => vec![KernelSpec::Linear],
            KernelKind::Rbf => {
                let inv = 1.0 / d.max(1) as f64;
                self.gamma_scales.iter().map(|&s| KernelSpec::Rbf { gamma: s * inv }).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub c: f64,
    pub kernel: KernelSpec,
    pub cv_accuracy: f64,
}

/// Fold id per row; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::seeded(seed);
    let mut out = vec![0; labels.len()];
    let n_classes = labels.iter().copied().max().unwrap_or(0);
    let mut next = 0;
    for c in 1..=n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut r);
        for i in idx {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

/// Stratified subsample of at most `max` rows, sorted. Each class is
/// shuffled and rows are taken in order of their within-class rank fraction,
/// so class proportions are kept.
pub fn stratified_cap(labels: &[usize], max: usize, seed: u64) -> Vec<usize> {
    if labels.len() <= max {
        return (0..labels.len()).collect();
    }
    let mut r = rng::seeded(seed);
    let n_classes = labels.iter().copied().max().unwrap_or(0);
    let mut ranked: Vec<(f64, usize, usize)> = Vec::with_capacity(labels.len());
    for c in 1..=n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut r);
        let n = idx.len() as f64;
        ranked.extend(idx.into_iter().enumerate().map(|(k, i)| ((k as f64 + 0.5) / n, c, i)));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep: Vec<usize> = ranked.into_iter().take(max).map(|t| t.2).collect();
    keep.sort_unstable();
    keep
}

/// Pick `(C, kernel)` by cross-validated accuracy. Ties keep the earlier
/// grid point (smaller gamma, then smaller C).
pub fn grid_search(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    cfg: &SvmConfig,
    seed: u64,
) -> Result<GridResult> {
    cfg.validate()?;
    let keep = stratified_cap(labels, cfg.cv_max_samples, rng::derive(seed, 1));
    let xs = x.select(Axis(0), &keep);
    let ys: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();
    let fold_of = stratified_folds(&ys, cfg.folds, rng::derive(seed, 2));
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.folds)
        .map(|f| {
            let (te, tr): (Vec<usize>, Vec<usize>) = (0..ys.len()).partition(|&i| fold_of[i] == f);
            (tr, te)
        })
        .filter(|(tr, te)| !te.is_empty() && !tr.is_empty())
        .collect();

    let mut best: Option<GridResult> = None;
    for kernel in cfg.kernels(x.ncols()) {
        for &c in &cfg.c_grid {
            let mut correct = 0.0;
            let mut total = 0usize;
            for (tr, te) in &splits {
                let ytr: Vec<usize> = tr.iter().map(|&i| ys[i]).collect();
                let yte: Vec<usize> = te.iter().map(|&i| ys[i]).collect();
                let pred = match train_multiclass(xs.select(Axis(0), tr).view(), &ytr, n_classes, c, kernel) {
                    Ok(m) => m.predict(xs.select(Axis(0), te).view())?,
                    // a fold may hold a single class when data are tiny
                    Err(Error::SingleClass) => vec![ytr[0]; te.len()],
                    Err(e) => return Err(e),
                };
                correct += accuracy(&pred, &yte) * te.len() as f64;
                total += te.len();
            }
            let acc = correct / total as f64;
            log::debug!("svm grid C={c} kernel={kernel:?} cv={acc:.4}");
            if best.as_ref().is_none_or(|b| acc > b.cv_accuracy) {
                best = Some(GridResult { c, kernel, cv_accuracy: acc });
            }
        }
    }
    best.ok_or_else(|| Error::param("empty SVM grid"))
}

/// Grid search followed by a fit on all rows.
pub fn fit_svm(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    cfg: &SvmConfig,
    seed: u64,
) -> Result<(MulticlassSvm, GridResult)> {
    let g = grid_search(x, labels, n_classes, cfg, seed)?;
    let m = train_multiclass(x, labels, n_classes, g.c, g.kernel)?;
    Ok((m, g))
}
