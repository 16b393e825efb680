//! Comparison methods: PCA, LPP, and plain stacked (sparse) autoencoders.

use log::warn;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_holdout_indices, Dataset};
use crate::error::{Error, Result};
use crate::hessae::{self, HessaeConfig, HessaeModel};
use crate::linalg::{column_means, from_na, sym_eigen_ascending, to_na};
use crate::metrics::accuracy;
use crate::rng;
use crate::svm::{fit_svm, SvmConfig};
use crate::wlppd::knn_affinity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `d x k`, orthonormal columns.
    pub components: Array2<f64>,
    /// Variance along each component, non-increasing.
    pub variances: Vec<f64>,
}

pub fn pca_fit(x: ArrayView2<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if k == 0 || k > d {
        return Err(Error::param(format!("PCA dimension {k} not in 1..={d}")));
    }
    if n < 2 {
        return Err(Error::shape("PCA needs at least two rows"));
    }
    let mean = column_means(&x.to_owned());
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let (values, vectors) = sym_eigen_ascending(&to_na(&cov));
    let order: Vec<usize> = (0..d).rev().take(k).collect();
    let variances: Vec<f64> = order.iter().map(|&i| values[i].max(0.0)).collect();
    let scale = variances.first().copied().unwrap_or(0.0).max(1.0);
    if variances.iter().any(|&v| v <= 1e-12 * scale) {
        warn!("PCA keeps {k} components but the data have lower rank");
    }
    let mut components = Array2::zeros((d, k));
    for (c, &i) in order.iter().enumerate() {
        let mut v = vectors.column(i).into_owned();
        crate::linalg::fix_sign(&mut v);
        for r in 0..d {
            components[[r, c]] = v[r];
        }
    }
    Ok(PcaModel { mean, components, variances })
}

impl PcaModel {
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::shape(format!("PCA expects {} columns, got {}", self.mean.len(), x.ncols())));
        }
        Ok((&x - &self.mean).dot(&self.components))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LppModel {
    /// `d x k`, unit-norm columns.
    pub projection: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub k_nn: usize,
}

/// Solve `XLX^T w = lambda (XDX^T + eps I) w` and keep the `k` smallest pairs.
pub fn lpp_fit(x: ArrayView2<f64>, k: usize, k_nn: usize, epsilon: f64) -> Result<LppModel> {
    let d = x.ncols();
    if k == 0 || k > d {
        return Err(Error::param(format!("LPP dimension {k} not in 1..={d}")));
    }
    let graph = knn_affinity(x, k_nn)?;
    let a = to_na(&graph.xlx(x));
    let mut b = to_na(&graph.xdx(x));
    for i in 0..d {
        b[(i, i)] += epsilon;
    }
    let b = (&b + b.transpose()) * 0.5;
    let chol = b
        .cholesky()
        .ok_or_else(|| Error::Numerical("X D X^T + eps I is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Cholesky factor is singular".into()))?;
    let c = &l_inv * &a * l_inv.transpose();
    let (values, vectors) = sym_eigen_ascending(&c);
    let back = l_inv.transpose() * vectors.columns(0, k);
    let mut w = DMatrix::zeros(d, k);
    for j in 0..k {
        let mut v = back.column(j).into_owned();
        v /= v.norm();
        crate::linalg::fix_sign(&mut v);
        w.set_column(j, &v);
    }
    Ok(LppModel { projection: from_na(&w), eigenvalues: values[..k].to_vec(), k_nn })
}

impl LppModel {
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.projection.nrows() {
            return Err(Error::shape(format!(
                "LPP expects {} columns, got {}",
                self.projection.nrows(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.projection))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducerKind {
    Pca,
    Lpp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reducer {
    Pca(PcaModel),
    Lpp(LppModel),
}

impl Reducer {
    pub fn fit(kind: ReducerKind, x: ArrayView2<f64>, k: usize, k_nn: usize) -> Result<Self> {
        Ok(match kind {
            ReducerKind::Pca => Reducer::Pca(pca_fit(x, k)?),
            ReducerKind::Lpp => Reducer::Lpp(lpp_fit(x, k, k_nn, 1e-6)?),
        })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Reducer::Pca(m) => m.transform(x),
            Reducer::Lpp(m) => m.transform(x),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Reducer::Pca(m) => m.components.ncols(),
            Reducer::Lpp(m) => m.projection.ncols(),
        }
    }
}

/// Candidate output dimensions: 25%, 50% and 75% of `d`, at least 1, deduplicated.
pub fn dimension_grid(d: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [0.25, 0.5, 0.75].iter().map(|r| ((r * d as f64).round() as usize).clamp(1, d)).collect();
    ks.dedup();
    ks
}

/// Pick the output dimension by SVM accuracy on a 20% stratified validation
/// split, then refit the reducer on all of `train`. Ties keep the smaller `k`.
/// Returns the reducer and `(k, validation accuracy)` per candidate.
pub fn fit_reducer_by_validation(
    train: &Dataset,
    kind: ReducerKind,
    k_nn: usize,
    svm: &SvmConfig,
    seed: u64,
) -> Result<(Reducer, Vec<(usize, f64)>)> {
    let split = stratified_holdout_indices(train, 0.2, rng::derive(seed, 0))?;
    let (fit_part, val_part) = split.apply(train);
    let mut scores = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for k in dimension_grid(train.n_features()) {
        let r = Reducer::fit(kind, fit_part.features.view(), k, k_nn)?;
        let z = r.transform(fit_part.features.view())?;
        let (m, _) = fit_svm(z.view(), &fit_part.labels, train.n_classes, svm, rng::derive(seed, 1))?;
        let acc = accuracy(&m.predict(r.transform(val_part.features.view())?.view())?, &val_part.labels);
        scores.push((k, acc));
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((k, acc));
        }
    }
    let (k, _) = best.ok_or_else(|| Error::param("empty dimension grid"))?;
    Ok((Reducer::fit(kind, train.features.view(), k, k_nn)?, scores))
}

/// Plain stacked autoencoder with a softmax head: no embedding units.
/// `sparse = false` drops the KL term (SAE); `true` keeps it (SSAE).
pub fn train_sae_ssae(train: &Dataset, cfg: &HessaeConfig, sparse: bool, seed: u64) -> Result<HessaeModel> {
    hessae::fit(train, &plain_config(cfg, sparse), seed)
}

pub fn plain_config(cfg: &HessaeConfig, sparse: bool) -> HessaeConfig {
    let mut c = cfg.clone();
    c.hybrid = false;
    if !sparse {
        c.sparsity.beta = 0.0;
    }
    c
}
