//! Sparse selection of hybrid features by L1-regularized least squares,
//! solved with proximal gradient descent.
//!
//! The objective is `sum_i (y_i - x_i . w)^2 + kappa |w|_1`. Each iteration
//! takes a gradient step of size `1/M` on the squared loss and applies the
//! soft-threshold map with threshold `kappa / M`, where `M` is twice the
//! largest eigenvalue of `X^T X`.

use std::collections::BTreeSet;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_holdout_indices, Dataset};
use crate::error::{Error, Result};
use crate::linalg::power_iteration;

/// Coefficients at or below this magnitude count as zero.
pub const SUPPORT_EPS: f64 = 1e-10;

/// Multipliers of `kappa_max / 100` tried when choosing `kappa`.
pub const KAPPA_GRID: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];

/// Proximal map of `tau |.|`.
pub fn soft_threshold(u: f64, tau: f64) -> f64 {
    if u > tau {
        u - tau
    } else if u < -tau {
        u + tau
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    pub kappa: f64,
    pub max_iters: usize,
    /// Stop when `|w_new - w_old|_inf` drops below this.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self { kappa: 0.0, max_iters: 20_000, tol: 1e-9 }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) || !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::param("lasso needs kappa >= 0, tol > 0 and max_iters >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub w: Array1<f64>,
    /// Step constant `M`.
    pub lipschitz: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective before the first step and after every step.
    pub objective: Vec<f64>,
}

/// Largest eigenvalue estimate settings for `X^T X`.
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 1000;

/// Solve the L1-regularized least-squares problem on `x` as given.
pub fn lasso_pgd(x: ArrayView2<f64>, y: ArrayView1<f64>, cfg: &LassoConfig) -> Result<LassoFit> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::shape(format!("{} rows vs {} targets", x.nrows(), y.len())));
    }
    let gram = x.t().dot(&x);
    let xty = x.t().dot(&y);
    let yty = y.dot(&y);
    let lipschitz = 2.0 * power_iteration(gram.view(), POWER_TOL, POWER_MAX_ITERS);
    let d = x.ncols();
    if !(lipschitz > 0.0) {
        // X = 0: the solution is w = 0 for every kappa
        return Ok(LassoFit {
            w: Array1::zeros(d),
            lipschitz,
            iterations: 0,
            converged: true,
            objective: vec![yty],
        });
    }
    let objective = |w: &Array1<f64>| -> f64 {
        let sq = yty - 2.0 * w.dot(&xty) + w.dot(&gram.dot(w));
        sq.max(0.0) + cfg.kappa * w.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut w = Array1::<f64>::zeros(d);
    let mut history = vec![objective(&w)];
    let tau = cfg.kappa / lipschitz;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        // gradient of the squared loss: 2 (G w - X^T y)
        let grad = (gram.dot(&w) - &xty) * 2.0;
        let u = &w - &(grad / lipschitz);
        let next = u.mapv(|v| soft_threshold(v, tau));
        let change = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        let obj = objective(&w);
        if !obj.is_finite() {
            return Err(Error::Numerical("lasso objective is not finite".into()));
        }
        history.push(obj);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(LassoFit { w, lipschitz, iterations, converged, objective: history })
}

/// Ordered column subset kept for later application to test data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    pub indices: Vec<usize>,
    pub n_source: usize,
}

impl SelectionMask {
    pub fn all(n: usize) -> Self {
        Self { indices: (0..n).collect(), n_source: n }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_source {
            return Err(Error::shape(format!(
                "mask built for {} columns, got {}",
                self.n_source,
                x.ncols()
            )));
        }
        Ok(x.select(Axis(1), &self.indices))
    }
}

fn fallback_size(n: usize) -> usize {
    n.div_ceil(4).max(1).min(n)
}

/// Indices of the `k` largest magnitudes, ties to the lower index, ascending.
fn top_magnitudes(w: ArrayView1<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Keep the columns with non-zero coefficients. An all-zero `w` falls back to
/// the `ceil(n/4)` largest-magnitude columns.
pub fn select_support(w: ArrayView1<f64>, x: ArrayView2<f64>) -> Result<(SelectionMask, Array2<f64>)> {
    if w.len() != x.ncols() {
        return Err(Error::shape("coefficient count differs from column count"));
    }
    let mut indices: Vec<usize> = (0..w.len()).filter(|&p| w[p].abs() > SUPPORT_EPS).collect();
    if indices.is_empty() {
        warn!("empty lasso support; keeping the {} largest coefficients", fallback_size(w.len()));
        indices = top_magnitudes(w, fallback_size(w.len()));
    }
    let mask = SelectionMask { indices, n_source: x.ncols() };
    let reduced = mask.apply(x)?;
    Ok((mask, reduced))
}

/// Column standardization used inside the multiclass selector. Constant
/// columns become zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let scale = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(col, &m)| (col.iter().map(|&a| (a - m) * (a - m)).sum::<f64>() / n).sqrt())
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| if s > 0.0 { (v - m) / s } else { 0.0 });
        }
        out
    }
}

/// Centered one-vs-rest targets for class `c` (1-based).
fn one_vs_rest(labels: &[usize], c: usize) -> Array1<f64> {
    let y: Array1<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
    let m = y.mean().unwrap_or(0.0);
    y - m
}

/// Smallest `kappa` giving `w = 0` for every class, `max_c 2 |X^T y_c|_inf`,
/// on standardized columns.
pub fn kappa_max(x: ArrayView2<f64>, labels: &[usize], n_classes: usize) -> f64 {
    let xs = Standardizer::fit(x).apply(x);
    (1..=n_classes)
        .map(|c| {
            let y = one_vs_rest(labels, c);
            2.0 * xs.t().dot(&y).iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .fold(0.0, f64::max)
}

/// Result of the multiclass selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Selection {
    pub mask: SelectionMask,
    pub kappa: f64,
    /// Coefficients per class on standardized columns, class order.
    pub coefficients: Vec<Array1<f64>>,
    pub used_fallback: bool,
}

/// One lasso per class on centered 0/1 targets over standardized columns; the
/// kept columns are the union of the per-class supports.
pub fn select_multiclass(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    cfg: &LassoConfig,
) -> Result<L1Selection> {
    if x.nrows() != labels.len() {
        return Err(Error::shape("label count differs from sample count"));
    }
    let xs = Standardizer::fit(x).apply(x);
    let mut union = BTreeSet::new();
    let mut coefficients = Vec::with_capacity(n_classes);
    for c in 1..=n_classes {
        let y = one_vs_rest(labels, c);
        let fit = lasso_pgd(xs.view(), y.view(), cfg)?;
        union.extend((0..fit.w.len()).filter(|&p| fit.w[p].abs() > SUPPORT_EPS));
        coefficients.push(fit.w);
    }
    let n = x.ncols();
    let used_fallback = union.is_empty();
    let indices = if used_fallback {
        let peak: Array1<f64> =
            (0..n).map(|p| coefficients.iter().map(|w| w[p].abs()).fold(0.0, f64::max)).collect();
        warn!("empty lasso support at kappa {}; keeping {} columns", cfg.kappa, fallback_size(n));
        top_magnitudes(peak.view(), fallback_size(n))
    } else {
        union.into_iter().collect()
    };
    Ok(L1Selection { mask: SelectionMask { indices, n_source: n }, kappa: cfg.kappa, coefficients, used_fallback })
}

/// Pick `kappa` from [`KAPPA_GRID`] by validation accuracy on a 20% stratified
/// split of `train`, then refit on all of `train`. `evaluate` trains a
/// classifier on its first argument and returns accuracy on the second. Ties
/// go to the larger `kappa`.
pub fn select_with_validation<F>(
    train: &Dataset,
    base: &LassoConfig,
    seed: u64,
    mut evaluate: F,
) -> Result<(L1Selection, Vec<(f64, f64)>)>
where
    F: FnMut(&Dataset, &Dataset) -> Result<f64>,
{
    let split = stratified_holdout_indices(train, 0.2, seed)?;
    let (fit_part, valid_part) = split.apply(train);
    let kmax = kappa_max(fit_part.features.view(), &fit_part.labels, train.n_classes);
    let mut scores = Vec::with_capacity(KAPPA_GRID.len());
    let mut best: Option<(f64, f64)> = None;
    for factor in KAPPA_GRID {
        let kappa = factor * kmax / 100.0;
        let cfg = LassoConfig { kappa, ..*base };
        let sel = select_multiclass(fit_part.features.view(), &fit_part.labels, train.n_classes, &cfg)?;
        let acc = evaluate(
            &fit_part.select_features(&sel.mask.indices),
            &valid_part.select_features(&sel.mask.indices),
        )?;
        scores.push((kappa, acc));
        if best.is_none_or(|(_, a)| acc >= a) {
            best = Some((kappa, acc));
        }
    }
    let kappa = best.map(|b| b.0).unwrap_or(0.0);
    let sel = select_multiclass(
        train.features.view(),
        &train.labels,
        train.n_classes,
        &LassoConfig { kappa, ..*base },
    )?;
    Ok((sel, scores))
}
