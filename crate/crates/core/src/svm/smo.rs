//! Soft-margin binary SVM trained by sequential minimal optimization.
//!
//! The dual is `min 1/2 a^T Q a - e^T a` subject to `0 <= a_i <= C` and
//! `y^T a = 0`, with `Q_ij = y_i y_j K(x_i, x_j)`. Each step picks the
//! maximal KKT violator `i` and, among the partners that violate against it,
//! the `j` with the largest second-order decrease of the objective.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use crate::error::{Error, Result};

/// Stopping tolerance on the maximal violating pair.
pub const SMO_TOL: f64 = 1e-3;
/// Kernel cache budget.
pub const KERNEL_CACHE_BYTES: usize = 256 << 20;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support_vectors: Array2<f64>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub kernel: KernelSpec,
}

/// Full dual solution over the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Kernel rows, either precomputed in full or held in a bounded cache.
enum KernelRows<'a> {
    Full(Array2<f64>),
    Cached {
        x: ArrayView2<'a, f64>,
        kernel: KernelSpec,
        rows: HashMap<usize, (u64, std::rc::Rc<Vec<f64>>)>,
        capacity: usize,
        clock: u64,
    },
}

impl<'a> KernelRows<'a> {
    fn new(x: ArrayView2<'a, f64>, kernel: KernelSpec, budget: usize) -> Self {
        let n = x.nrows();
        if n * n * std::mem::size_of::<f64>() <= budget {
            KernelRows::Full(kernel.matrix(x, x).as_standard_layout().into_owned())
        } else {
            let capacity = (budget / (n * std::mem::size_of::<f64>())).max(2);
            KernelRows::Cached { x, kernel, rows: HashMap::new(), capacity, clock: 0 }
        }
    }

    fn row(&mut self, i: usize) -> std::rc::Rc<Vec<f64>> {
        match self {
            KernelRows::Full(m) => std::rc::Rc::new(m.row(i).to_vec()),
            KernelRows::Cached { x, kernel, rows, capacity, clock } => {
                *clock += 1;
                let now = *clock;
                if let Some(entry) = rows.get_mut(&i) {
                    entry.0 = now;
                    return entry.1.clone();
                }
                if rows.len() >= *capacity {
                    // evict the least recently used row
                    let oldest = rows.iter().min_by_key(|(_, (t, _))| *t).map(|(&k, _)| k).unwrap();
                    rows.remove(&oldest);
                }
                let xi = x.row(i);
                let row: Vec<f64> = x.rows().into_iter().map(|xj| kernel.eval(xi, xj)).collect();
                let rc = std::rc::Rc::new(row);
                rows.insert(i, (now, rc.clone()));
                rc
            }
        }
    }

    fn with_row<R>(&mut self, i: usize, f: impl FnOnce(&[f64]) -> R) -> R {
        match self {
            KernelRows::Full(m) => f(m.row(i).as_slice().unwrap()),
            _ => {
                let r = self.row(i);
                f(&r)
            }
        }
    }
}

fn check_binary(x: ArrayView2<f64>, y: &[f64], c: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::shape("label count differs from sample count"));
    }
    if !(c > 0.0) {
        return Err(Error::param(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::param("binary labels must be -1 or +1"));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::param("binary SVM needs both classes"));
    }
    Ok(())
}

/// Solve the dual with the default tolerance and cache budget.
pub fn smo_solve(x: ArrayView2<f64>, y: &[f64], c: f64, kernel: KernelSpec) -> Result<DualSolution> {
    smo_solve_with(x, y, c, kernel, SMO_TOL, KERNEL_CACHE_BYTES)
}

pub fn smo_solve_with(
    x: ArrayView2<f64>,
    y: &[f64],
    c: f64,
    kernel: KernelSpec,
    tol: f64,
    cache_bytes: usize,
) -> Result<DualSolution> {
    check_binary(x, y, c)?;
    kernel.validate()?;
    let n = y.len();
    let mut rows = KernelRows::new(x, kernel, cache_bytes);
    let diag: Vec<f64> = (0..n).map(|i| kernel.eval(x.row(i), x.row(i))).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (10 * n * n).max(10_000);
    let mut iterations = 0;
    let mut converged = false;

    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    while iterations < max_iter {
        // i: maximal violator among I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let v = if y[t] > 0.0 {
                if upper(alpha[t]) { continue; }
                -grad[t]
            } else {
                if lower(alpha[t]) { continue; }
                grad[t]
            };
            if v >= gmax {
                gmax = v;
                i_sel = t;
            }
        }
        if i_sel == usize::MAX {
            converged = true;
            break;
        }
        let i = i_sel;
        let (j_sel, gmax2) = rows.with_row(i, |ki| {
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j_sel = usize::MAX;
            let mut best = f64::INFINITY;
            for t in 0..n {
                if y[t] > 0.0 {
                    if lower(alpha[t]) { continue; }
                    let diff = gmax + grad[t];
                    gmax2 = gmax2.max(grad[t]);
                    if diff > 0.0 {
                        let quad = diag[i] + diag[t] - 2.0 * ki[t];
                        let quad = if quad > 0.0 { quad } else { TAU };
                        let obj = -(diff * diff) / quad;
                        if obj <= best {
                            best = obj;
                            j_sel = t;
                        }
                    }
                } else {
                    if upper(alpha[t]) { continue; }
                    let diff = gmax - grad[t];
                    gmax2 = gmax2.max(-grad[t]);
                    if diff > 0.0 {
                        let quad = diag[i] + diag[t] - 2.0 * ki[t];
                        let quad = if quad > 0.0 { quad } else { TAU };
                        let obj = -(diff * diff) / quad;
                        if obj <= best {
                            best = obj;
                            j_sel = t;
                        }
                    }
                }
            }
            (j_sel, gmax2)
        });
        if gmax + gmax2 < tol || j_sel == usize::MAX {
            converged = true;
            break;
        }
        let j = j_sel;
        iterations += 1;

        let kij = rows.with_row(i, |ki| ki[j]);
        let qij = y[i] * y[j] * kij;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = diag[i] + diag[j] + 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = diag[i] + diag[j] - 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (yi, yj) = (y[i], y[j]);
        rows.with_row(i, |ki| {
            for t in 0..n {
                grad[t] += y[t] * yi * ki[t] * di;
            }
        });
        rows.with_row(j, |kj| {
            for t in 0..n {
                grad[t] += y[t] * yj * kj[t] * dj;
            }
        });
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without meeting tolerance {tol}");
    }

    // bias from the free multipliers, or the midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    Ok(DualSolution { alpha, bias: -rho, iterations, converged })
}

/// Train a soft-margin binary SVM. Labels must be `-1` or `+1`.
pub fn train_binary(x: ArrayView2<f64>, y: &[f64], c: f64, kernel: KernelSpec) -> Result<BinarySvm> {
    let sol = smo_solve(x, y, c, kernel)?;
    Ok(BinarySvm::from_dual(x, y, &sol, c, kernel))
}

impl BinarySvm {
    pub fn from_dual(x: ArrayView2<f64>, y: &[f64], sol: &DualSolution, c: f64, kernel: KernelSpec) -> Self {
        let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        Self {
            support_vectors: x.select(Axis(0), &sv),
            dual_coef: sv.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
            bias: sol.bias,
            c,
            kernel,
        }
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    pub fn decision(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!("SVM expects {} features, got {}", self.dim(), x.len())));
        }
        Ok(self
            .support_vectors
            .rows()
            .into_iter()
            .zip(&self.dual_coef)
            .map(|(s, &a)| a * self.kernel.eval(s, x))
            .sum::<f64>()
            + self.bias)
    }

    pub fn decision_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::shape(format!("SVM expects {} features, got {}", self.dim(), x.ncols())));
        }
        let k = self.kernel.matrix(x, self.support_vectors.view());
        Ok(k.dot(&Array1::from(self.dual_coef.clone())) + self.bias)
    }

    /// `(label, decision)` with label `+1` when the decision is exactly zero.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<(i8, f64)> {
        let f = self.decision(x)?;
        Ok((sign_label(f), f))
    }
}

#[inline]
pub fn sign_label(f: f64) -> i8 {
    if f >= 0.0 {
        1
    } else {
        -1
    }
}

/// Outcome of an independent KKT check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub max_violation: f64,
    pub equality_residual: f64,
    pub bounds_ok: bool,
    pub passed: bool,
}

/// Recompute every margin `y_i f(x_i)` from scratch and check:
/// `a_i = 0 => y f >= 1 - tol`, `0 < a_i < C => |y f - 1| <= tol`,
/// `a_i = C => y f <= 1 + tol`, plus `0 <= a_i <= C` and `|sum a_i y_i| <= 1e-6`.
pub fn kkt_audit(
    x: ArrayView2<f64>,
    y: &[f64],
    sol: &DualSolution,
    c: f64,
    kernel: KernelSpec,
    tol: f64,
) -> KktReport {
    let n = y.len();
    let mut max_violation = 0.0f64;
    for i in 0..n {
        let mut f = sol.bias;
        for j in 0..n {
            if sol.alpha[j] != 0.0 {
                f += sol.alpha[j] * y[j] * kernel.eval(x.row(j), x.row(i));
            }
        }
        let m = y[i] * f;
        let a = sol.alpha[i];
        let v = if a <= 0.0 {
            (1.0 - m).max(0.0)
        } else if a >= c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        max_violation = max_violation.max(v);
    }
    let equality_residual = sol.alpha.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().abs();
    let bounds_ok = sol.alpha.iter().all(|&a| (0.0..=c).contains(&a));
    KktReport {
        max_violation,
        equality_residual,
        bounds_ok,
        passed: max_violation <= tol && equality_residual <= 1e-6 && bounds_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;
    use rand::Rng as _;

    #[test]
    fn two_point_max_margin() {
        let x = array![[0.0], [1.0]];
        let y = [-1.0, 1.0];
        let sol = smo_solve(x.view(), &y, 10.0, KernelSpec::Linear).unwrap();
        let m = BinarySvm::from_dual(x.view(), &y, &sol, 10.0, KernelSpec::Linear);
        // the separator is x = 0.5 with margins at both points
        assert_eq!(m.support_vectors.nrows(), 2);
        for (i, &yi) in y.iter().enumerate() {
            let (label, f) = m.predict(x.row(i)).unwrap();
            assert_eq!(label as f64, yi);
            assert!((f.abs() - 1.0).abs() <= 5e-2);
        }
        assert!(m.decision(array![0.5].view()).unwrap().abs() < 5e-2);
        assert!(kkt_audit(x.view(), &y, &sol, 10.0, KernelSpec::Linear, 1e-3).passed);
    }

    #[test]
    fn xor_with_rbf() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let k = KernelSpec::Rbf { gamma: 1.0 };
        let sol = smo_solve(x.view(), &y, 10.0, k).unwrap();
        let m = BinarySvm::from_dual(x.view(), &y, &sol, 10.0, k);
        for i in 0..4 {
            assert_eq!(m.predict(x.row(i)).unwrap().0 as f64, y[i]);
        }
        assert!(kkt_audit(x.view(), &y, &sol, 10.0, k, 1e-3).passed);
    }

    #[test]
    fn kkt_holds_on_random_problems() {
        for seed in 0..8 {
            let mut r = rng::seeded(seed);
            let n = 40;
            let x = Array2::from_shape_fn((n, 3), |_| r.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..n)
                .map(|i| if x[[i, 0]] + 0.5 * x[[i, 1]] + r.random_range(-0.4..0.4) > 0.0 { 1.0 } else { -1.0 })
                .collect();
            for (c, k) in [(0.5, KernelSpec::Linear), (10.0, KernelSpec::Rbf { gamma: 2.0 })] {
                let sol = smo_solve(x.view(), &y, c, k).unwrap();
                assert!(sol.converged);
                let audit = kkt_audit(x.view(), &y, &sol, c, k, 1e-3);
                assert!(audit.passed, "seed {seed}: {audit:?}");
            }
        }
    }

    #[test]
    fn cached_rows_match_full_matrix() {
        let mut r = rng::seeded(3);
        let x = Array2::from_shape_fn((30, 2), |_| r.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..30).map(|i| if x[[i, 0]] * x[[i, 1]] > 0.0 { 1.0 } else { -1.0 }).collect();
        let k = KernelSpec::Rbf { gamma: 3.0 };
        let full = smo_solve_with(x.view(), &y, 5.0, k, SMO_TOL, usize::MAX).unwrap();
        // room for only a handful of rows
        let small = smo_solve_with(x.view(), &y, 5.0, k, SMO_TOL, 30 * 8 * 4).unwrap();
        assert_eq!(full.iterations, small.iterations);
        for (a, b) in full.alpha.iter().zip(&small.alpha) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_rule() {
        assert_eq!(sign_label(2.3), 1);
        assert_eq!(sign_label(0.0), 1);
        assert_eq!(sign_label(-1e-9), -1);
    }

    #[test]
    fn free_support_vectors_sit_on_margin() {
        let mut r = rng::seeded(12);
        let x = Array2::from_shape_fn((30, 2), |_| r.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..30).map(|i| if x[[i, 0]] > 0.1 { 1.0 } else { -1.0 }).collect();
        let sol = smo_solve(x.view(), &y, 100.0, KernelSpec::Linear).unwrap();
        let m = BinarySvm::from_dual(x.view(), &y, &sol, 100.0, KernelSpec::Linear);
        for i in 0..30 {
            if sol.alpha[i] > 0.0 && sol.alpha[i] < 100.0 {
                let f = m.decision(x.row(i)).unwrap();
                assert!((f.abs() - 1.0).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = array![[0.0], [1.0]];
        assert!(train_binary(x.view(), &[1.0, 1.0], 1.0, KernelSpec::Linear).is_err());
        assert!(train_binary(x.view(), &[1.0, -1.0], 0.0, KernelSpec::Linear).is_err());
        assert!(train_binary(x.view(), &[1.0, 2.0], 1.0, KernelSpec::Linear).is_err());
        let m = train_binary(x.view(), &[1.0, -1.0], 1.0, KernelSpec::Linear).unwrap();
        assert!(m.decision(array![1.0, 2.0].view()).is_err());
    }
}
