//! Dense linear algebra helpers shared by the projection and selection code.
//!
//! Data matrices are `ndarray` arrays; small square problems are handed to
//! `nalgebra` for factorizations.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

pub fn column_means(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}

/// Squared Euclidean distance between two rows.
#[inline]
pub fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration. Stops when successive estimates differ by less than
/// `tol * max(1, estimate)`.
pub fn power_iteration(a: ArrayView2<f64>, tol: f64, max_iters: usize) -> f64 {
    let d = a.nrows();
    if d == 0 {
        return 0.0;
    }
    // a deterministic start with no zero entries
    let mut v = Array1::from_shape_fn(d, |i| 1.0 + (i as f64) * 1e-3);
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let w = a.dot(&v);
        let next = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let done = (next - estimate).abs() <= tol * next.abs().max(1.0);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eigen_ascending(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Flip a vector so that its first entry with magnitude above `1e-12` is
/// positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Real eigenpairs of a general square matrix.
///
/// Eigenvalues come from the real Schur form; pairs whose imaginary part
/// exceeds `imag_tol` are dropped. Each eigenvector is the right singular
/// vector of `A - lambda I` with the smallest singular value; an eigenvalue
/// repeated `m` times (within a relative `1e-10`) takes the `m` smallest.
pub fn real_eigenpairs(a: &DMatrix<f64>, imag_tol: f64) -> Result<Vec<(f64, DVector<f64>)>> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::Shape("eigenproblem needs a square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let schur = a.clone().try_schur(f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical("Schur decomposition did not converge".into())
    })?;
    let mut reals: Vec<f64> = schur
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= imag_tol)
        .map(|z| z.re)
        .collect();
    reals.sort_by(f64::total_cmp);

    let scale = a.norm().max(1.0);
    let mut out = Vec::with_capacity(reals.len());
    let mut i = 0;
    while i < reals.len() {
        let mut j = i + 1;
        while j < reals.len() && (reals[j] - reals[i]).abs() <= 1e-10 * scale {
            j += 1;
        }
        let m = j - i;
        let lambda = reals[i..j].iter().sum::<f64>() / m as f64;
        let shifted = a - DMatrix::identity(d, d) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
        for &k in idx.iter().take(m) {
            let mut v: DVector<f64> = v_t.row(k).transpose();
            let n = v.norm();
            if n > 0.0 {
                v /= n;
            }
            fix_sign(&mut v);
            out.push((lambda, v));
        }
        i = j;
    }
    Ok(out)
}
