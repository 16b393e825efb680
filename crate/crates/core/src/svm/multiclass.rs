//! One-vs-one multiclass decomposition.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::smo::{sign_label, train_binary, BinarySvm};
use crate::error::{Error, Result};

/// Binary model for the pair `(positive, negative)`; `positive < negative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub positive: usize,
    pub negative: usize,
    pub svm: BinarySvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassSvm {
    pub n_classes: usize,
    /// Classes seen in training, ascending.
    pub classes: Vec<usize>,
    pub pairs: Vec<PairModel>,
    pub c: f64,
    pub kernel: KernelSpec,
}

/// Train all pairwise models over the classes present in `labels` (1-based).
pub fn train_multiclass(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    c: f64,
    kernel: KernelSpec,
) -> Result<MulticlassSvm> {
    if x.nrows() != labels.len() {
        return Err(Error::shape("label count differs from sample count"));
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l > n_classes {
            return Err(Error::param(format!("label {l} outside 1..={n_classes}")));
        }
        buckets[l - 1].push(i);
    }
    let classes: Vec<usize> = (1..=n_classes).filter(|&c| !buckets[c - 1].is_empty()).collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let mut pairs = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for (a_pos, &a) in classes.iter().enumerate() {
        for &b in &classes[a_pos + 1..] {
            let rows: Vec<usize> = buckets[a - 1].iter().chain(&buckets[b - 1]).copied().collect();
            let y: Vec<f64> = rows.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            let sub = x.select(Axis(0), &rows);
            let svm = train_binary(sub.view(), &y, c, kernel)?;
            pairs.push(PairModel { positive: a, negative: b, svm });
        }
    }
    Ok(MulticlassSvm { n_classes, classes, pairs, c, kernel })
}

impl MulticlassSvm {
    pub fn dim(&self) -> usize {
        self.pairs[0].svm.dim()
    }

    pub fn pair(&self, a: usize, b: usize) -> Option<&BinarySvm> {
        self.pairs.iter().find(|p| p.positive == a && p.negative == b).map(|p| &p.svm)
    }

    /// `decisions[i][p]` is the decision value of pair `p` on row `i`.
    pub fn decision_matrix(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.pairs.len()));
        for (p, pm) in self.pairs.iter().enumerate() {
            out.column_mut(p).assign(&pm.svm.decision_batch(x)?);
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let d = self.decision_matrix(x)?;
        Ok(d.rows().into_iter().map(|row| self.vote(row)).collect())
    }

    pub fn predict_one(&self, x: ArrayView1<f64>) -> Result<usize> {
        let x2 = x.insert_axis(Axis(0));
        Ok(self.predict(x2)?[0])
    }

    /// Pairwise majority; ties go to the larger summed |decision| over won
    /// pairs, then to the lower class.
    pub fn vote(&self, decisions: ArrayView1<f64>) -> usize {
        let mut votes = vec![0usize; self.n_classes + 1];
        let mut strength = vec![0.0f64; self.n_classes + 1];
        for (pm, &f) in self.pairs.iter().zip(decisions.iter()) {
            let winner = if sign_label(f) > 0 { pm.positive } else { pm.negative };
            votes[winner] += 1;
            strength[winner] += f.abs();
        }
        let mut best = self.classes[0];
        for &c in &self.classes[1..] {
            if votes[c] > votes[best] || (votes[c] == votes[best] && strength[c] > strength[best]) {
                best = c;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::svm::smo::{kkt_audit, smo_solve};
    use ndarray::array;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn blobs(k: usize, per: usize, sigma: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut r = rng::seeded(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut x = Array2::zeros((k * per, 2));
        let mut y = Vec::new();
        for c in 0..k {
            let centre = [10.0 * c as f64, 10.0 * (c % 2) as f64];
            for i in 0..per {
                let row = c * per + i;
                x[[row, 0]] = centre[0] + noise.sample(&mut r);
                x[[row, 1]] = centre[1] + noise.sample(&mut r);
                y.push(c + 1);
            }
        }
        (x, y)
    }

    #[test]
    fn ten_classes_give_45_models() {
        let (x, y) = blobs(10, 4, 0.5, 1);
        let m = train_multiclass(x.view(), &y, 10, 1.0, KernelSpec::Linear).unwrap();
        assert_eq!(m.pairs.len(), 45);
    }

    #[test]
    fn separated_gaussians_fit_perfectly() {
        let (x, y) = blobs(3, 10, 0.01, 2);
        let m = train_multiclass(x.view(), &y, 3, 10.0, KernelSpec::Rbf { gamma: 0.05 }).unwrap();
        assert_eq!(m.predict(x.view()).unwrap(), y);
    }

    #[test]
    fn two_classes_match_binary_model() {
        let mut r = rng::seeded(5);
        let x = Array2::from_shape_fn((40, 2), |_| r.random_range(-1.0..1.0));
        let y: Vec<usize> = (0..40).map(|i| if x[[i, 0]] - x[[i, 1]] > 0.0 { 1 } else { 2 }).collect();
        let k = KernelSpec::Rbf { gamma: 1.0 };
        let m = train_multiclass(x.view(), &y, 2, 1.0, k).unwrap();
        let yb: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let b = train_binary(x.view(), &yb, 1.0, k).unwrap();
        let pm = m.predict(x.view()).unwrap();
        for i in 0..40 {
            let (l, _) = b.predict(x.row(i)).unwrap();
            assert_eq!(pm[i], if l > 0 { 1 } else { 2 });
        }
    }

    #[test]
    fn vote_tie_rules() {
        let (x, y) = blobs(3, 3, 0.1, 3);
        let m = train_multiclass(x.view(), &y, 3, 1.0, KernelSpec::Linear).unwrap();
        // pairs are (1,2), (1,3), (2,3); a three-way cycle gives one vote each
        assert_eq!(m.vote(array![1.0, -2.0, 3.0].view()), 2);
        assert_eq!(m.vote(array![1.0, -1.0, 1.0].view()), 1);
        assert_eq!(m.vote(array![0.5, 0.5, -4.0].view()), 1);
    }

    #[test]
    fn every_pair_passes_kkt() {
        let (x, y) = blobs(4, 12, 2.0, 8);
        let k = KernelSpec::Rbf { gamma: 0.1 };
        for a in 1..=4 {
            for b in a + 1..=4 {
                let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == a || y[i] == b).collect();
                let yb: Vec<f64> = rows.iter().map(|&i| if y[i] == a { 1.0 } else { -1.0 }).collect();
                let sub = x.select(Axis(0), &rows);
                let sol = smo_solve(sub.view(), &yb, 5.0, k).unwrap();
                assert!(kkt_audit(sub.view(), &yb, &sol, 5.0, k, 1e-3).passed);
            }
        }
    }

    #[test]
    fn deterministic() {
        let (x, y) = blobs(3, 15, 3.0, 4);
        let a = train_multiclass(x.view(), &y, 3, 1.0, KernelSpec::Rbf { gamma: 0.2 }).unwrap();
        let b = train_multiclass(x.view(), &y, 3, 1.0, KernelSpec::Rbf { gamma: 0.2 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(train_multiclass(x.view(), &[2, 2], 3, 1.0, KernelSpec::Linear), Err(Error::SingleClass)));
    }
}
