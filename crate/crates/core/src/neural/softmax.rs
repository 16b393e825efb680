use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::optim::{train_guarded, ParamSet, TrainConfig, TrainHistory};
use crate::error::{Error, Result};

/// Linear layer followed by a row-wise softmax. `weights` is `C x q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ParamSet for SoftmaxLayer {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice().unwrap(), self.bias.as_slice().unwrap()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_slice_mut().unwrap(), self.bias.as_slice_mut().unwrap()]
    }
}

impl SoftmaxLayer {
    pub fn zeros(d_in: usize, n_classes: usize) -> Self {
        Self { weights: Array2::zeros((n_classes, d_in)), bias: Array1::zeros(n_classes) }
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.weights.ncols() {
            return Err(Error::shape(format!(
                "softmax expects {} inputs, got {}",
                self.weights.ncols(),
                x.ncols()
            )));
        }
        let mut z = x.dot(&self.weights.t());
        z += &self.bias.view().insert_axis(Axis(0));
        Ok(z)
    }

    /// Class probabilities, one row per sample.
    pub fn probabilities(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut z = self.logits(x)?;
        for mut row in z.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        Ok(z)
    }

    /// 1-based predicted classes; ties go to the lower class.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let p = self.probabilities(x)?;
        Ok(p.rows().into_iter().map(|r| argmax(r.iter().copied()) + 1).collect())
    }

    /// Mean cross-entropy and its gradient with respect to the logits'
    /// inputs and the layer parameters.
    pub(crate) fn backward(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<(f64, SoftmaxLayer, Array2<f64>)> {
        let mut p = self.probabilities(x)?;
        let n = x.nrows().max(1) as f64;
        let loss = cross_entropy(&p, labels);
        for (mut row, &y) in p.rows_mut().into_iter().zip(labels) {
            row[y - 1] -= 1.0;
        }
        p /= n;
        let dw = p.t().dot(&x);
        let db = p.sum_axis(Axis(0));
        let dx = p.dot(&self.weights);
        Ok((loss, SoftmaxLayer { weights: dw, bias: db }, dx))
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Mean negative log-likelihood of 1-based labels under row probabilities.
pub fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = labels.len().max(1) as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[[i, y - 1]].max(1e-300).ln())
        .sum::<f64>()
        / n
}

/// Fit a softmax classifier on fixed features with the guarded descent.
pub fn train_softmax_head(
    features: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(SoftmaxLayer, TrainHistory)> {
    if labels.len() != features.nrows() {
        return Err(Error::shape("label count differs from sample count"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > n_classes) {
        return Err(Error::param(format!("label {bad} outside 1..={n_classes}")));
    }
    let mut head = SoftmaxLayer::zeros(features.ncols(), n_classes);
    let history = train_guarded(
        &mut head,
        features.nrows(),
        cfg,
        seed,
        |h, batch| {
            let xb = features.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            h.backward(xb.view(), &yb).map(|(_, g, _)| g)
        },
        |h| Ok(cross_entropy(&h.probabilities(features)?, labels)),
    )?;
    Ok((head, history))
}
