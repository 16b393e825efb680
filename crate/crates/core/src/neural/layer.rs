use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fully connected layer with sigmoid activation.
///
/// `weights` is `d_out x d_in`, so a batch with samples in rows maps to
/// `X W^T + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self { weights: Array2::zeros((d_out, d_in)), bias: Array1::zeros(d_out) }
    }

    /// Uniform init in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let weights = Array2::from_shape_fn((d_out, d_in), |_| rng.random_range(-limit..=limit));
        Self { weights, bias: Array1::zeros(d_out) }
    }

    pub fn d_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn pre_activation(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.d_in() {
            return Err(Error::shape(format!(
                "layer expects {} inputs, got {}",
                self.d_in(),
                x.ncols()
            )));
        }
        let mut z = x.dot(&self.weights.t());
        z += &self.bias.view().insert_axis(Axis(0));
        Ok(z)
    }

    /// `sigmoid(X W^T + b)` for a batch with samples in rows.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut z = self.pre_activation(x)?;
        z.mapv_inplace(sigmoid);
        Ok(z)
    }

    pub fn forward_one(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::shape(format!(
                "layer expects {} inputs, got {}",
                self.d_in(),
                x.len()
            )));
        }
        Ok((self.weights.dot(&x) + &self.bias).mapv(sigmoid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_layer_outputs_half() {
        let l = DenseLayer::zeros(3, 2);
        let out = l.forward(array![[1.0, -4.0, 9.0]].view()).unwrap();
        assert_eq!(out, array![[0.5, 0.5]]);
    }

    #[test]
    fn saturation() {
        let mut l = DenseLayer::zeros(1, 1);
        l.bias[0] = 20.0;
        let out = l.forward_one(array![0.0].view()).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = crate::rng::seeded(4);
        let l = DenseLayer::glorot(4, 3, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let batch = l.forward(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let single = l.forward_one(row).unwrap();
            for j in 0..3 {
                assert!((batch[[i, j]] - single[j]).abs() < 1e-14);
            }
        }
        assert!(batch.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn shape_mismatch() {
        let l = DenseLayer::zeros(3, 2);
        assert!(l.forward(Array2::zeros((2, 4)).view()).is_err());
        assert!(l.forward_one(Array1::zeros(2).view()).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = crate::rng::seeded(1);
        let l = DenseLayer::glorot(10, 5, &mut rng);
        let limit = (6.0f64 / 15.0).sqrt();
        assert!(l.weights.iter().all(|w| w.abs() <= limit));
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }
}
