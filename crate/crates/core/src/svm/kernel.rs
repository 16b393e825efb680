use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    Linear,
    /// `exp(-gamma |a - b|^2)`.
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { gamma } if !(*gamma > 0.0) => {
                Err(Error::param(format!("RBF gamma must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match *self {
            KernelSpec::Linear => a.dot(&b),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    /// `K[i, j] = k(a_i, b_j)` using one matrix product.
    pub fn matrix(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
        let mut g = a.dot(&b.t());
        if let KernelSpec::Rbf { gamma } = *self {
            let na = row_sq_norms(a);
            let nb = row_sq_norms(b);
            for ((i, j), v) in g.indexed_iter_mut() {
                let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
                *v = (-gamma * d2).exp();
            }
        }
        g
    }
}

pub(crate) fn row_sq_norms(a: ArrayView2<f64>) -> Array1<f64> {
    a.map_axis(Axis(1), |r| r.dot(&r))
}
