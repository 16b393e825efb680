use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::layer::{sigmoid, DenseLayer};
use super::optim::{train_guarded, ParamSet, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Average activations are clamped to `[KL_EPS, 1 - KL_EPS]` before the KL
/// term is evaluated.
pub const KL_EPS: f64 = 1e-8;

/// Sparsity target `rho`, KL weight `beta` and L2 weight `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityConfig {
    pub rho: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl SparsityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::param(format!("sparsity target {} not in (0, 1)", self.rho)));
        }
        if !(self.beta >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::param("beta and lambda must be non-negative"));
        }
        Ok(())
    }

    /// The same configuration without the sparsity penalty.
    pub fn without_sparsity(self) -> Self {
        Self { beta: 0.0, ..self }
    }
}

/// `sum_j rho ln(rho / rho_hat_j) + (1 - rho) ln((1 - rho) / (1 - rho_hat_j))`.
pub fn kl_sparsity(rho: f64, rho_hat: &[f64]) -> f64 {
    rho_hat
        .iter()
        .map(|&r| {
            let r = r.clamp(KL_EPS, 1.0 - KL_EPS);
            rho * (rho / r).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - r)).ln()
        })
        .sum()
}

/// Column means of a batch of hidden activations.
pub fn mean_activation(hidden: &Array2<f64>) -> Array1<f64> {
    hidden.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(hidden.ncols()))
}

fn frob2(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Mean squared reconstruction error plus `lambda (|W1|_F^2 + |W2|_F^2)` plus
/// `beta` times the KL sparsity term.
pub fn ae_loss(
    x: ArrayView2<f64>,
    recon: ArrayView2<f64>,
    encoder: &DenseLayer,
    decoder: &DenseLayer,
    rho_hat: &[f64],
    cfg: &SparsityConfig,
) -> Result<f64> {
    if x.dim() != recon.dim() {
        return Err(Error::shape(format!(
            "input {:?} and reconstruction {:?} differ",
            x.dim(),
            recon.dim()
        )));
    }
    if rho_hat.len() != encoder.d_out() {
        return Err(Error::shape("average activation length differs from hidden size"));
    }
    let n = x.nrows().max(1) as f64;
    let sse: f64 = x.iter().zip(recon.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let l2 = cfg.lambda * (frob2(&encoder.weights) + frob2(&decoder.weights));
    let kl = if cfg.beta > 0.0 { cfg.beta * kl_sparsity(cfg.rho, rho_hat) } else { 0.0 };
    Ok(sse / n + l2 + kl)
}

/// Encoder/decoder pair trained to reconstruct its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub encoder: DenseLayer,
    pub decoder: DenseLayer,
}

impl ParamSet for Autoencoder {
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.encoder.weights.as_slice().unwrap(),
            self.encoder.bias.as_slice().unwrap(),
            self.decoder.weights.as_slice().unwrap(),
            self.decoder.bias.as_slice().unwrap(),
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.encoder.weights.as_slice_mut().unwrap(),
            self.encoder.bias.as_slice_mut().unwrap(),
            self.decoder.weights.as_slice_mut().unwrap(),
            self.decoder.bias.as_slice_mut().unwrap(),
        ]
    }
}

impl Autoencoder {
    pub fn new(d_in: usize, d_hidden: usize, rng: &mut Rng) -> Self {
        Self {
            encoder: DenseLayer::glorot(d_in, d_hidden, rng),
            decoder: DenseLayer::glorot(d_hidden, d_in, rng),
        }
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.encoder.forward(x)
    }

    /// Objective on `x` with the average activation taken over all of `x`.
    pub fn loss(&self, x: ArrayView2<f64>, cfg: &SparsityConfig) -> Result<f64> {
        let h = self.encoder.forward(x)?;
        let r = self.decoder.forward(h.view())?;
        let rho_hat = mean_activation(&h);
        ae_loss(x, r.view(), &self.encoder, &self.decoder, rho_hat.as_slice().unwrap(), cfg)
    }

    /// Greedy layer training with the guarded mini-batch descent. The
    /// average activation in the KL term is taken per mini-batch.
    pub fn fit(
        &mut self,
        x: ArrayView2<f64>,
        sparsity: &SparsityConfig,
        train: &TrainConfig,
        seed: u64,
    ) -> Result<TrainHistory> {
        sparsity.validate()?;
        if x.ncols() != self.encoder.d_in() {
            return Err(Error::shape("training data width differs from encoder input"));
        }
        train_guarded(
            self,
            x.nrows(),
            train,
            seed,
            |ae, batch| {
                let xb = x.select(Axis(0), batch);
                backprop_ae(xb.view(), &ae.encoder, &ae.decoder, sparsity).map(|(_, g)| g)
            },
            |ae| ae.loss(x, sparsity),
        )
    }
}

/// Loss and exact gradients of [`ae_loss`] with respect to every weight and
/// bias, including the dependence of the average activation on the encoder.
/// The gradient comes back as an [`Autoencoder`] of matching shapes.
pub fn backprop_ae(
    x: ArrayView2<f64>,
    encoder: &DenseLayer,
    decoder: &DenseLayer,
    cfg: &SparsityConfig,
) -> Result<(f64, Autoencoder)> {
    if decoder.d_in() != encoder.d_out() || decoder.d_out() != encoder.d_in() {
        return Err(Error::shape("decoder does not mirror encoder"));
    }
    let n = x.nrows().max(1) as f64;
    let mut z1 = encoder.pre_activation(x)?;
    z1.mapv_inplace(sigmoid);
    let h = z1;
    let mut r = decoder.pre_activation(h.view())?;
    r.mapv_inplace(sigmoid);
    let rho_hat = mean_activation(&h);
    let loss = ae_loss(x, r.view(), encoder, decoder, rho_hat.as_slice().unwrap(), cfg)?;

    // output layer: d/dR of the mean squared error, through the sigmoid
    let mut delta2 = &r - &x;
    ndarray::Zip::from(&mut delta2).and(&r).for_each(|d, &ri| *d *= 2.0 / n * ri * (1.0 - ri));
    let mut dec_w = delta2.t().dot(&h);
    dec_w.scaled_add(2.0 * cfg.lambda, &decoder.weights);
    let dec_b = delta2.sum_axis(Axis(0));

    let mut dh = delta2.dot(&decoder.weights);
    if cfg.beta > 0.0 {
        let rho = cfg.rho;
        let kl_grad = rho_hat.mapv(|p| {
            let p = p.clamp(KL_EPS, 1.0 - KL_EPS);
            cfg.beta / n * (-rho / p + (1.0 - rho) / (1.0 - p))
        });
        dh += &kl_grad.view().insert_axis(Axis(0));
    }
    ndarray::Zip::from(&mut dh).and(&h).for_each(|d, &hi| *d *= hi * (1.0 - hi));
    let delta1 = dh;
    let mut enc_w = delta1.t().dot(&x);
    enc_w.scaled_add(2.0 * cfg.lambda, &encoder.weights);
    let enc_b = delta1.sum_axis(Axis(0));

    Ok((
        loss,
        Autoencoder {
            encoder: DenseLayer { weights: enc_w, bias: enc_b },
            decoder: DenseLayer { weights: dec_w, bias: dec_b },
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::finite_difference_gradient;
    use crate::rng;
    use rand::Rng as _;

    fn random_ae(d: usize, h: usize, n: usize, seed: u64) -> (Autoencoder, Array2<f64>) {
        let mut r = rng::seeded(seed);
        let mut ae = Autoencoder::new(d, h, &mut r);
        for s in ae.slices_mut() {
            for v in s.iter_mut() {
                *v = r.random_range(-1.0..1.0);
            }
        }
        let x = Array2::from_shape_fn((n, d), |_| r.random_range(0.0..1.0));
        (ae, x)
    }

    #[test]
    fn kl_examples() {
        assert!(kl_sparsity(0.05, &[0.05, 0.05]).abs() < 1e-15);
        // 0.02 ln(0.04) + 0.98 ln(1.96), evaluated independently
        let expected = 0.02 * (0.02f64 / 0.5).ln() + 0.98 * (0.98f64 / 0.5).ln();
        assert!((expected - 0.5951).abs() < 5e-5);
        assert!((kl_sparsity(0.02, &[0.5]) - 0.595_108_067_280_213_3).abs() < 1e-12);
        let clamped = kl_sparsity(0.05, &[0.0]);
        assert!(clamped.is_finite() && clamped > 0.5);
    }

    #[test]
    fn loss_decomposition() {
        let (ae, x) = random_ae(4, 3, 6, 2);
        let h = ae.encode(x.view()).unwrap();
        let rho = mean_activation(&h);
        let plain = SparsityConfig { rho: 0.1, beta: 0.0, lambda: 0.0 };
        let r = ae.decoder.forward(h.view()).unwrap();
        let mse = (&x - &r).mapv(|v| v * v).sum() / 6.0;
        let l = ae_loss(x.view(), r.view(), &ae.encoder, &ae.decoder, rho.as_slice().unwrap(), &plain).unwrap();
        assert!((l - mse).abs() < 1e-14);

        let decay = SparsityConfig { rho: 0.1, beta: 0.0, lambda: 0.3 };
        let l = ae_loss(x.view(), x.view(), &ae.encoder, &ae.decoder, rho.as_slice().unwrap(), &decay).unwrap();
        let expect = 0.3 * (frob2(&ae.encoder.weights) + frob2(&ae.decoder.weights));
        assert!((l - expect).abs() < 1e-12);

        let ad = SparsityConfig { rho: 0.02, beta: 5.0, lambda: 1e-5 };
        assert!(ad.validate().is_ok());
        assert!(ae.loss(x.view(), &ad).unwrap() > ae.loss(x.view(), &ad.without_sparsity()).unwrap());
    }

    #[test]
    fn loss_shape_mismatch() {
        let (ae, x) = random_ae(4, 3, 6, 2);
        let cfg = SparsityConfig { rho: 0.1, beta: 1.0, lambda: 0.0 };
        assert!(ae_loss(x.view(), x.slice(ndarray::s![..3, ..]), &ae.encoder, &ae.decoder, &[0.1; 3], &cfg).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (ae, x) = random_ae(5, 4, 7, 9);
        let cfg = SparsityConfig { rho: 0.2, beta: 0.7, lambda: 0.01 };
        let (_, g) = backprop_ae(x.view(), &ae.encoder, &ae.decoder, &cfg).unwrap();
        let flat = ae.flatten();
        let mut probe = ae.clone();
        let numeric = finite_difference_gradient(
            |p| {
                probe.assign(p);
                probe.loss(x.view(), &cfg).unwrap()
            },
            &flat,
            1e-5,
        );
        for (a, b) in g.flatten().iter().zip(&numeric) {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
            assert!(rel <= 1e-5 || (a - b).abs() < 1e-10, "analytic {a} numeric {b}");
        }
    }

    #[test]
    fn l2_gradient_is_two_lambda_w() {
        // with x = recon impossible to force, isolate the penalty by differencing
        let (ae, x) = random_ae(3, 2, 4, 5);
        let base = SparsityConfig { rho: 0.2, beta: 0.0, lambda: 0.0 };
        let decay = SparsityConfig { lambda: 0.25, ..base };
        let (_, g0) = backprop_ae(x.view(), &ae.encoder, &ae.decoder, &base).unwrap();
        let (_, g1) = backprop_ae(x.view(), &ae.encoder, &ae.decoder, &decay).unwrap();
        let diff = &g1.encoder.weights - &g0.encoder.weights;
        let expect = &ae.encoder.weights * 0.5;
        assert!((diff - expect).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn zero_loss_zero_gradient() {
        // a 1-1-1 autoencoder whose output equals its input exactly: x = 0.5,
        // encoder produces h = 0.5 and the decoder maps back to 0.5
        let ae = Autoencoder { encoder: DenseLayer::zeros(1, 1), decoder: DenseLayer::zeros(1, 1) };
        let x = Array2::from_elem((3, 1), 0.5);
        let cfg = SparsityConfig { rho: 0.5, beta: 0.0, lambda: 0.0 };
        let (loss, g) = backprop_ae(x.view(), &ae.encoder, &ae.decoder, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_reduces_loss_and_is_deterministic() {
        let mut r = rng::seeded(3);
        let x = Array2::from_shape_fn((40, 6), |_| r.random_range(0.0..1.0));
        let cfg = SparsityConfig { rho: 0.05, beta: 3.0, lambda: 1e-4 };
        let train = TrainConfig::pretraining(5);
        let mut a = Autoencoder::new(6, 4, &mut rng::seeded(1));
        let mut b = a.clone();
        let ha = a.fit(x.view(), &cfg, &train, 8).unwrap();
        let hb = b.fit(x.view(), &cfg, &train, 8).unwrap();
        assert!(ha.losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(ha.last() < ha.first());
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }
}
