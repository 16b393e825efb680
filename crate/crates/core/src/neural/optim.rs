use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A model whose trainable parameters can be visited as flat slices in a
/// fixed order. Gradients and momentum buffers reuse the model's own type.
pub trait ParamSet: Clone {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn flatten(&self) -> Vec<f64> {
        self.slices().into_iter().flatten().copied().collect()
    }

    fn assign(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn pretraining(epochs: usize) -> Self {
        Self { epochs, learning_rate: 0.1, momentum: 0.9, batch_size: 32 }
    }

    pub fn fine_tuning(epochs: usize) -> Self {
        Self { epochs, learning_rate: 0.01, momentum: 0.9, batch_size: 32 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("epochs and batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::param("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Velocity buffers for momentum descent.
#[derive(Debug, Clone)]
pub struct Momentum<P> {
    pub velocity: P,
}

impl<P: ParamSet> Momentum<P> {
    pub fn new(params: &P) -> Self {
        Self { velocity: params.zeros_like() }
    }

    pub fn reset(&mut self) {
        for s in self.velocity.slices_mut() {
            s.fill(0.0);
        }
    }
}

/// `v <- momentum * v - lr * g; p <- p + v`.
pub fn gd_step<P: ParamSet>(params: &mut P, grads: &P, state: &mut Momentum<P>, lr: f64, momentum: f64) {
    let gs = grads.slices();
    let vs = state.velocity.slices_mut();
    let ps = params.slices_mut();
    assert_eq!(ps.len(), gs.len());
    for ((p, v), g) in ps.into_iter().zip(vs).zip(gs) {
        assert_eq!(p.len(), g.len(), "gradient shape mismatch");
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = momentum * *vi - lr * gi;
            *pi += *vi;
        }
    }
}

/// Full-data losses recorded by [`train_guarded`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Loss before training followed by the loss after each accepted epoch.
    pub losses: Vec<f64>,
    pub final_learning_rate: f64,
    pub halvings: usize,
    /// Set when no step size within the halving budget lowered the loss and
    /// the increase was negligible, so training stopped at a stationary point.
    pub converged_early: bool,
}

impl TrainHistory {
    pub fn first(&self) -> f64 {
        self.losses[0]
    }

    pub fn last(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

pub const MAX_LR_HALVINGS: usize = 10;

/// Relative loss increase tolerated after the halving budget is spent, read
/// as stalling at a stationary point rather than divergence.
const STALL_TOLERANCE: f64 = 1e-6;

/// Mini-batch momentum descent whose full-data loss never increases across
/// accepted epochs. An epoch that raises the loss is rolled back, the
/// velocity is cleared and the learning rate halved before retrying, at most
/// [`MAX_LR_HALVINGS`] times per epoch.
pub fn train_guarded<P, G, L>(
    params: &mut P,
    n_samples: usize,
    cfg: &TrainConfig,
    seed: u64,
    mut batch_grad: G,
    mut full_loss: L,
) -> Result<TrainHistory>
where
    P: ParamSet,
    G: FnMut(&P, &[usize]) -> Result<P>,
    L: FnMut(&P) -> Result<f64>,
{
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::param("cannot train on zero samples"));
    }
    let mut rng = rng::seeded(seed);
    let mut state = Momentum::new(params);
    let mut lr = cfg.learning_rate;
    let mut prev = full_loss(params)?;
    if !prev.is_finite() {
        return Err(Error::Divergence("initial loss is not finite".into()));
    }
    let mut history =
        TrainHistory { losses: vec![prev], final_learning_rate: lr, halvings: 0, converged_early: false };
    let mut order: Vec<usize> = (0..n_samples).collect();

    'epochs: for epoch in 0..cfg.epochs {
        let snapshot = params.clone();
        let mut attempts = 0;
        loop {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let g = batch_grad(params, batch)?;
                gd_step(params, &g, &mut state, lr, cfg.momentum);
            }
            let loss = full_loss(params)?;
            if loss.is_finite() && loss <= prev {
                prev = loss;
                history.losses.push(loss);
                break;
            }
            *params = snapshot.clone();
            if attempts == MAX_LR_HALVINGS {
                if loss.is_finite() && loss - prev <= STALL_TOLERANCE * prev.abs() {
                    debug!("stopping at epoch {epoch}: no descent within the halving budget");
                    history.converged_early = true;
                    break 'epochs;
                }
                return Err(Error::Divergence(format!(
                    "loss rose from {prev} to {loss} at epoch {epoch} after {MAX_LR_HALVINGS} learning-rate halvings"
                )));
            }
            state.reset();
            lr *= 0.5;
            attempts += 1;
            history.halvings += 1;
        }
    }
    history.final_learning_rate = lr;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Scalar(Vec<f64>);

    impl ParamSet for Scalar {
        fn slices(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn slices_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn plain_step() {
        let mut p = Scalar(vec![0.0]);
        let g = Scalar(vec![1.0]);
        let mut m = Momentum::new(&p);
        gd_step(&mut p, &g, &mut m, 0.1, 0.0);
        assert!((p.0[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn momentum_two_steps() {
        let mut p = Scalar(vec![0.0]);
        let g = Scalar(vec![1.0]);
        let mut m = Momentum::new(&p);
        gd_step(&mut p, &g, &mut m, 0.1, 0.9);
        gd_step(&mut p, &g, &mut m, 0.1, 0.9);
        assert!((p.0[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn zero_grad_is_noop() {
        let mut p = Scalar(vec![1.5, -2.0]);
        let g = Scalar(vec![0.0, 0.0]);
        let mut m = Momentum::new(&p);
        gd_step(&mut p, &g, &mut m, 0.1, 0.9);
        assert_eq!(p.0, vec![1.5, -2.0]);
    }

    #[test]
    fn flatten_roundtrip() {
        let mut p = Scalar(vec![1.0, 2.0, 3.0]);
        let flat = p.flatten();
        p.assign(&[4.0, 5.0, 6.0]);
        assert_eq!(p.0, vec![4.0, 5.0, 6.0]);
        assert_eq!(flat, vec![1.0, 2.0, 3.0]);
        assert_eq!(p.n_params(), 3);
    }

    #[test]
    fn guard_halves_oversized_step() {
        // f(w) = w^2 with lr 1.5 overshoots; the guard must recover
        let mut p = Scalar(vec![1.0]);
        let cfg = TrainConfig { epochs: 20, learning_rate: 1.5, momentum: 0.0, batch_size: 1 };
        let hist = train_guarded(
            &mut p,
            1,
            &cfg,
            0,
            |q, _| Ok(Scalar(vec![2.0 * q.0[0]])),
            |q| Ok(q.0[0] * q.0[0]),
        )
        .unwrap();
        assert!(hist.halvings >= 1);
        assert!(hist.losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(hist.last() < 1e-3);
    }

    #[test]
    fn divergence_reported() {
        // loss increases whatever the step: gradient points the wrong way
        let mut p = Scalar(vec![1.0]);
        let cfg = TrainConfig { epochs: 3, learning_rate: 1.0, momentum: 0.0, batch_size: 1 };
        let res = train_guarded(
            &mut p,
            1,
            &cfg,
            0,
            |q, _| Ok(Scalar(vec![-2.0 * q.0[0]])),
            |q| Ok(q.0[0] * q.0[0]),
        );
        assert!(matches!(res, Err(Error::Divergence(_))));
        assert_eq!(p.0, vec![1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::pretraining(1) }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..TrainConfig::pretraining(1) }.validate().is_err());
        assert!(TrainConfig::fine_tuning(5).validate().is_ok());
    }
}
