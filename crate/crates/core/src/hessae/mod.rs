//! Hybrid-feature embedded stacked sparse autoencoder.
//!
//! Layer 1 is a sparse autoencoder on the inputs. Every later layer `k` sees
//! an [`EmbeddingUnit`] selection of `x ++ h(k-1)` with the same width as
//! `h(k-1)`, chosen by column variance on the training data. After greedy
//! pre-training the encoders are stacked under a softmax head and fine-tuned
//! end to end with the selections frozen.
//!
//! With `hybrid = false` the same code trains a plain stacked (sparse)
//! autoencoder, which is what the SAE/SSAE baselines use.

mod embedding;

pub use embedding::{build_embedding, column_variances, EmbeddingUnit};

use log::info;
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neural::{
    cross_entropy, train_guarded, train_softmax_head, Autoencoder, DenseLayer, ParamSet, SoftmaxLayer,
    SparsityConfig, TrainConfig, TrainHistory,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessaeConfig {
    /// Hidden layer widths `d(1) .. d(K)`.
    pub hidden: Vec<usize>,
    pub sparsity: SparsityConfig,
    pub pretrain: TrainConfig,
    pub head: TrainConfig,
    pub finetune: TrainConfig,
    /// Insert embedding units between layers. `false` gives a plain stack.
    pub hybrid: bool,
}

impl HessaeConfig {
    /// Architecture and penalties with the same epoch budget for every phase.
    pub fn new(hidden: Vec<usize>, lambda: f64, beta: f64, rho: f64, epochs: usize) -> Self {
        Self {
            hidden,
            sparsity: SparsityConfig { rho, beta, lambda },
            pretrain: TrainConfig::pretraining(epochs),
            head: TrainConfig { epochs: epochs.min(200), ..TrainConfig::pretraining(epochs) },
            finetune: TrainConfig::fine_tuning(epochs),
            hybrid: true,
        }
    }

    pub fn pen_digits() -> Self {
        Self::new(vec![80, 30, 10], 1e-4, 4.0, 0.05, 1000)
    }

    pub fn statlog() -> Self {
        Self::new(vec![120, 60, 20], 1e-3, 5.0, 0.05, 1000)
    }

    pub fn urban() -> Self {
        Self::new(vec![600, 300, 80], 1e-3, 2.0, 0.07, 600)
    }

    pub fn small_sample() -> Self {
        Self::new(vec![100, 50, 25], 1e-5, 5.0, 0.02, 500)
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.pretrain.epochs = epochs;
        self.head.epochs = epochs.min(200);
        self.finetune.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param("architecture needs at least one non-empty hidden layer"));
        }
        self.sparsity.validate()?;
        self.pretrain.validate()?;
        self.head.validate()?;
        self.finetune.validate()
    }
}

/// Trainable part of the stacked network: encoders plus the softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackParams {
    pub encoders: Vec<DenseLayer>,
    pub head: SoftmaxLayer,
}

impl ParamSet for StackParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for e in &self.encoders {
            out.push(e.weights.as_slice().unwrap());
            out.push(e.bias.as_slice().unwrap());
        }
        out.extend(self.head.slices());
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for e in &mut self.encoders {
            out.push(e.weights.as_slice_mut().unwrap());
            out.push(e.bias.as_slice_mut().unwrap());
        }
        out.extend(self.head.slices_mut());
        out
    }
}

/// Training losses kept for inspection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HessaeHistory {
    pub pretrain: Vec<TrainHistory>,
    pub head: Option<TrainHistory>,
    pub finetune: Option<TrainHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessaeModel {
    pub n_inputs: usize,
    pub n_classes: usize,
    pub encoders: Vec<DenseLayer>,
    /// Unit `k - 2` feeds encoder `k` (none before the first layer). Empty
    /// for a plain stack.
    pub embeddings: Vec<EmbeddingUnit>,
    pub head: Option<SoftmaxLayer>,
    pub config: HessaeConfig,
    pub history: HessaeHistory,
}

/// Activations of one forward pass.
struct Trace {
    /// Input of encoder k (x itself, or the embedding output).
    inputs: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
}

fn stack_forward(
    encoders: &[DenseLayer],
    embeddings: &[EmbeddingUnit],
    x: ArrayView2<f64>,
) -> Result<Trace> {
    let mut inputs = Vec::with_capacity(encoders.len());
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(encoders.len());
    for (k, enc) in encoders.iter().enumerate() {
        let input = match k {
            0 => x.to_owned(),
            _ if embeddings.is_empty() => hidden[k - 1].clone(),
            _ => embeddings[k - 1].apply_batch(x, hidden[k - 1].view())?,
        };
        let h = enc.forward(input.view())?;
        inputs.push(input);
        hidden.push(h);
    }
    Ok(Trace { inputs, hidden })
}

/// Mean cross-entropy of the stacked network and its exact gradient.
fn stack_backprop(
    params: &StackParams,
    embeddings: &[EmbeddingUnit],
    x: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, StackParams)> {
    let trace = stack_forward(&params.encoders, embeddings, x)?;
    let top = trace.hidden.last().unwrap();
    let (loss, head_grad, mut dh) = params.head.backward(top.view(), labels)?;
    let mut enc_grads = vec![DenseLayer::zeros(0, 0); params.encoders.len()];
    for k in (0..params.encoders.len()).rev() {
        let h = &trace.hidden[k];
        ndarray::Zip::from(&mut dh).and(h).for_each(|d, &hi| *d *= hi * (1.0 - hi));
        let delta = dh;
        let gw = delta.t().dot(&trace.inputs[k]);
        let gb = delta.sum_axis(Axis(0));
        let d_input = delta.dot(&params.encoders[k].weights);
        enc_grads[k] = DenseLayer { weights: gw, bias: gb };
        if k == 0 {
            break;
        }
        dh = if embeddings.is_empty() {
            d_input
        } else {
            // only selected hidden coordinates pass gradient back
            let unit = &embeddings[k - 1];
            let mut back = Array2::zeros(trace.hidden[k - 1].dim());
            for (j, &i) in unit.selected.iter().enumerate() {
                if i >= unit.n_original {
                    let mut col = back.column_mut(i - unit.n_original);
                    col += &d_input.column(j);
                }
            }
            back
        };
    }
    Ok((loss, StackParams { encoders: enc_grads, head: head_grad }))
}

impl HessaeModel {
    pub fn depth(&self) -> usize {
        self.encoders.len()
    }

    /// Width of the last hidden layer.
    pub fn deep_dim(&self) -> usize {
        self.encoders.last().map_or(0, DenseLayer::d_out)
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_inputs {
            return Err(Error::shape(format!(
                "model trained on {} features, got {}",
                self.n_inputs,
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Outputs of every hidden layer.
    pub fn hidden_layers(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_input(x)?;
        Ok(stack_forward(&self.encoders, &self.embeddings, x)?.hidden)
    }

    /// Output of the last hidden layer, `N x d(K)`.
    pub fn extract_deep_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.hidden_layers(x)?.pop().unwrap())
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let head = self.head.as_ref().ok_or_else(|| Error::param("model has no softmax head"))?;
        head.probabilities(self.extract_deep_features(x)?.view())
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let head = self.head.as_ref().ok_or_else(|| Error::param("model has no softmax head"))?;
        head.predict(self.extract_deep_features(x)?.view())
    }

    /// Mean training cross-entropy of the full stack with its head.
    pub fn cross_entropy(&self, data: &Dataset) -> Result<f64> {
        let p = self.predict_proba(data.features.view())?;
        Ok(cross_entropy(&p, &data.labels))
    }
}

/// Greedy layer-wise pre-training. Returns a model without a softmax head.
pub fn pretrain(train: &Dataset, cfg: &HessaeConfig, seed: u64) -> Result<HessaeModel> {
    cfg.validate()?;
    let x = train.features.view();
    let n = x.ncols();
    let mut encoders = Vec::with_capacity(cfg.hidden.len());
    let mut embeddings = Vec::new();
    let mut history = HessaeHistory::default();
    let mut prev: Option<Array2<f64>> = None;

    for (k, &width) in cfg.hidden.iter().enumerate() {
        let input = match &prev {
            None => x.to_owned(),
            Some(h) if cfg.hybrid => {
                let concat = concatenate(Axis(1), &[x, h.view()])
                    .map_err(|e| Error::shape(e.to_string()))?;
                let unit = build_embedding(concat.view(), n, h.ncols())?;
                let out = unit.apply_batch(x, h.view())?;
                embeddings.push(unit);
                out
            }
            Some(h) => h.clone(),
        };
        let mut init_rng = rng::seeded(rng::derive(seed, k as u64));
        let mut ae = Autoencoder::new(input.ncols(), width, &mut init_rng);
        let hist = ae.fit(input.view(), &cfg.sparsity, &cfg.pretrain, rng::derive(seed, 100 + k as u64))?;
        info!(
            "layer {} ({} -> {}): loss {:.6} -> {:.6}, {} halvings",
            k + 1,
            input.ncols(),
            width,
            hist.first(),
            hist.last(),
            hist.halvings
        );
        history.pretrain.push(hist);
        prev = Some(ae.encode(input.view())?);
        encoders.push(ae.encoder);
    }

    Ok(HessaeModel {
        n_inputs: n,
        n_classes: train.n_classes,
        encoders,
        embeddings,
        head: None,
        config: cfg.clone(),
        history,
    })
}

/// Fit the softmax head on the pre-trained features, then train the whole
/// stack on cross-entropy. Embedding selections stay fixed.
pub fn finetune(mut model: HessaeModel, train: &Dataset, seed: u64) -> Result<HessaeModel> {
    if model.encoders.is_empty() {
        return Err(Error::param("model has not been pre-trained"));
    }
    model.check_input(train.features.view())?;
    let x = train.features.view();
    let labels = &train.labels;
    let deep = model.extract_deep_features(x)?;
    let (head, head_hist) = train_softmax_head(
        deep.view(),
        labels,
        model.n_classes,
        &model.config.head,
        rng::derive(seed, 200),
    )?;

    let mut params = StackParams { encoders: std::mem::take(&mut model.encoders), head };
    let embeddings = &model.embeddings;
    let hist = train_guarded(
        &mut params,
        x.nrows(),
        &model.config.finetune,
        rng::derive(seed, 300),
        |p, batch| {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            stack_backprop(p, embeddings, xb.view(), &yb).map(|(_, g)| g)
        },
        |p| {
            let trace = stack_forward(&p.encoders, embeddings, x)?;
            let probs = p.head.probabilities(trace.hidden.last().unwrap().view())?;
            Ok(cross_entropy(&probs, labels))
        },
    )?;
    info!("fine-tune: cross-entropy {:.6} -> {:.6}", hist.first(), hist.last());
    model.encoders = params.encoders;
    model.head = Some(params.head);
    model.history.head = Some(head_hist);
    model.history.finetune = Some(hist);
    Ok(model)
}

/// Pre-train and fine-tune in one call.
pub fn fit(train: &Dataset, cfg: &HessaeConfig, seed: u64) -> Result<HessaeModel> {
    let model = pretrain(train, cfg, seed)?;
    finetune(model, train, seed)
}

/// Row-wise concatenation `(x_1 .. x_n, x'_1 .. x'_q)`, originals first.
pub fn hybrid_features(original: ArrayView2<f64>, deep: ArrayView2<f64>) -> Result<Array2<f64>> {
    if original.nrows() != deep.nrows() {
        return Err(Error::shape(format!(
            "{} original rows vs {} deep rows",
            original.nrows(),
            deep.nrows()
        )));
    }
    concatenate(Axis(1), &[original, deep]).map_err(|e| Error::shape(e.to_string()))
}
