use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::loss::{LossSpec, PredictionHistogram};
use crate::metrics::ConfusionMatrix;
use crate::model::{Mode, Network};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{self, Stream};
use crate::signal::{EpochedDataset, N_CLASSES};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossSpec,
    pub adam: AdamConfig,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            loss: LossSpec::cross_entropy(N_CLASSES),
            adam: AdamConfig::default(),
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid(
                "train",
                format!("epochs ({}) and batch size ({}) must be positive", self.epochs, self.batch_size),
            ));
        }
        self.loss.validate(n_classes)
    }
}

/// Mini-batch Adam. Returns the mean training loss of every epoch.
///
/// Each step records a fresh tape, applies the loss to the log-softmax of the
/// logits, updates with Adam and then enforces the max-norm caps. The network
/// is left in eval mode.
pub fn train(net: &mut Network, data: &EpochedDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let n_classes = net.spec().n_classes;
    cfg.validate(n_classes)?;
    if data.n_trials() == 0 {
        return Err(Error::invalid("train", "training set is empty"));
    }
    let mut shuffle_rng = rng::pcg(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = rng::pcg(cfg.seed, Stream::Dropout);
    let mut adam = AdamState::new(cfg.adam.clone(), net.params().iter().map(|p| &p.value))?;
    let mut order: Vec<usize> = (0..data.n_trials()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    net.set_mode(Mode::Training);
    let outcome = (|| {
        for epoch in 0..cfg.epochs {
            if cfg.shuffle {
                order.shuffle(&mut shuffle_rng);
            }
            let mut total = 0.0;
            for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
                let at = |e: Error| match e {
                    Error::NonFinite { op, context } => Error::NonFinite {
                        op,
                        context: Some(match context {
                            Some(c) => format!("epoch {}, batch {}: {c}", epoch + 1, b + 1),
                            None => format!("epoch {}, batch {}", epoch + 1, b + 1),
                        }),
                    },
                    other => other,
                };
                let labels = data.labels_of(idx);
                let mut tape = Tape::new();
                let params = net.bind(&mut tape);
                let x = tape.constant(data.batch(idx)?);
                let logits = net.forward(&mut tape, &params, x, &mut dropout_rng).map_err(at)?;
                let lp = tape.log_softmax(logits).map_err(at)?;
                let loss = cfg.loss.apply(&mut tape, lp, &labels).map_err(at)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(at(Error::NonFinite {
                        op: "train",
                        context: Some(format!("loss = {value}")),
                    }));
                }
                let mut grads = tape.backward(loss).map_err(at)?;
                let grads: Vec<Tensor> = params
                    .iter()
                    .zip(net.params())
                    .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
                    .collect();
                let grad_refs: Vec<&Tensor> = grads.iter().collect();
                adam.step(net.params_mut().iter_mut().map(|p| &mut p.value), &grad_refs)
                    .map_err(at)?;
                net.apply_max_norm();
                total += value * idx.len() as f64;
            }
            history.push(total / data.n_trials() as f64);
        }
        Ok(())
    })();
    net.set_mode(Mode::Eval);
    outcome.map(|()| history)
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub histogram: PredictionHistogram,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    pub fn from_predictions(n_classes: usize, truth: &[usize], predictions: Vec<usize>) -> Result<Self> {
        let confusion = ConfusionMatrix::from_predictions(n_classes, truth, &predictions)?;
        Ok(Self {
            accuracy: confusion.accuracy(),
            histogram: PredictionHistogram::from(&confusion),
            confusion,
            predictions,
        })
    }
}

const EVAL_BATCH: usize = 32;

/// Eval-mode accuracy, confusion matrix and prediction histogram.
pub fn evaluate(net: &Network, data: &EpochedDataset) -> Result<Evaluation> {
    if data.n_trials() == 0 {
        return Err(Error::invalid("evaluate", "evaluation set is empty"));
    }
    let n_classes = net.spec().n_classes;
    let all: Vec<usize> = (0..data.n_trials()).collect();
    let mut predictions = Vec::with_capacity(all.len());
    for idx in all.chunks(EVAL_BATCH) {
        let logits = net.predict(&data.batch(idx)?)?;
        predictions.extend(logits.data().chunks(n_classes).map(argmax));
    }
    Evaluation::from_predictions(n_classes, &data.labels, predictions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5, 0.2]), 1);
        assert_eq!(argmax(&[1.0; 5]), 0);
        assert_eq!(argmax(&[-3.0, -1.0]), 1);
    }

    #[test]
    fn evaluation_accounting() {
        let truth: Vec<usize> = (0..10).map(|i| i % 5).collect();
        let perfect = Evaluation::from_predictions(5, &truth, truth.clone()).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.confusion.trace(), 10);
        let constant = Evaluation::from_predictions(5, &truth, vec![3; 10]).unwrap();
        assert_eq!(constant.accuracy, 0.2);
        assert_eq!(constant.confusion.row_sums(), [2; 5]);
        assert_eq!(constant.histogram.counts, [0, 0, 0, 10, 0]);
    }
}
