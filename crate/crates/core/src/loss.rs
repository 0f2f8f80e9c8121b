//! Cross-entropy variants and the heuristic class-weight schedule used to
//! counter biased predictions.
//!
//! All three losses share one form, the batch mean of `-w[y] * log p[y]`:
//! plain cross-entropy fixes `w = 1`, the class-balanced variant sets
//! `w = 1 / count`, and the bias-weighted variant takes hand-tuned weights
//! that [`adjust_weights`] nudges between training rounds.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Plain cross-entropy.
    Ce,
    /// Class-frequency weighted cross-entropy.
    Wce,
    /// Bias-mitigation weighted cross-entropy.
    Bwce,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Ok(LossKind::Ce),
            "wce" => Ok(LossKind::Wce),
            "bwce" => Ok(LossKind::Bwce),
            other => Err(Error::invalid("loss", format!("unknown loss kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Per-class weights; ignored for [`LossKind::Ce`].
    pub weights: Vec<f64>,
}

impl LossSpec {
    pub fn cross_entropy(n_classes: usize) -> Self {
        Self {
            kind: LossKind::Ce,
            weights: vec![1.0; n_classes],
        }
    }

    pub fn weighted(alpha: Vec<f64>) -> Self {
        Self {
            kind: LossKind::Wce,
            weights: alpha,
        }
    }

    pub fn bias_weighted(w: Vec<f64>) -> Self {
        Self {
            kind: LossKind::Bwce,
            weights: w,
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.weights.len() != n_classes {
            return Err(Error::invalid(
                "loss",
                format!("{} weights for {n_classes} classes", self.weights.len()),
            ));
        }
        check_weights(&self.weights)
    }

    pub fn apply(&self, tape: &mut Tape, log_probs: Var, labels: &[usize]) -> Result<Var> {
        match self.kind {
            LossKind::Ce => cross_entropy(tape, log_probs, labels),
            LossKind::Wce => weighted_cross_entropy(tape, log_probs, labels, &self.weights),
            LossKind::Bwce => bias_weighted_cross_entropy(tape, log_probs, labels, &self.weights),
        }
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    match w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(bad) => Err(Error::invalid("loss", format!("weight {bad} is not strictly positive"))),
        None => Ok(()),
    }
}

/// Mean over the batch of `-log p(true class)`.
pub fn cross_entropy(tape: &mut Tape, log_probs: Var, labels: &[usize]) -> Result<Var> {
    tape.nll(log_probs, labels, None)
}

/// Mean over the batch of `-alpha[true] * log p(true class)`.
pub fn weighted_cross_entropy(tape: &mut Tape, log_probs: Var, labels: &[usize], alpha: &[f64]) -> Result<Var> {
    check_weights(alpha)?;
    tape.nll(log_probs, labels, Some(alpha))
}

/// Same form as [`weighted_cross_entropy`], with heuristically scheduled weights.
pub fn bias_weighted_cross_entropy(tape: &mut Tape, log_probs: Var, labels: &[usize], w: &[f64]) -> Result<Var> {
    check_weights(w)?;
    tape.nll(log_probs, labels, Some(w))
}

/// Inverse class frequencies, `alpha_i = 1 / counts_i`.
pub fn class_frequency_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid("class_frequency_weights", format!("class {i} has no trials")));
    }
    Ok(counts.iter().map(|&c| 1.0 / c as f64).collect())
}

/// How often a trained model predicts each class over an evaluation set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionHistogram {
    pub counts: Vec<usize>,
}

impl PredictionHistogram {
    pub fn from_predictions(n_classes: usize, predicted: &[usize]) -> Self {
        let mut counts = vec![0; n_classes];
        for &p in predicted {
            counts[p] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn shares(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    pub fn max_share(&self) -> f64 {
        self.shares().into_iter().fold(0.0, f64::max)
    }
}

impl From<&ConfusionMatrix> for PredictionHistogram {
    fn from(m: &ConfusionMatrix) -> Self {
        Self {
            counts: m.column_sums(),
        }
    }
}

/// Parameters of the weight adjustment heuristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub step: f64,
    pub lower: f64,
    pub upper: f64,
    /// Dead band around the uniform share `1/K`.
    pub tolerance: f64,
}

impl Default for WeightSchedule {
    fn default() -> Self {
        Self {
            step: 0.05,
            lower: 0.5,
            upper: 1.5,
            tolerance: 0.02,
        }
    }
}

/// One heuristic step: over-predicted classes lose `step`, under-predicted
/// classes gain `step`, classes within `tolerance` of the uniform share keep
/// their weight. Results are rounded to 1e-9 and clamped to the schedule bounds.
///
/// An empty histogram leaves the weights unchanged.
pub fn adjust_weights(w: &[f64], hist: &PredictionHistogram, schedule: &WeightSchedule) -> Vec<f64> {
    if hist.total() == 0 {
        return w.to_vec();
    }
    let uniform = 1.0 / hist.counts.len() as f64;
    w.iter()
        .zip(hist.shares())
        .map(|(&wi, share)| {
            let next = if share > uniform + schedule.tolerance {
                wi - schedule.step
            } else if share < uniform - schedule.tolerance {
                wi + schedule.step
            } else {
                wi
            };
            // keep repeated steps on the decimal grid (0.9, not 0.8999999999999999)
            let next = (next * 1e9).round() / 1e9;
            next.clamp(schedule.lower, schedule.upper)
        })
        .collect()
}

/// What a trainer reports for one set of weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub mean_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub histogram: PredictionHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRound {
    pub round: usize,
    pub weights: Vec<f64>,
    pub mean_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub histogram: PredictionHistogram,
}

impl SweepRound {
    pub fn recall(&self) -> Vec<f64> {
        self.confusion.recall()
    }
}

#[derive(Debug)]
pub struct Sweep {
    pub rounds: Vec<SweepRound>,
    /// Set when the trainer failed; `rounds` then holds everything finished before it.
    pub aborted: Option<Error>,
}

/// Runs `rounds` trainer calls starting from all-ones weights, deriving each
/// round's weights from the previous round's prediction histogram.
///
/// The trainer receives the weights and `seed`; the seed is the same every
/// round so only the weights differ between rounds.
pub fn weight_sweep<F>(n_classes: usize, rounds: usize, seed: u64, schedule: &WeightSchedule, mut trainer: F) -> Sweep
where
    F: FnMut(&[f64], u64) -> Result<RoundOutcome>,
{
    let mut out = Vec::with_capacity(rounds);
    let mut weights = vec![1.0; n_classes];
    for round in 0..rounds {
        let outcome = match trainer(&weights, seed) {
            Ok(o) => o,
            Err(e) => {
                return Sweep {
                    rounds: out,
                    aborted: Some(e),
                }
            }
        };
        let next = adjust_weights(&weights, &outcome.histogram, schedule);
        out.push(SweepRound {
            round: round + 1,
            weights: std::mem::replace(&mut weights, next),
            mean_accuracy: outcome.mean_accuracy,
            confusion: outcome.confusion,
            histogram: outcome.histogram,
        });
    }
    Sweep {
        rounds: out,
        aborted: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::tensor::Tensor;

    fn loss_of(spec: &LossSpec, lp: Tensor, labels: &[usize]) -> f64 {
        let mut tape = Tape::new();
        let v = tape.constant(lp);
        let l = spec.apply(&mut tape, v, labels).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let lp = Tensor::new([1, 3], vec![0.0, f64::MIN, f64::MIN]).unwrap();
        assert_eq!(loss_of(&LossSpec::cross_entropy(3), lp, &[0]), 0.0);
    }

    #[test]
    fn uniform_prediction_costs_ln_k() {
        let lp = Tensor::full([2, 5], -(5f64.ln()));
        let l = loss_of(&LossSpec::cross_entropy(5), lp, &[0, 3]);
        assert!((l - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_weighted_sample() {
        // true class 2 at p = 0.5 with weight 2
        let lp = Tensor::new([1, 5], vec![-2.0, -2.0, 0.5f64.ln(), -2.0, -2.0]).unwrap();
        let alpha = vec![1.0, 1.0, 2.0, 1.0, 1.0];
        let l = loss_of(&LossSpec::weighted(alpha), lp, &[2]);
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 1.38629).abs() < 1e-5);
    }

    #[test]
    fn middle_class_costs_more_under_bias_weights() {
        let lp = Tensor::new([1, 5], vec![-0.5, -1.0, -3.0, -2.0, -2.5]).unwrap();
        let ce = loss_of(&LossSpec::cross_entropy(5), lp.clone(), &[2]);
        let w = LossSpec::bias_weighted(vec![0.9, 0.9, 1.1, 1.1, 1.0]);
        assert!((loss_of(&w, lp, &[2]) - 1.1 * ce).abs() < 1e-14);
    }

    #[test]
    fn invalid_inputs() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::full([1, 3], -1.0));
        assert!(cross_entropy(&mut tape, v, &[3]).is_err());
        assert!(weighted_cross_entropy(&mut tape, v, &[0], &[1.0, 0.0, 1.0]).is_err());
        assert!(bias_weighted_cross_entropy(&mut tape, v, &[0], &[1.0, -1.0, 1.0]).is_err());
        assert!(class_frequency_weights(&[3, 0]).is_err());
    }

    #[test]
    fn frequency_weights_are_reciprocals() {
        assert_eq!(class_frequency_weights(&[100, 50]).unwrap(), [0.01, 0.02]);
        let a = class_frequency_weights(&[25; 5]).unwrap();
        assert!(a.iter().all(|&v| (v - 0.04).abs() < 1e-15));
    }

    #[test]
    fn bias_weighted_gradient_matches_differences() {
        let logits = Tensor::new([3, 5], (0..15).map(|i| ((i * 7) % 11) as f64 * 0.3 - 1.0).collect()).unwrap();
        let w = [0.9, 0.9, 1.1, 1.1, 1.0];
        let err = gradcheck(
            |tape, v| {
                let lp = tape.log_softmax(v[0])?;
                bias_weighted_cross_entropy(tape, lp, &[0, 2, 4], &w)
            },
            &[logits],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn skewed_histogram_moves_weights_toward_balance() {
        let hist = PredictionHistogram {
            counts: vec![60, 40, 10, 10, 5],
        };
        let w = adjust_weights(&[1.0; 5], &hist, &WeightSchedule::default());
        let expected = [0.95, 0.95, 1.05, 1.05, 1.05];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn uniform_histogram_is_a_fixed_point() {
        let hist = PredictionHistogram { counts: vec![25; 5] };
        let w = [0.8, 1.0, 1.2, 1.1, 0.9];
        assert_eq!(adjust_weights(&w, &hist, &WeightSchedule::default()), w);
    }

    #[test]
    fn repeated_adjustment_stays_in_bounds() {
        let hist = PredictionHistogram {
            counts: vec![60, 40, 10, 10, 5],
        };
        let s = WeightSchedule::default();
        let mut w = vec![1.0; 5];
        for _ in 0..100 {
            w = adjust_weights(&w, &hist, &s);
            assert!(w.iter().all(|&v| (s.lower..=s.upper).contains(&v)));
        }
        assert_eq!(w, [0.5, 0.5, 1.5, 1.5, 1.5]);
    }

    fn fake_round(counts: Vec<usize>) -> RoundOutcome {
        let mut confusion = ConfusionMatrix::new(counts.len());
        for (p, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                confusion.record(0, p).unwrap();
            }
        }
        RoundOutcome {
            mean_accuracy: 0.2,
            histogram: PredictionHistogram::from(&confusion),
            confusion,
        }
    }

    #[test]
    fn single_round_is_the_plain_baseline() {
        let sweep = weight_sweep(5, 1, 3, &WeightSchedule::default(), |w, _| {
            assert_eq!(w, [1.0; 5]);
            Ok(fake_round(vec![60, 40, 10, 10, 5]))
        });
        assert_eq!(sweep.rounds.len(), 1);
        assert_eq!(sweep.rounds[0].weights, [1.0; 5]);
        assert!(sweep.aborted.is_none());
    }

    #[test]
    fn trainer_failure_keeps_finished_rounds() {
        let mut calls = 0;
        let sweep = weight_sweep(5, 4, 0, &WeightSchedule::default(), |_, _| {
            calls += 1;
            if calls == 3 {
                Err(Error::invalid("trainer", "boom"))
            } else {
                Ok(fake_round(vec![60, 40, 10, 10, 5]))
            }
        });
        assert_eq!(sweep.rounds.len(), 2);
        assert!(sweep.aborted.is_some());
        assert!((sweep.rounds[1].weights[0] - 0.95).abs() < 1e-12);
    }
}
