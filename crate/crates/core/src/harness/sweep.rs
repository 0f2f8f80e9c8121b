use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cv::run_cv;
use super::train::TrainConfig;
use crate::loss::{weight_sweep, LossSpec, SweepRound, WeightSchedule};
use crate::model::ModelSpec;
use crate::signal::EpochedDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: String,
    pub schedule: WeightSchedule,
    pub rounds: Vec<SweepRound>,
    /// Diagnostic of the failure that cut the sweep short, if any.
    pub aborted: Option<String>,
}

/// Weight sweep where every round is a full cross-validation. Round 1 uses
/// plain cross-entropy; later rounds use the bias-weighted loss.
pub fn run_sweep(
    data: &EpochedDataset,
    spec: &ModelSpec,
    config: &TrainConfig,
    k: usize,
    rounds: usize,
    schedule: &WeightSchedule,
) -> SweepReport {
    let sweep = weight_sweep(spec.n_classes, rounds, config.seed, schedule, |w, seed| {
        let loss = if w.iter().all(|&v| v == 1.0) {
            LossSpec::cross_entropy(w.len())
        } else {
            LossSpec::bias_weighted(w.to_vec())
        };
        let cfg = TrainConfig {
            loss,
            seed,
            ..config.clone()
        };
        Ok(run_cv(data, spec, &cfg, k)?.outcome())
    });
    SweepReport {
        model: spec.kind.name().to_string(),
        schedule: schedule.clone(),
        rounds: sweep.rounds,
        aborted: sweep.aborted.map(|e| e.to_string()),
    }
}

/// `round, w1..wK, mean_accuracy, per_class_recall_1..K`.
pub fn sweep_csv(rounds: &[SweepRound]) -> String {
    let k = rounds.first().map_or(0, |r| r.weights.len());
    let mut out = String::from("round");
    (1..=k).for_each(|i| write!(out, ",w{i}").unwrap());
    out.push_str(",mean_accuracy");
    (1..=k).for_each(|i| write!(out, ",per_class_recall_{i}").unwrap());
    out.push('\n');
    for r in rounds {
        write!(out, "{}", r.round).unwrap();
        r.weights.iter().for_each(|w| write!(out, ",{w}").unwrap());
        write!(out, ",{}", r.mean_accuracy).unwrap();
        r.recall().iter().for_each(|v| write!(out, ",{v}").unwrap());
        out.push('\n');
    }
    out
}
