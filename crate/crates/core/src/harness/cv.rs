use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{evaluate, train, TrainConfig};
use crate::dataio::stratified_kfold;
use crate::error::Result;
use crate::loss::{PredictionHistogram, RoundOutcome};
use crate::metrics::ConfusionMatrix;
use crate::model::{init_params, ModelSpec};
use crate::signal::EpochedDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub loss_history: Vec<f64>,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub k: usize,
    pub config: TrainConfig,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Population standard deviation over folds.
    pub std_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub recall: Vec<f64>,
    pub histogram: PredictionHistogram,
}

/// Stratified k-fold cross-validation with a fresh network per fold.
///
/// Fold `i` initialises and trains with seed `config.seed + i`; the split
/// itself uses `config.seed`. Folds run in parallel and are merged in order.
pub fn run_cv(data: &EpochedDataset, spec: &ModelSpec, config: &TrainConfig, k: usize) -> Result<CvReport> {
    config.validate(spec.n_classes)?;
    spec.trace_shapes()?;
    let folds = stratified_kfold(&data.labels, k, config.seed)?;
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let seed = config.seed.wrapping_add(i as u64);
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            let mut net = init_params(spec, seed)?;
            let loss_history = train(&mut net, &data.subset(&fold.train), &cfg)?;
            let eval = evaluate(&net, &data.subset(&fold.test))?;
            Ok(FoldResult {
                fold: i,
                seed,
                n_train: fold.train.len(),
                n_test: fold.test.len(),
                accuracy: eval.accuracy,
                loss_history,
                confusion: eval.confusion,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut confusion = ConfusionMatrix::new(spec.n_classes);
    results.iter().for_each(|r| confusion.merge(&r.confusion));
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    Ok(CvReport {
        model: spec.kind.name().to_string(),
        k,
        config: config.clone(),
        folds: results,
        mean_accuracy,
        std_accuracy,
        recall: confusion.recall(),
        histogram: PredictionHistogram::from(&confusion),
        confusion,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl CvReport {
    pub fn outcome(&self) -> RoundOutcome {
        RoundOutcome {
            mean_accuracy: self.mean_accuracy,
            confusion: self.confusion.clone(),
            histogram: self.histogram.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per fold followed by a `mean` row.
    pub fn folds_csv(&self) -> String {
        let mut out = String::from("fold,seed,n_train,n_test,accuracy,final_train_loss\n");
        for f in &self.folds {
            let last = f.loss_history.last().copied().unwrap_or(f64::NAN);
            writeln!(out, "{},{},{},{},{},{}", f.fold, f.seed, f.n_train, f.n_test, f.accuracy, last).unwrap();
        }
        writeln!(out, "mean,,,,{},", self.mean_accuracy).unwrap();
        writeln!(out, "std,,,,{},", self.std_accuracy).unwrap();
        out
    }
}

/// Rows are true classes, columns predictions, with a leading label column.
pub fn confusion_csv(m: &ConfusionMatrix, class_names: &[&str]) -> String {
    let mut out = String::from("true\\predicted");
    for name in class_names {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    for (name, row) in class_names.iter().zip(m.rows()) {
        out.push_str(name);
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_moments() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn confusion_table_layout() {
        let m = ConfusionMatrix::from_predictions(2, &[0, 1, 1], &[0, 0, 1]).unwrap();
        assert_eq!(confusion_csv(&m, &["a", "b"]), "true\\predicted,a,b\na,1,0\nb,1,1\n");
    }
}
