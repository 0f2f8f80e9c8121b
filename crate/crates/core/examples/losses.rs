//! The three cross-entropy variants on one batch, and a few rounds of the
//! weight heuristic on a skewed prediction histogram.

use fingermi::autodiff::Tape;
use fingermi::loss::{self, adjust_weights, class_frequency_weights, PredictionHistogram, WeightSchedule};
use fingermi::{Result, Tensor};

fn main() -> Result<()> {
    let logits = Tensor::new([2, 5], vec![2.0, 1.0, 0.1, -0.5, 0.0, 0.3, 0.2, 1.5, -1.0, 0.4])?;
    let labels = [0, 2];
    let mut t = Tape::new();
    let x = t.constant(logits);
    let lp = t.log_softmax(x)?;
    let alpha = class_frequency_weights(&[25, 25, 25, 25, 25])?;
    let ce = loss::cross_entropy(&mut t, lp, &labels)?;
    let wce = loss::weighted_cross_entropy(&mut t, lp, &labels, &alpha)?;
    let bwce = loss::bias_weighted_cross_entropy(&mut t, lp, &labels, &[0.9, 0.9, 1.1, 1.1, 1.0])?;
    println!("ce {:.5}  wce {:.5}  bwce {:.5}", t.value(ce).item(), t.value(wce).item(), t.value(bwce).item());

    let hist = PredictionHistogram {
        counts: vec![60, 40, 10, 10, 5],
    };
    let schedule = WeightSchedule::default();
    let mut w = vec![1.0; 5];
    for round in 1..=4 {
        w = adjust_weights(&w, &hist, &schedule);
        println!("round {round}: {w:?}");
    }
    Ok(())
}
