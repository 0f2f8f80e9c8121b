//! Bias-weighted retraining on the biased fixture: each round is a full
//! cross-validation whose prediction histogram sets the next class weights.
//!
//! `cargo run --release --example weight_sweep -- [rounds] [epochs]`

use fingermi::dataio::make_biased_fixture;
use fingermi::harness::{run_sweep, sweep_csv, TrainConfig};
use fingermi::loss::WeightSchedule;
use fingermi::model::{model_spec, ModelConfig, ModelKind};
use fingermi::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let rounds = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);

    let data = make_biased_fixture(1);
    let spec = model_spec(ModelKind::EegNet, &ModelConfig::defaults(ModelKind::EegNet))?;
    let cfg = TrainConfig {
        epochs,
        seed: 1,
        ..Default::default()
    };
    let report = run_sweep(&data, &spec, &cfg, 5, rounds, &WeightSchedule::default());
    print!("{}", sweep_csv(&report.rounds));
    for r in &report.rounds {
        println!("round {}: predictions {:?}, max share {:.3}", r.round, r.histogram.counts, r.histogram.max_share());
    }
    if let Some(reason) = report.aborted {
        eprintln!("aborted: {reason}");
    }
    Ok(())
}
