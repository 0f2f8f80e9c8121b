//! Five-fold cross-validation of FingerNet on the separable synthetic preset.
//!
//! `cargo run --release --example cross_validation -- [epochs] [model]`

use fingermi::dataio::{synth_dataset, SynthPreset};
use fingermi::harness::{confusion_csv, run_cv, TrainConfig};
use fingermi::model::{model_spec, ModelConfig, ModelKind};
use fingermi::signal::CLASS_NAMES;
use fingermi::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let kind = ModelKind::parse(&args.next().unwrap_or_else(|| "fingernet".into()))?;

    let data = synth_dataset(&SynthPreset::Separable.spec(1))?;
    let spec = model_spec(kind, &ModelConfig::defaults(kind))?;
    let cfg = TrainConfig {
        epochs,
        seed: 1,
        ..Default::default()
    };
    let report = run_cv(&data, &spec, &cfg, 5)?;
    print!("{}", report.folds_csv());
    print!("{}", confusion_csv(&report.confusion, &CLASS_NAMES));
    println!("recall {:?}", report.recall);
    Ok(())
}
