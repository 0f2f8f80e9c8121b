//! Synthetic epochs written to and read back from an EEGF file, then split
//! into stratified folds.

use fingermi::dataio::{read_eegf, stratified_kfold, synth_dataset, write_eegf, SynthPreset};
use fingermi::Result;

fn main() -> Result<()> {
    let ds = synth_dataset(&SynthPreset::Separable.spec(1))?;
    let path = std::env::temp_dir().join("fingermi-example.eegf");
    write_eegf(&ds, &path)?;
    let back = read_eegf(&path)?;
    let max_err = ds.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!(
        "{}: {} bytes, {} epochs x {} channels x {} samples, max f32 rounding error {:.1e}",
        path.display(),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        back.n_trials(),
        back.n_channels(),
        back.n_samples,
        max_err
    );
    std::fs::remove_file(&path).ok();

    for (i, fold) in stratified_kfold(&ds.labels, 5, 1)?.iter().enumerate() {
        let hist = back.subset(&fold.test).label_histogram(5);
        println!("fold {i}: train {} test {} test labels {hist:?}", fold.train.len(), fold.test.len());
    }
    Ok(())
}
