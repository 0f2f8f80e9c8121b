//! A synthetic 64-channel 1000 Hz recording with mains hum through notch,
//! decimation, channel selection, epoching and z-scoring.

use fingermi::dataio::{synth_recording, RecordingSpec};
use fingermi::signal::{decimate, epoch, notch_filter, select_channels, zscore_epochs, Biquad, EpochWindow, MOTOR_CHANNELS};
use fingermi::Result;

fn main() -> Result<()> {
    let notch = Biquad::notch(60.0, 1000.0, 30.0);
    for f in [10.0, 50.0, 59.0, 60.0, 61.0, 70.0] {
        println!("notch response at {f:>4} Hz: {:>8.2} dB", 20.0 * notch.magnitude(f, 1000.0).log10());
    }

    let rec = synth_recording(&RecordingSpec::new(25, 3))?;
    println!("raw: {} channels x {} samples at {} Hz", rec.channel_names.len(), rec.n_samples(), rec.fs);
    let rec = notch_filter(&rec, 60.0, 30.0)?;
    let rec = decimate(&rec, 4)?;
    let rec = select_channels(&rec, &MOTOR_CHANNELS)?;
    let mut ds = epoch(&rec, EpochWindow::default())?;
    zscore_epochs(&mut ds);
    println!(
        "epochs: {} x {} x {} at {} Hz, labels {:?}",
        ds.n_trials(),
        ds.n_channels(),
        ds.n_samples,
        ds.fs,
        ds.label_histogram(5)
    );
    Ok(())
}
