//! Files, splits and synthetic data.

mod eegf;
mod folds;
mod raw;
mod synth;

pub use eegf::{decode as decode_eegf, encode as encode_eegf, read_eegf, write_eegf, MAGIC, VERSION};
pub use folds::{stratified_kfold, Fold};
pub use raw::{read_raw_csv, write_raw_csv};
pub use synth::{
    biased_spec, default_channel_map, make_biased_fixture, synth_dataset, synth_recording, PinkNoise, RecordingSpec,
    SynthPreset, SynthSpec, EXTRA_CHANNELS,
};
