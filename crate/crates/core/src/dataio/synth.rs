//! Seeded synthetic EEG standing in for a real recording.
//!
//! Every trial is unit-variance pink noise on all channels plus a 10 Hz burst
//! under a raised-cosine envelope. Classes differ in which channels carry the
//! burst and when it starts; the channel subsets overlap, so timing matters.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Pcg32, Stream};
use crate::signal::{EpochedDataset, Event, Recording, MOTOR_CHANNELS, N_CLASSES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_trials_per_class: usize,
    pub n_channels: usize,
    pub fs: f64,
    /// Seconds.
    pub duration: f64,
    pub snr: f64,
    pub frequency: f64,
    /// Envelope length in seconds.
    pub burst: f64,
    pub class_channel_map: Vec<Vec<usize>>,
    /// Burst onset per class, seconds after trial start.
    pub class_latency: Vec<f64>,
    /// Per-class multiplier on `snr`.
    pub class_gain: Vec<f64>,
    pub seed: u64,
}

/// C3, C1, Cz, C2, C4, FC1, FC2, CP1 and CPz positions in [`MOTOR_CHANNELS`].
const C3: usize = 9;
const C1: usize = 10;
const CZ: usize = 11;
const C2: usize = 12;
const C4: usize = 13;
const FC1: usize = 6;
const FC2: usize = 7;
const CP1: usize = 15;
const CPZ: usize = 16;

/// Overlapping subsets around the vertex; every class touches Cz.
pub fn default_channel_map(n_channels: usize) -> Vec<Vec<usize>> {
    if n_channels == MOTOR_CHANNELS.len() {
        vec![
            vec![C3, C1, CZ],
            vec![C1, CZ, C2],
            vec![CZ, C2, C4],
            vec![FC1, CZ, CPZ],
            vec![FC2, CZ, CP1],
        ]
    } else {
        (0..N_CLASSES)
            .map(|c| {
                let mut m: Vec<usize> = (c..c + 3).map(|i| i % n_channels).collect();
                m.dedup();
                m
            })
            .collect()
    }
}

impl SynthSpec {
    pub fn new(snr: f64, seed: u64) -> Self {
        Self {
            n_trials_per_class: 25,
            n_channels: MOTOR_CHANNELS.len(),
            fs: 250.0,
            duration: 4.0,
            snr,
            frequency: 10.0,
            burst: 1.0,
            class_channel_map: default_channel_map(MOTOR_CHANNELS.len()),
            class_latency: vec![0.4, 1.0, 1.6, 2.2, 2.8],
            class_gain: vec![1.0; N_CLASSES],
            seed,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::invalid("synth", detail));
        if !(self.fs > 0.0 && self.duration > 0.0 && self.n_samples() > 0) {
            return bad(format!("fs {} and duration {} give no samples", self.fs, self.duration));
        }
        if self.n_channels == 0 {
            return bad("need at least one channel".into());
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return bad(format!("snr {} must be finite and non-negative", self.snr));
        }
        if !(self.burst > 0.0) {
            return bad(format!("burst length {} must be positive", self.burst));
        }
        for (name, len) in [
            ("class_channel_map", self.class_channel_map.len()),
            ("class_latency", self.class_latency.len()),
            ("class_gain", self.class_gain.len()),
        ] {
            if len != N_CLASSES {
                return bad(format!("{name} has {len} entries, expected {N_CLASSES}"));
            }
        }
        if let Some(ch) = self.class_channel_map.iter().flatten().find(|&&ch| ch >= self.n_channels) {
            return bad(format!("channel {ch} outside 0..{}", self.n_channels));
        }
        if let Some(l) = self.class_latency.iter().find(|l| !(0.0..self.duration).contains(*l)) {
            return bad(format!("latency {l} s outside [0, {})", self.duration));
        }
        if let Some(g) = self.class_gain.iter().find(|g| !(**g >= 0.0)) {
            return bad(format!("class gain {g} must be non-negative"));
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        if self.n_channels == MOTOR_CHANNELS.len() {
            MOTOR_CHANNELS.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.n_channels).map(|i| format!("E{i}")).collect()
        }
    }

    /// Burst waveform of `class` at time `t` seconds after trial start.
    pub fn burst_at(&self, class: usize, t: f64) -> f64 {
        let dt = t - self.class_latency[class];
        if !(0.0..=self.burst).contains(&dt) {
            return 0.0;
        }
        let envelope = 0.5 * (1.0 - (2.0 * PI * dt / self.burst).cos());
        self.snr * self.class_gain[class] * envelope * (2.0 * PI * self.frequency * dt).sin()
    }
}

/// Named dataset recipes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthPreset {
    Separable,
    Noise,
    Biased,
}

impl SynthPreset {
    pub const ALL: [SynthPreset; 3] = [SynthPreset::Separable, SynthPreset::Noise, SynthPreset::Biased];

    pub fn name(self) -> &'static str {
        match self {
            SynthPreset::Separable => "separable",
            SynthPreset::Noise => "noise",
            SynthPreset::Biased => "biased",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid("preset", format!("unknown preset {s:?} (separable, noise, biased)")))
    }

    pub fn spec(self, seed: u64) -> SynthSpec {
        match self {
            SynthPreset::Separable => SynthSpec::new(5.0, seed),
            SynthPreset::Noise => SynthSpec::new(0.0, seed),
            SynthPreset::Biased => biased_spec(seed),
        }
    }
}

/// Thumb and index bursts at twice the amplitude of the other three classes,
/// at SNR 2.5. Middle and ring replay the thumb and index bursts (same
/// channels, same latency) at half strength, so a weak trial reads as a faint
/// strong one and plain cross-entropy over-predicts thumb and index.
pub fn biased_spec(seed: u64) -> SynthSpec {
    let base = SynthSpec::new(2.5, seed);
    let map = &base.class_channel_map;
    SynthSpec {
        class_gain: vec![2.0, 2.0, 1.0, 1.0, 1.0],
        class_latency: vec![0.4, 1.6, 0.4, 1.6, 1.0],
        class_channel_map: vec![map[0].clone(), map[1].clone(), map[0].clone(), map[1].clone(), map[4].clone()],
        ..base
    }
}

/// Unit-variance 1/f noise, shaped in the frequency domain.
pub struct PinkNoise {
    forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl PinkNoise {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            buf: vec![Complex::default(); n],
        }
    }

    pub fn generate(&mut self, rng: &mut Pcg32, out: &mut [f64]) {
        let n = self.buf.len();
        for b in &mut self.buf {
            *b = Complex::new(rng::standard_normal(rng), 0.0);
        }
        self.forward.process(&mut self.buf);
        self.buf[0] = Complex::default();
        for k in 1..n {
            self.buf[k] /= (k.min(n - k) as f64).sqrt();
        }
        self.inverse.process(&mut self.buf);
        let mean = self.buf.iter().map(|c| c.re).sum::<f64>() / n as f64;
        let var = self.buf.iter().map(|c| (c.re - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let inv = if sd > 0.0 { 1.0 / sd } else { 0.0 };
        for (o, c) in out.iter_mut().zip(&self.buf) {
            *o = (c.re - mean) * inv;
        }
    }
}

/// Trials ordered so that trial `i` has label `i % 5`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<EpochedDataset> {
    spec.validate()?;
    let s = spec.n_samples();
    let c = spec.n_channels;
    let n_trials = spec.n_trials_per_class * N_CLASSES;
    let mut rng = rng::pcg(spec.seed, Stream::Synth);
    let mut noise = PinkNoise::new(s);
    let mut data = vec![0.0; n_trials * c * s];
    let labels: Vec<usize> = (0..n_trials).map(|i| i % N_CLASSES).collect();
    let bursts: Vec<Vec<f64>> = (0..N_CLASSES)
        .map(|class| (0..s).map(|t| spec.burst_at(class, t as f64 / spec.fs)).collect())
        .collect();
    for (trial, &label) in data.chunks_mut(c * s).zip(&labels) {
        for row in trial.chunks_mut(s) {
            noise.generate(&mut rng, row);
        }
        for &ch in &spec.class_channel_map[label] {
            for (x, b) in trial[ch * s..(ch + 1) * s].iter_mut().zip(&bursts[label]) {
                *x += b;
            }
        }
    }
    Ok(EpochedDataset {
        fs: spec.fs,
        channel_names: spec.channel_names(),
        n_samples: s,
        data,
        labels,
    })
}

pub fn make_biased_fixture(seed: u64) -> EpochedDataset {
    synth_dataset(&biased_spec(seed)).expect("biased preset is valid")
}

/// Extra scalp sites padding a continuous recording out to 64 channels.
pub const EXTRA_CHANNELS: [&str; 40] = [
    "Fp1", "Fpz", "Fp2", "AF7", "AF3", "AFz", "AF4", "AF8", "F7", "F5", "F6", "F8", "FT7", "FC5", "FCz", "FC6",
    "FT8", "T7", "C5", "C6", "T8", "TP7", "CP5", "CP6", "TP8", "P7", "P5", "P6", "P8", "PO7", "PO3", "POz", "PO4",
    "PO8", "O1", "Oz", "O2", "TP9", "TP10", "Iz",
];

/// A continuous 64-channel recording with mains hum, for exercising the
/// preprocessing chain end to end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingSpec {
    pub fs: f64,
    pub n_events: usize,
    /// Seconds between task onsets.
    pub period: f64,
    /// Seconds before the first onset.
    pub lead: f64,
    pub line_frequency: f64,
    pub line_amplitude: f64,
    /// Task bursts, timed relative to each onset.
    pub task: SynthSpec,
}

impl RecordingSpec {
    pub fn new(n_events: usize, seed: u64) -> Self {
        Self {
            fs: 1000.0,
            n_events,
            period: 4.5,
            lead: 0.5,
            line_frequency: 60.0,
            line_amplitude: 2.0,
            task: SynthSpec::new(1.0, seed),
        }
    }
}

/// Motor channels first, in [`MOTOR_CHANNELS`] order, then [`EXTRA_CHANNELS`].
/// Event `i` has label `i % 5`.
pub fn synth_recording(spec: &RecordingSpec) -> Result<Recording> {
    spec.task.validate()?;
    if !(spec.fs > 0.0 && spec.period >= spec.task.duration && spec.lead >= 0.0) {
        return Err(Error::invalid(
            "synth_recording",
            format!("fs {} / period {} / lead {} invalid", spec.fs, spec.period, spec.lead),
        ));
    }
    if spec.task.n_channels != MOTOR_CHANNELS.len() {
        return Err(Error::invalid("synth_recording", "task bursts must target the 24 motor channels"));
    }
    let n = ((spec.lead + spec.n_events as f64 * spec.period) * spec.fs).round() as usize;
    let events: Vec<Event> = (0..spec.n_events)
        .map(|i| Event {
            sample: ((spec.lead + i as f64 * spec.period) * spec.fs).round() as usize,
            label: i % N_CLASSES,
        })
        .collect();
    let names: Vec<String> = MOTOR_CHANNELS.iter().chain(&EXTRA_CHANNELS).map(|s| s.to_string()).collect();
    let mut rng = rng::pcg(spec.task.seed, Stream::Synth);
    let mut noise = PinkNoise::new(n);
    let hum: Vec<f64> = (0..n)
        .map(|t| spec.line_amplitude * (2.0 * PI * spec.line_frequency * t as f64 / spec.fs).sin())
        .collect();
    let task_len = (spec.task.duration * spec.fs).round() as usize;
    let mut data = Vec::with_capacity(names.len());
    for ch in 0..names.len() {
        let mut row = vec![0.0; n];
        noise.generate(&mut rng, &mut row);
        row.iter_mut().zip(&hum).for_each(|(x, h)| *x += h);
        for e in &events {
            if spec.task.class_channel_map[e.label].contains(&ch) {
                for (t, x) in row[e.sample..e.sample + task_len].iter_mut().enumerate() {
                    *x += spec.task.burst_at(e.label, t as f64 / spec.fs);
                }
            }
        }
        data.push(row);
    }
    Recording::new(spec.fs, names, data, events)
}
