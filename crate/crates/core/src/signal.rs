//! Preprocessing: power-line notch, anti-aliased downsampling, channel
//! selection and task-locked epoching.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const N_CLASSES: usize = 5;

/// Class names in label order.
pub const CLASS_NAMES: [&str; N_CLASSES] = ["thumb", "index", "middle", "ring", "little"];

/// The 24 motor-cortex electrodes kept for decoding, in model input order.
pub const MOTOR_CHANNELS: [&str; 24] = [
    "F3", "F1", "Fz", "F2", "F4", "FC3", "FC1", "FC2", "FC4", "C3", "C1", "Cz", "C2", "C4", "CP3", "CP1", "CPz",
    "CP2", "CP4", "P3", "P1", "Pz", "P2", "P4",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub sample: usize,
    pub label: usize,
}

/// Continuous multichannel EEG.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub fs: f64,
    pub channel_names: Vec<String>,
    /// One row per channel.
    pub data: Vec<Vec<f64>>,
    pub events: Vec<Event>,
}

impl Recording {
    pub fn new(fs: f64, channel_names: Vec<String>, data: Vec<Vec<f64>>, events: Vec<Event>) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::invalid("recording", format!("sampling rate {fs} must be positive")));
        }
        if channel_names.len() != data.len() {
            return Err(Error::shape(
                "recording",
                format!("{} channel names for {} rows", channel_names.len(), data.len()),
            ));
        }
        let n = data.first().map_or(0, Vec::len);
        if data.iter().any(|row| row.len() != n) {
            return Err(Error::shape("recording", "channel rows differ in length"));
        }
        if let Some(e) = events.iter().find(|e| e.sample >= n) {
            return Err(Error::invalid(
                "recording",
                format!("event at sample {} beyond {n} samples", e.sample),
            ));
        }
        Ok(Self {
            fs,
            channel_names,
            data,
            events,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    fn map_channels(&self, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Vec<Vec<f64>> {
        self.data.par_iter().map(|row| f(row)).collect()
    }
}

/// Labeled trials sharing one `channels × samples` shape.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochedDataset {
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub n_samples: usize,
    /// `trials × channels × samples`, row-major.
    pub data: Vec<f64>,
    pub labels: Vec<usize>,
}

impl EpochedDataset {
    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    fn trial_len(&self) -> usize {
        self.n_channels() * self.n_samples
    }

    pub fn trial(&self, i: usize) -> &[f64] {
        &self.data[i * self.trial_len()..][..self.trial_len()]
    }

    pub fn trial_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.trial_len();
        &mut self.data[i * len..][..len]
    }

    /// Stacks the given trials into a `[N, 1, channels, samples]` model batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.trial_len());
        for &i in indices {
            data.extend_from_slice(self.trial(i));
        }
        Tensor::new([indices.len(), 1, self.n_channels(), self.n_samples], data)
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn label_histogram(&self, n_classes: usize) -> Vec<usize> {
        let mut h = vec![0; n_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.trial_len());
        for &i in indices {
            data.extend_from_slice(self.trial(i));
        }
        Self {
            fs: self.fs,
            channel_names: self.channel_names.clone(),
            n_samples: self.n_samples,
            data,
            labels: self.labels_of(indices),
        }
    }
}

/// Second-order IIR section, `a0` normalised to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Audio-cookbook notch centred on `f0` with quality factor `q`.
    pub fn notch(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * q);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [1.0 / a0, -2.0 * cos / a0, 1.0 / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    /// Causal filtering from rest (transposed direct form II).
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        x.iter()
            .map(|&xi| {
                let y = b0 * xi + z1;
                z1 = b1 * xi - a1 * y + z2;
                z2 = b2 * xi - a2 * y;
                y
            })
            .collect()
    }

    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, -(self.b[1] * s1 + self.b[2] * s2));
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, -(self.a[0] * s1 + self.a[1] * s2));
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Sample `i` of `x` extended by odd reflection about its end points.
fn odd_extend(x: &[f64], i: isize) -> f64 {
    let n = x.len() as isize;
    if i < 0 {
        2.0 * x[0] - x[(-i).min(n - 1) as usize]
    } else if i >= n {
        2.0 * x[(n - 1) as usize] - x[(2 * (n - 1) - i).max(0) as usize]
    } else {
        x[i as usize]
    }
}

/// Forward-backward filtering, padded by odd reflection of `3 × order` samples.
pub fn filtfilt(section: &Biquad, x: &[f64]) -> Vec<f64> {
    const ORDER: usize = 2;
    if x.is_empty() {
        return Vec::new();
    }
    let pad = (3 * ORDER).min(x.len() - 1) as isize;
    let n = x.len() as isize;
    let ext: Vec<f64> = (-pad..n + pad).map(|i| odd_extend(x, i)).collect();
    let mut y = section.filter(&ext);
    y.reverse();
    let mut y = section.filter(&y);
    y.reverse();
    y.drain(..pad as usize);
    y.truncate(x.len());
    y
}

/// Removes power-line interference at `f0` from every channel with a zero-phase biquad notch.
pub fn notch_filter(rec: &Recording, f0: f64, q: f64) -> Result<Recording> {
    if !(f0 > 0.0 && f0 < rec.fs / 2.0) {
        return Err(Error::invalid(
            "notch_filter",
            format!("notch frequency {f0} Hz must lie in (0, {}) Hz", rec.fs / 2.0),
        ));
    }
    if !(q > 0.0) {
        return Err(Error::invalid("notch_filter", format!("quality factor {q} must be positive")));
    }
    let section = Biquad::notch(f0, rec.fs, q);
    Ok(Recording {
        data: rec.map_channels(|row| filtfilt(&section, row)),
        ..rec.clone()
    })
}

/// Hamming-windowed sinc low-pass with unit DC gain. `cutoff` is in cycles per sample.
pub fn lowpass_fir(taps: usize, cutoff: f64) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let window = if taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos()
            };
            sinc * window
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Centred convolution with a symmetric odd-length FIR, evaluated only at
/// every `step`-th output sample.
fn fir_centred(x: &[f64], h: &[f64], step: usize) -> Vec<f64> {
    let half = (h.len() / 2) as isize;
    (0..x.len())
        .step_by(step)
        .map(|i| {
            let i = i as isize;
            h.iter()
                .enumerate()
                .map(|(j, hj)| hj * odd_extend(x, i + half - j as isize))
                .sum()
        })
        .collect()
}

pub const DECIMATION_TAPS: usize = 101;

/// Zero-phase anti-alias low-pass (cutoff at 80% of the new Nyquist) then
/// keeps every `factor`-th sample. Event positions are floor-divided.
pub fn decimate(rec: &Recording, factor: usize) -> Result<Recording> {
    if factor == 0 {
        return Err(Error::invalid("decimate", "factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(rec.clone());
    }
    let cutoff = 0.8 * 0.5 / factor as f64;
    let h = lowpass_fir(DECIMATION_TAPS, cutoff);
    Ok(Recording {
        fs: rec.fs / factor as f64,
        channel_names: rec.channel_names.clone(),
        data: rec.map_channels(|row| fir_centred(row, &h, factor)),
        events: rec
            .events
            .iter()
            .map(|e| Event {
                sample: e.sample / factor,
                label: e.label,
            })
            .collect(),
    })
}

/// Keeps the named channels, in the requested order.
pub fn select_channels<S: AsRef<str>>(rec: &Recording, names: &[S]) -> Result<Recording> {
    let mut rows = Vec::with_capacity(names.len());
    let mut missing = Vec::new();
    for name in names {
        let name = name.as_ref();
        match rec.channel_names.iter().position(|c| c == name) {
            Some(i) => rows.push(rec.data[i].clone()),
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnknownChannel(missing));
    }
    Ok(Recording {
        fs: rec.fs,
        channel_names: names.iter().map(|n| n.as_ref().to_string()).collect(),
        data: rows,
        events: rec.events.clone(),
    })
}

/// Task window relative to each event onset, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochWindow {
    pub start: f64,
    pub duration: f64,
}

impl Default for EpochWindow {
    fn default() -> Self {
        Self {
            start: 0.0,
            duration: 4.0,
        }
    }
}

/// Cuts one epoch per event.
pub fn epoch(rec: &Recording, window: EpochWindow) -> Result<EpochedDataset> {
    let len = (window.duration * rec.fs).round() as usize;
    if len == 0 {
        return Err(Error::invalid("epoch", "window holds no samples"));
    }
    let offset = (window.start * rec.fs).round() as isize;
    let n = rec.n_samples();
    let mut data = Vec::with_capacity(rec.events.len() * rec.data.len() * len);
    for (k, e) in rec.events.iter().enumerate() {
        let start = e.sample as isize + offset;
        if start < 0 || start as usize + len > n {
            return Err(Error::EpochOutOfBounds {
                event: k,
                sample: e.sample,
            });
        }
        for row in &rec.data {
            data.extend_from_slice(&row[start as usize..start as usize + len]);
        }
    }
    Ok(EpochedDataset {
        fs: rec.fs,
        channel_names: rec.channel_names.clone(),
        n_samples: len,
        data,
        labels: rec.events.iter().map(|e| e.label).collect(),
    })
}

/// Standardises every channel of every epoch to zero mean and unit variance.
/// Flat channels are only centred.
pub fn zscore_epochs(ds: &mut EpochedDataset) {
    let s = ds.n_samples;
    if s == 0 {
        return;
    }
    ds.data.par_chunks_mut(s).for_each(|row| {
        let mean = row.iter().sum::<f64>() / s as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s as f64;
        let sd = var.sqrt();
        let inv = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(f: f64, fs: f64, secs: f64) -> Vec<f64> {
        (0..(fs * secs) as usize)
            .map(|i| (2.0 * PI * f * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn mono(fs: f64, x: Vec<f64>) -> Recording {
        Recording::new(fs, vec!["Cz".into()], vec![x], vec![]).unwrap()
    }

    #[test]
    fn notch_response_at_design_points() {
        let s = Biquad::notch(60.0, 1000.0, 30.0);
        assert!(s.magnitude(60.0, 1000.0) < 1e-12);
        assert!((s.magnitude(0.0, 1000.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn notch_kills_line_noise_and_keeps_alpha() {
        let fs = 1000.0;
        let trim = 2000;
        let line = notch_filter(&mono(fs, sine(60.0, fs, 10.0)), 60.0, 30.0).unwrap();
        let inner = &line.data[0][trim..10_000 - trim];
        assert!(rms(inner) <= 0.0316 * rms(&sine(60.0, fs, 10.0)), "{}", rms(inner));

        let x = sine(10.0, fs, 10.0);
        let alpha = notch_filter(&mono(fs, x.clone()), 60.0, 30.0).unwrap();
        let ratio = rms(&alpha.data[0][trim..10_000 - trim]) / rms(&x[trim..10_000 - trim]);
        assert!((20.0 * ratio.log10()).abs() <= 1.0);
    }

    #[test]
    fn notch_rejects_frequency_above_nyquist() {
        assert!(notch_filter(&mono(100.0, vec![0.0; 10]), 60.0, 30.0).is_err());
    }

    #[test]
    fn zero_signal_stays_zero() {
        let z = notch_filter(&mono(1000.0, vec![0.0; 500]), 60.0, 30.0).unwrap();
        assert!(z.data[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_phase_keeps_pulse_centred() {
        let n = 2001;
        let x: Vec<f64> = (0..n)
            .map(|i| (-((i as f64 - 1000.0) / 20.0).powi(2)).exp())
            .collect();
        let y = notch_filter(&mono(1000.0, x), 60.0, 30.0).unwrap();
        let peak = y.data[0]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((peak as isize - 1000).abs() <= 1);
    }

    #[test]
    fn decimation_dc_and_lengths() {
        let rec = mono(1000.0, vec![2.5; 1003]);
        let d = decimate(&rec, 4).unwrap();
        assert_eq!(d.fs, 250.0);
        assert!(d.data[0].iter().all(|v| (v - 2.5).abs() < 1e-6));
        let twice = decimate(&decimate(&rec, 2).unwrap(), 2).unwrap();
        assert_eq!(twice.n_samples(), d.n_samples());
        assert!(decimate(&rec, 0).is_err());
    }

    #[test]
    fn decimation_moves_events() {
        let rec = Recording::new(
            1000.0,
            vec!["C3".into()],
            vec![vec![0.0; 100]],
            vec![Event { sample: 7, label: 2 }, Event { sample: 99, label: 4 }],
        )
        .unwrap();
        let d = decimate(&rec, 4).unwrap();
        assert_eq!(d.events, [Event { sample: 1, label: 2 }, Event { sample: 24, label: 4 }]);
    }

    #[test]
    fn channel_selection() {
        let rec = Recording::new(
            250.0,
            vec!["C3".into(), "Cz".into(), "C4".into()],
            vec![vec![1.0], vec![2.0], vec![3.0]],
            vec![],
        )
        .unwrap();
        let same = select_channels(&rec, &["C3", "Cz", "C4"]).unwrap();
        assert_eq!(same, rec);
        let swapped = select_channels(&rec, &["C4", "C3"]).unwrap();
        assert_eq!(swapped.data, [vec![3.0], vec![1.0]]);
        match select_channels(&rec, &["XX"]) {
            Err(Error::UnknownChannel(names)) => assert_eq!(names, ["XX"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn epoching_bounds() {
        let rec = Recording::new(
            250.0,
            vec!["Cz".into()],
            vec![vec![0.0; 1500]],
            vec![Event { sample: 0, label: 0 }, Event { sample: 600, label: 1 }],
        )
        .unwrap();
        assert!(matches!(
            epoch(&rec, EpochWindow::default()),
            Err(Error::EpochOutOfBounds { event: 1, .. })
        ));
        let empty = Recording { events: vec![], ..rec };
        assert_eq!(epoch(&empty, EpochWindow::default()).unwrap().n_trials(), 0);
    }

    #[test]
    fn zscore_standardises_rows() {
        let mut ds = EpochedDataset {
            fs: 250.0,
            channel_names: vec!["a".into(), "b".into()],
            n_samples: 4,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 5.0, 5.0, 5.0],
            labels: vec![0],
        };
        zscore_epochs(&mut ds);
        let row = &ds.data[..4];
        assert!(row.iter().sum::<f64>().abs() < 1e-12);
        assert!((row.iter().map(|v| v * v).sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
        assert_eq!(&ds.data[4..], &[0.0; 4]);
    }
}
