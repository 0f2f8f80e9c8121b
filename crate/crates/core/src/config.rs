//! Plain-text experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Lists are
//! comma-separated. Optional caps accept `none`. Recognised keys:
//!
//! | key | default |
//! |---|---|
//! | `seed` | `0` (or `FINGERMI_SEED`) |
//! | `model.name` | `fingernet` |
//! | `model.f1`, `model.depth_multiplier`, `model.f2` | `8`, `2`, `16` |
//! | `model.temporal_kernel`, `model.separable_kernel` | `125`, `16` |
//! | `model.pool1`, `model.pool2` | `4`, `8` |
//! | `model.deep_filters`, `model.deep_kernel`, `model.deep_pool` | per model |
//! | `model.dropout` | `0.5` |
//! | `model.max_norm_depthwise`, `model.max_norm_dense` | `1.0`, `0.25` |
//! | `train.epochs`, `train.batch_size`, `train.shuffle` | `100`, `16`, `true` |
//! | `train.lr`, `train.betas`, `train.epsilon` | `0.001`, `0.9, 0.999`, `1e-8` |
//! | `loss.kind` | `ce` (`wce` without weights uses inverse class counts) |
//! | `loss.weights` | all ones |
//! | `preprocess.notch`, `preprocess.notch_q` | `60`, `30` |
//! | `preprocess.factor` | `4` |
//! | `preprocess.channels` | the 24 motor channels |
//! | `preprocess.window_start`, `preprocess.window_duration` | `0`, `4` |
//! | `preprocess.zscore` | `true` |
//! | `synth.preset` | `separable` |
//! | `synth.snr`, `synth.trials_per_class`, `synth.fs`, `synth.duration`, `synth.frequency` | from the preset |
//! | `cv.folds` | `5` |
//! | `sweep.rounds`, `sweep.step`, `sweep.lower`, `sweep.upper`, `sweep.tolerance` | `8`, `0.05`, `0.5`, `1.5`, `0.02` |

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::dataio::{SynthPreset, SynthSpec};
use crate::error::{Error, Result};
use crate::harness::TrainConfig;
use crate::loss::{LossKind, LossSpec, WeightSchedule};
use crate::model::{ModelConfig, ModelKind};
use crate::signal::{EpochWindow, MOTOR_CHANNELS, N_CLASSES};

pub const SEED_ENV: &str = "FINGERMI_SEED";

/// Raw key/value pairs, remembering where they came from for diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    origin: String,
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(origin: &str, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config {
                    path: origin.to_string(),
                    detail: format!("line {}: expected key = value", n + 1),
                });
            };
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config {
                    path: origin.to_string(),
                    detail: format!("line {}: unknown key {k:?}", n + 1),
                });
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config {
                    path: origin.to_string(),
                    detail: format!("line {}: duplicate key {k:?}", n + 1),
                });
            }
        }
        Ok(Self {
            origin: origin.to_string(),
            entries,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Sets `key`, overriding whatever the file said.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn err(&self, key: &str, detail: impl std::fmt::Display) -> Error {
        Error::Config {
            path: self.origin.clone(),
            detail: format!("{key}: {detail}"),
        }
    }

    fn value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| self.err(key, format!("{v:?}: {e}"))))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.value(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim().parse::<T>().map_err(|e| self.err(key, format!("{s:?}: {e}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn cap(&self, key: &str, default: Option<f64>) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(default),
            Some(v) if v.eq_ignore_ascii_case("none") => Ok(None),
            Some(_) => self.value(key),
        }
    }

    /// The `seed` key, else `FINGERMI_SEED`, else 0.
    pub fn seed(&self) -> Result<u64> {
        if let Some(s) = self.value("seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|e| Error::Config {
                path: SEED_ENV.to_string(),
                detail: format!("{v:?}: {e}"),
            }),
            Err(_) => Ok(0),
        }
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        ModelKind::parse(self.get("model.name").unwrap_or("fingernet"))
    }

    /// Geometry comes from the data; everything else from `model.*`.
    pub fn model_config(&self, kind: ModelKind, channels: usize, samples: usize) -> Result<ModelConfig> {
        let d = ModelConfig::defaults(kind);
        Ok(ModelConfig {
            channels,
            samples,
            n_classes: N_CLASSES,
            f1: self.or("model.f1", d.f1)?,
            depth_multiplier: self.or("model.depth_multiplier", d.depth_multiplier)?,
            f2: self.or("model.f2", d.f2)?,
            temporal_kernel: self.or("model.temporal_kernel", d.temporal_kernel)?,
            separable_kernel: self.or("model.separable_kernel", d.separable_kernel)?,
            pool1: self.or("model.pool1", d.pool1)?,
            pool2: self.or("model.pool2", d.pool2)?,
            deep_filters: self.list("model.deep_filters")?.unwrap_or(d.deep_filters),
            deep_kernel: self.or("model.deep_kernel", d.deep_kernel)?,
            deep_pool: self.or("model.deep_pool", d.deep_pool)?,
            dropout: self.or("model.dropout", d.dropout)?,
            max_norm_depthwise: self.cap("model.max_norm_depthwise", d.max_norm_depthwise)?,
            max_norm_dense: self.cap("model.max_norm_dense", d.max_norm_dense)?,
        })
    }

    /// `labels` feeds the inverse-frequency weights when `loss.kind = wce`
    /// names no weights.
    pub fn train_config(&self, labels: &[usize]) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let mut adam = d.adam.clone();
        adam.lr = self.or("train.lr", adam.lr)?;
        adam.epsilon = self.or("train.epsilon", adam.epsilon)?;
        if let Some(b) = self.list::<f64>("train.betas")? {
            let [b1, b2] = b[..] else {
                return Err(self.err("train.betas", "expected two values"));
            };
            adam.beta1 = b1;
            adam.beta2 = b2;
        }
        Ok(TrainConfig {
            epochs: self.or("train.epochs", d.epochs)?,
            batch_size: self.or("train.batch_size", d.batch_size)?,
            loss: self.loss(labels)?,
            adam,
            seed: self.seed()?,
            shuffle: self.or("train.shuffle", d.shuffle)?,
        })
    }

    fn loss(&self, labels: &[usize]) -> Result<LossSpec> {
        let kind = self.get("loss.kind").map(LossKind::parse).transpose()?.unwrap_or(LossKind::Ce);
        let weights = self.list::<f64>("loss.weights")?;
        Ok(match (kind, weights) {
            (LossKind::Ce, _) => LossSpec::cross_entropy(N_CLASSES),
            (LossKind::Wce, Some(w)) => LossSpec::weighted(w),
            (LossKind::Wce, None) => {
                let mut counts = vec![0; N_CLASSES];
                labels.iter().filter(|&&l| l < N_CLASSES).for_each(|&l| counts[l] += 1);
                LossSpec::weighted(crate::loss::class_frequency_weights(&counts)?)
            }
            (LossKind::Bwce, w) => LossSpec::bias_weighted(w.unwrap_or_else(|| vec![1.0; N_CLASSES])),
        })
    }

    pub fn folds(&self) -> Result<usize> {
        self.or("cv.folds", 5)
    }

    pub fn sweep_rounds(&self) -> Result<usize> {
        self.or("sweep.rounds", 8)
    }

    pub fn schedule(&self) -> Result<WeightSchedule> {
        let d = WeightSchedule::default();
        Ok(WeightSchedule {
            step: self.or("sweep.step", d.step)?,
            lower: self.or("sweep.lower", d.lower)?,
            upper: self.or("sweep.upper", d.upper)?,
            tolerance: self.or("sweep.tolerance", d.tolerance)?,
        })
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let preset = SynthPreset::parse(self.get("synth.preset").unwrap_or("separable"))?;
        let d = preset.spec(self.seed()?);
        let spec = SynthSpec {
            snr: self.or("synth.snr", d.snr)?,
            n_trials_per_class: self.or("synth.trials_per_class", d.n_trials_per_class)?,
            fs: self.or("synth.fs", d.fs)?,
            duration: self.or("synth.duration", d.duration)?,
            frequency: self.or("synth.frequency", d.frequency)?,
            ..d
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn preprocess(&self) -> Result<Preprocess> {
        let channels = self
            .list::<String>("preprocess.channels")?
            .unwrap_or_else(|| MOTOR_CHANNELS.iter().map(|s| s.to_string()).collect());
        Ok(Preprocess {
            notch: self.or("preprocess.notch", 60.0)?,
            notch_q: self.or("preprocess.notch_q", 30.0)?,
            factor: self.or("preprocess.factor", 4)?,
            channels,
            window: EpochWindow {
                start: self.or("preprocess.window_start", 0.0)?,
                duration: self.or("preprocess.window_duration", 4.0)?,
            },
            zscore: self.or("preprocess.zscore", true)?,
        })
    }
}

/// Settings of the notch, decimate, select, epoch and z-score chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocess {
    pub notch: f64,
    pub notch_q: f64,
    pub factor: usize,
    pub channels: Vec<String>,
    pub window: EpochWindow,
    pub zscore: bool,
}

pub const KEYS: &[&str] = &[
    "seed",
    "model.name",
    "model.f1",
    "model.depth_multiplier",
    "model.f2",
    "model.temporal_kernel",
    "model.separable_kernel",
    "model.pool1",
    "model.pool2",
    "model.deep_filters",
    "model.deep_kernel",
    "model.deep_pool",
    "model.dropout",
    "model.max_norm_depthwise",
    "model.max_norm_dense",
    "train.epochs",
    "train.batch_size",
    "train.shuffle",
    "train.lr",
    "train.betas",
    "train.epsilon",
    "loss.kind",
    "loss.weights",
    "preprocess.notch",
    "preprocess.notch_q",
    "preprocess.factor",
    "preprocess.channels",
    "preprocess.window_start",
    "preprocess.window_duration",
    "preprocess.zscore",
    "synth.preset",
    "synth.snr",
    "synth.trials_per_class",
    "synth.fs",
    "synth.duration",
    "synth.frequency",
    "cv.folds",
    "sweep.rounds",
    "sweep.step",
    "sweep.lower",
    "sweep.upper",
    "sweep.tolerance",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_caps() {
        let c = ConfigFile::parse(
            "t",
            "# header\nmodel.name = eegnet\nmodel.deep_filters = 4, 8,16\nmodel.max_norm_dense = none\ntrain.betas=0.8,0.99 # inline\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(c.model_kind().unwrap(), ModelKind::EegNet);
        let m = c.model_config(ModelKind::EegNet, 24, 1000).unwrap();
        assert_eq!(m.deep_filters, [4, 8, 16]);
        assert_eq!(m.max_norm_dense, None);
        assert_eq!(m.max_norm_depthwise, Some(1.0));
        let t = c.train_config(&[]).unwrap();
        assert_eq!((t.adam.beta1, t.adam.beta2, t.seed), (0.8, 0.99, 7));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(ConfigFile::parse("t", "model.nmae = x").is_err());
        assert!(ConfigFile::parse("t", "seed = 1\nseed = 2").is_err());
        assert!(ConfigFile::parse("t", "just words").is_err());
        let c = ConfigFile::parse("t", "train.epochs = many").unwrap();
        assert!(matches!(c.train_config(&[]), Err(Error::Config { .. })));
    }

    #[test]
    fn overrides_win() {
        let mut c = ConfigFile::parse("t", "train.epochs = 3").unwrap();
        c.set("train.epochs", "5");
        assert_eq!(c.train_config(&[]).unwrap().epochs, 5);
    }

    #[test]
    fn wce_defaults_to_inverse_counts() {
        let c = ConfigFile::parse("t", "loss.kind = wce").unwrap();
        let labels = [0, 0, 0, 0, 0, 1, 2, 3, 4];
        let t = c.train_config(&labels).unwrap();
        assert_eq!(t.loss.kind, LossKind::Wce);
        assert_eq!(t.loss.weights, [0.2, 1.0, 1.0, 1.0, 1.0]);
    }
}
