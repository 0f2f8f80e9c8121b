//! EEGF: a flat little-endian container for epoched EEG.
//!
//! ```text
//! "EEGF"  u32 version=1  f32 fs  u32 n_epochs  u32 n_channels  u32 n_samples
//! n_channels x [u8; 8]   ASCII names, space padded
//! n_epochs   x u8        labels
//! n_epochs * n_channels * n_samples x f32   epoch-major, then channel-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{EegfError, Error, Result};
use crate::signal::{EpochedDataset, N_CLASSES};

pub const MAGIC: [u8; 4] = *b"EEGF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 3 * 4;
const NAME_LEN: usize = 8;

pub fn encode(ds: &EpochedDataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + ds.n_channels() * NAME_LEN + ds.n_trials() + ds.data.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.fs as f32).to_le_bytes());
    for n in [ds.n_trials(), ds.n_channels(), ds.n_samples] {
        let n = u32::try_from(n).map_err(|_| Error::invalid("write_eegf", format!("dimension {n} exceeds u32")))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    for name in &ds.channel_names {
        if !name.is_ascii() || name.len() > NAME_LEN || name.ends_with(' ') {
            return Err(EegfError::BadChannelName(name.clone()).into());
        }
        out.extend_from_slice(format!("{name:<8}").as_bytes());
    }
    for (epoch, &label) in ds.labels.iter().enumerate() {
        match u8::try_from(label) {
            Ok(l) if label < N_CLASSES => out.push(l),
            _ => {
                return Err(EegfError::BadLabel {
                    epoch,
                    label: label.min(255) as u8,
                }
                .into())
            }
        }
    }
    for &v in &ds.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<EpochedDataset, EegfError> {
    let truncated = |expected| EegfError::Truncated {
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(EegfError::BadMagic(magic));
    }
    if bytes.len() < 8 {
        return Err(truncated(HEADER_LEN));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(EegfError::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let fs = f32::from_le_bytes(bytes[8..12].try_into().unwrap()) as f64;
    let [n_epochs, n_channels, n_samples] = [12, 16, 20].map(|at| u32_at(bytes, at) as usize);
    let n_values = n_epochs * n_channels * n_samples;
    let expected = HEADER_LEN + n_channels * NAME_LEN + n_epochs + 4 * n_values;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    if bytes.len() > expected {
        return Err(EegfError::TrailingBytes {
            expected,
            found: bytes.len(),
        });
    }

    let mut at = HEADER_LEN;
    let mut channel_names = Vec::with_capacity(n_channels);
    for raw in bytes[at..at + n_channels * NAME_LEN].chunks(NAME_LEN) {
        let name = std::str::from_utf8(raw)
            .ok()
            .filter(|s| s.is_ascii())
            .ok_or_else(|| EegfError::BadChannelName(String::from_utf8_lossy(raw).into_owned()))?;
        channel_names.push(name.trim_end_matches(' ').to_string());
    }
    at += n_channels * NAME_LEN;
    let mut labels = Vec::with_capacity(n_epochs);
    for (epoch, &label) in bytes[at..at + n_epochs].iter().enumerate() {
        if label as usize >= N_CLASSES {
            return Err(EegfError::BadLabel { epoch, label });
        }
        labels.push(label as usize);
    }
    at += n_epochs;
    let data = bytes[at..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(EpochedDataset {
        fs,
        channel_names,
        n_samples,
        data,
        labels,
    })
}

pub fn write_eegf(ds: &EpochedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(ds)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_eegf(path: impl AsRef<Path>) -> Result<EpochedDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_trials() -> EpochedDataset {
        EpochedDataset {
            fs: 250.0,
            channel_names: vec!["C3".into(), "CPz".into()],
            n_samples: 3,
            data: (0..12).map(|i| i as f64 * 0.25 - 1.0).collect(),
            labels: vec![4, 0],
        }
    }

    #[test]
    fn byte_layout() {
        let bytes = encode(&two_trials()).unwrap();
        assert_eq!(&bytes[..4], b"EEGF");
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!(f32::from_le_bytes(bytes[8..12].try_into().unwrap()), 250.0);
        assert_eq!([u32_at(&bytes, 12), u32_at(&bytes, 16), u32_at(&bytes, 20)], [2, 2, 3]);
        assert_eq!(&bytes[24..40], b"C3      CPz     ");
        assert_eq!(&bytes[40..42], &[4, 0]);
        assert_eq!(bytes.len(), 42 + 12 * 4);
        assert_eq!(f32::from_le_bytes(bytes[42..46].try_into().unwrap()), -1.0);
    }

    #[test]
    fn round_trip() {
        let ds = two_trials();
        assert_eq!(decode(&encode(&ds).unwrap()).unwrap(), ds);
        let empty = EpochedDataset {
            data: vec![],
            labels: vec![],
            ..ds
        };
        assert_eq!(decode(&encode(&empty).unwrap()).unwrap(), empty);
    }

    #[test]
    fn distinct_failures() {
        let bytes = encode(&two_trials()).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(EegfError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..10]), Err(EegfError::Truncated { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(EegfError::TrailingBytes { .. })));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(EegfError::BadMagic(_))));
        let mut version = bytes.clone();
        version[4] = 2;
        assert_eq!(decode(&version), Err(EegfError::UnsupportedVersion(2)));
        let mut label = bytes;
        label[40] = 5;
        assert_eq!(decode(&label), Err(EegfError::BadLabel { epoch: 0, label: 5 }));
    }

    #[test]
    fn rejects_unencodable_datasets() {
        let mut ds = two_trials();
        ds.channel_names[0] = "TOOLONGNAME".into();
        assert!(encode(&ds).is_err());
        let mut ds = two_trials();
        ds.labels[1] = 7;
        assert!(encode(&ds).is_err());
    }
}
