//! On-disk formats: raw recordings, marker tables and epoch stores.
//!
//! Recording: one ASCII header line
//! `channels,<n>;rate,<hz>;labels,<l1>,<l2>,...` terminated by `\n`, followed
//! by little-endian `f32` samples, channel-major.
//!
//! Markers: CSV with header `event_name,time_s`.
//!
//! Epoch store: magic `NFEP`, one version byte, `u32` trial count, `u32`
//! channels, `u32` samples (all little-endian), then `f32` little-endian
//! values ordered `[trial][channel][sample]`.

use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

use super::{ContinuousRecording, Epoch, Marker, SignalError};

pub const EPOCH_STORE_MAGIC: &[u8; 4] = b"NFEP";
pub const EPOCH_STORE_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("bad magic bytes {0:?}, expected \"NFEP\"")]
    BadMagic([u8; 4]),

    #[error("unsupported epoch store version {0}")]
    UnsupportedVersion(u8),

    #[error("file truncated: expected {expected} bytes of sample data, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("malformed marker row {line}: {reason}")]
    MarkerRow { line: usize, reason: String },

    #[error("epochs disagree on shape (trial {trial_id})")]
    Shape { trial_id: u32 },

    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Writes a recording in the raw header + `f32` format.
pub fn write_recording<W: Write>(mut w: W, rec: &ContinuousRecording) -> Result<(), FormatError> {
    writeln!(
        w,
        "channels,{};rate,{};labels,{}",
        rec.channel_count(),
        rec.sample_rate(),
        rec.labels().join(",")
    )?;
    for v in rec.samples() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads a recording; markers are supplied separately.
pub fn read_recording<R: BufRead>(mut r: R, markers: Vec<Marker>) -> Result<ContinuousRecording, FormatError> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let header = header.trim_end_matches(['\n', '\r']);
    let mut channels = None;
    let mut rate = None;
    let mut labels = None;
    for part in header.split(';') {
        let (key, value) = part
            .split_once(',')
            .ok_or_else(|| FormatError::Header(format!("field {part:?} has no value")))?;
        match key {
            "channels" => {
                channels = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| FormatError::Header(format!("channels: {e}")))?,
                )
            }
            "rate" => {
                rate = Some(
                    value
                        .parse::<f64>()
                        .map_err(|e| FormatError::Header(format!("rate: {e}")))?,
                )
            }
            "labels" => labels = Some(value.split(',').map(str::to_string).collect::<Vec<_>>()),
            other => return Err(FormatError::Header(format!("unknown field {other:?}"))),
        }
    }
    let channels = channels.ok_or_else(|| FormatError::Header("missing channels".into()))?;
    let rate = rate.ok_or_else(|| FormatError::Header("missing rate".into()))?;
    let labels = labels.ok_or_else(|| FormatError::Header("missing labels".into()))?;
    if labels.len() != channels {
        return Err(FormatError::Header(format!(
            "{} labels for {channels} channels",
            labels.len()
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % (4 * channels.max(1)) != 0 {
        return Err(FormatError::Truncated {
            expected: bytes.len().div_ceil(4 * channels.max(1)) * 4 * channels.max(1),
            actual: bytes.len(),
        });
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Ok(ContinuousRecording::new(labels, rate, samples, markers)?)
}

pub fn write_markers<W: Write>(mut w: W, markers: &[Marker]) -> Result<(), FormatError> {
    writeln!(w, "event_name,time_s")?;
    for m in markers {
        writeln!(w, "{},{}", m.name, m.time_s)?;
    }
    Ok(())
}

/// Reads `event_name,time_s` rows. A leading header row is optional.
pub fn read_markers<R: BufRead>(r: R) -> Result<Vec<Marker>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "event_name,time_s") {
            continue;
        }
        let (name, t) = line.split_once(',').ok_or_else(|| FormatError::MarkerRow {
            line: i + 1,
            reason: "expected two fields".into(),
        })?;
        let time_s = t.trim().parse::<f64>().map_err(|e| FormatError::MarkerRow {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(Marker {
            name: name.trim().to_string(),
            time_s,
        });
    }
    Ok(out)
}

/// Dense `[trial][channel][sample]` block of `f32` epoch data.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStore {
    pub channels: usize,
    pub samples: usize,
    pub data: Vec<f32>,
}

impl EpochStore {
    pub fn new(channels: usize, samples: usize) -> Self {
        Self {
            channels,
            samples,
            data: Vec::new(),
        }
    }

    pub fn from_epochs(epochs: &[Epoch]) -> Result<Self, FormatError> {
        let (channels, samples) = epochs
            .first()
            .map(|e| (e.channels(), e.samples_per_channel))
            .unwrap_or((0, 0));
        let mut store = Self::new(channels, samples);
        for e in epochs {
            store.push(e)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, e: &Epoch) -> Result<(), FormatError> {
        if e.channels() != self.channels || e.samples_per_channel != self.samples {
            return Err(FormatError::Shape { trial_id: e.trial_id });
        }
        self.data.extend(e.data.iter().map(|&v| v as f32));
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        let per = self.channels * self.samples;
        if per == 0 {
            0
        } else {
            self.data.len() / per
        }
    }

    pub fn trial(&self, k: usize) -> &[f32] {
        let per = self.channels * self.samples;
        &self.data[k * per..(k + 1) * per]
    }

    /// Materializes trial `k` as an [`Epoch`].
    pub fn epoch(&self, k: usize, labels: &[String], sample_rate: f64, t0_offset_s: f64) -> Epoch {
        Epoch {
            trial_id: k as u32,
            labels: labels.to_vec(),
            sample_rate,
            t0_offset_s,
            samples_per_channel: self.samples,
            data: self.trial(k).iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), FormatError> {
        w.write_all(EPOCH_STORE_MAGIC)?;
        w.write_all(&[EPOCH_STORE_VERSION])?;
        w.write_all(&(self.trial_count() as u32).to_le_bytes())?;
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        w.write_all(&(self.samples as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, FormatError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != EPOCH_STORE_MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != EPOCH_STORE_VERSION {
            return Err(FormatError::UnsupportedVersion(version[0]));
        }
        let mut word = [0u8; 4];
        let mut next = |r: &mut R| -> Result<usize, FormatError> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word) as usize)
        };
        let trials = next(&mut r)?;
        let channels = next(&mut r)?;
        let samples = next(&mut r)?;
        let expected = trials * channels * samples * 4;
        let mut bytes = Vec::with_capacity(expected);
        r.read_to_end(&mut bytes)?;
        if bytes.len() != expected {
            return Err(FormatError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            channels,
            samples,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recording_round_trip() {
        let labels = vec!["Cz".to_string(), "Pz".to_string()];
        let samples: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let markers = vec![Marker {
            name: "ReticleOn".into(),
            time_s: 0.01,
        }];
        let rec = ContinuousRecording::new(labels, 500.0, samples, markers.clone()).unwrap();
        let mut buf = Vec::new();
        write_recording(&mut buf, &rec).unwrap();
        assert!(buf.starts_with(b"channels,2;rate,500;labels,Cz,Pz\n"));
        let back = read_recording(io::Cursor::new(buf), markers).unwrap();
        assert_eq!(back, rec);

        let mut mbuf = Vec::new();
        write_markers(&mut mbuf, rec.markers()).unwrap();
        assert_eq!(read_markers(io::Cursor::new(mbuf)).unwrap(), rec.markers());
    }

    #[test]
    fn markers_without_header_and_bad_rows() {
        let m = read_markers(io::Cursor::new("ReticleOn,1.5\nButtonPress,2\n")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].time_s, 2.0);
        assert!(matches!(
            read_markers(io::Cursor::new("ReticleOn;1.5\n")),
            Err(FormatError::MarkerRow { line: 1, .. })
        ));
    }

    #[test]
    fn epoch_store_layout() {
        let mut store = EpochStore::new(2, 3);
        store.data = (0..12).map(|i| i as f32).collect();
        let mut buf = Vec::new();
        store.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"NFEP");
        assert_eq!(buf[4], 1);
        assert_eq!(&buf[5..9], &2u32.to_le_bytes());
        assert_eq!(&buf[9..13], &2u32.to_le_bytes());
        assert_eq!(&buf[13..17], &3u32.to_le_bytes());
        assert_eq!(buf.len(), 17 + 12 * 4);
        let back = EpochStore::read(io::Cursor::new(&buf)).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.trial(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn epoch_store_errors() {
        let err = EpochStore::read(io::Cursor::new(b"XXXX\x01".to_vec())).unwrap_err();
        assert!(matches!(err, FormatError::BadMagic(_)));
        let err = EpochStore::read(io::Cursor::new(b"NFEP\x07".to_vec())).unwrap_err();
        assert!(matches!(err, FormatError::UnsupportedVersion(7)));
        let mut buf = b"NFEP\x01".to_vec();
        for v in [1u32, 2, 2] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            EpochStore::read(io::Cursor::new(buf)).unwrap_err(),
            FormatError::Truncated { expected: 16, actual: 8 }
        ));
    }
}
