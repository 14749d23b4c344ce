//! Preprocessing of continuous multichannel recordings into masked,
//! baseline-corrected epochs locked to the `ReticleOn` event.

pub mod filter;
pub mod formats;

use std::collections::HashSet;

use thiserror::Error;

pub use filter::{design_bandpass, design_notch, FirKernel};

/// Event every epoch is time-locked to.
pub const RETICLE_ON: &str = "ReticleOn";
/// Epoch window relative to the event, half-open `[start, end)`, seconds.
pub const EPOCH_WINDOW: (f64, f64) = (-0.2, 0.8);
/// Baseline interval relative to the event, seconds.
pub const BASELINE_WINDOW: (f64, f64) = (-0.2, 0.0);

/// Central, parietal and occipital 10-20 channels used for covariance
/// features, in feature order.
pub const DEFAULT_MASK: [&str; 16] = [
    "C3", "Cz", "C4", "CP1", "CP2", "CP5", "CP6", "P3", "Pz", "P4", "P7", "P8", "O1", "Oz", "O2", "POz",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("band edges {low} Hz .. {high} Hz invalid for Nyquist {nyquist} Hz")]
    BandEdges { low: f64, high: f64, nyquist: f64 },

    #[error("notch frequency {freq} Hz invalid for Nyquist {nyquist} Hz")]
    NotchFrequency { freq: f64, nyquist: f64 },

    #[error("sample rate must be positive, got {0}")]
    SampleRate(f64),

    #[error("duplicate channel label {0:?}")]
    DuplicateLabel(String),

    #[error("unknown channel label {0:?}")]
    UnknownLabel(String),

    #[error("recording has {expected} values per channel layout but {actual} samples were supplied")]
    SampleCount { expected: usize, actual: usize },

    #[error("marker {name:?} at {time_s} s lies outside the recording (duration {duration_s} s)")]
    MarkerOutOfRange { name: String, time_s: f64, duration_s: f64 },

    #[error("interval [{start}, {end}) s is empty or outside the epoch window")]
    Interval { start: f64, end: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub name: String,
    pub time_s: f64,
}

/// A continuous recording. Samples are channel-major: channel `c` occupies
/// `samples[c * n_samples .. (c + 1) * n_samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRecording {
    labels: Vec<String>,
    sample_rate: f64,
    n_samples: usize,
    samples: Vec<f64>,
    markers: Vec<Marker>,
}

fn check_unique(labels: &[String]) -> Result<(), SignalError> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(SignalError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

impl ContinuousRecording {
    pub fn new(
        labels: Vec<String>,
        sample_rate: f64,
        samples: Vec<f64>,
        markers: Vec<Marker>,
    ) -> Result<Self, SignalError> {
        if !(sample_rate > 0.0) {
            return Err(SignalError::SampleRate(sample_rate));
        }
        check_unique(&labels)?;
        let channels = labels.len().max(1);
        if samples.len() % channels != 0 {
            return Err(SignalError::SampleCount {
                expected: channels,
                actual: samples.len(),
            });
        }
        let n_samples = if labels.is_empty() { 0 } else { samples.len() / channels };
        let duration_s = n_samples as f64 / sample_rate;
        for m in &markers {
            if !(m.time_s >= 0.0 && m.time_s <= duration_s) {
                return Err(SignalError::MarkerOutOfRange {
                    name: m.name.clone(),
                    time_s: m.time_s,
                    duration_s,
                });
            }
        }
        Ok(Self {
            labels,
            sample_rate,
            n_samples,
            samples,
            markers,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn channel_count(&self) -> usize {
        self.labels.len()
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }

    fn map_channels(&self, kernel: &FirKernel) -> Self {
        let mut samples = Vec::with_capacity(self.samples.len());
        for c in 0..self.channel_count() {
            samples.extend(kernel.apply(self.channel(c)));
        }
        Self {
            samples,
            ..self.clone()
        }
    }
}

/// Zero-phase FIR band-pass.
pub fn fir_bandpass(rec: &ContinuousRecording, low_hz: f64, high_hz: f64) -> Result<ContinuousRecording, SignalError> {
    let kernel = design_bandpass(low_hz, high_hz, rec.sample_rate)?;
    Ok(rec.map_channels(&kernel))
}

/// Zero-phase FIR band-stop around `freq_hz`.
pub fn notch_filter(rec: &ContinuousRecording, freq_hz: f64) -> Result<ContinuousRecording, SignalError> {
    let kernel = design_notch(freq_hz, rec.sample_rate)?;
    Ok(rec.map_channels(&kernel))
}

/// A fixed-window multichannel segment, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub trial_id: u32,
    pub labels: Vec<String>,
    pub sample_rate: f64,
    pub t0_offset_s: f64,
    pub samples_per_channel: usize,
    pub data: Vec<f64>,
}

impl Epoch {
    pub fn channels(&self) -> usize {
        self.labels.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.samples_per_channel..(c + 1) * self.samples_per_channel]
    }

    pub fn duration_s(&self) -> f64 {
        self.samples_per_channel as f64 / self.sample_rate
    }

    /// Sample index of time `t` (relative to the event).
    fn index_of(&self, t: f64) -> i64 {
        ((t - self.t0_offset_s) * self.sample_rate).round() as i64
    }
}

/// One `ReticleOn` marker's extraction outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum EpochSlot {
    Valid(Epoch),
    /// The window did not fit inside the recording.
    Invalid { trial_id: u32, marker_time_s: f64 },
}

impl EpochSlot {
    pub fn trial_id(&self) -> u32 {
        match self {
            EpochSlot::Valid(e) => e.trial_id,
            EpochSlot::Invalid { trial_id, .. } => *trial_id,
        }
    }

    pub fn valid(&self) -> Option<&Epoch> {
        match self {
            EpochSlot::Valid(e) => Some(e),
            EpochSlot::Invalid { .. } => None,
        }
    }
}

/// Cuts one epoch per `event_name` marker over the half-open window
/// `[t + start, t + end)`. Trial ids number the markers in time order.
pub fn epochize(rec: &ContinuousRecording, event_name: &str, window: (f64, f64)) -> Vec<EpochSlot> {
    let fs = rec.sample_rate;
    let mut times: Vec<f64> = rec
        .markers
        .iter()
        .filter(|m| m.name == event_name)
        .map(|m| m.time_s)
        .collect();
    times.sort_by(f64::total_cmp);

    times
        .into_iter()
        .enumerate()
        .map(|(k, t)| {
            let trial_id = k as u32;
            let start = ((t + window.0) * fs).round() as i64;
            let end = ((t + window.1) * fs).round() as i64;
            if start < 0 || end > rec.n_samples as i64 || end <= start {
                return EpochSlot::Invalid {
                    trial_id,
                    marker_time_s: t,
                };
            }
            let (start, end) = (start as usize, end as usize);
            let len = end - start;
            let mut data = Vec::with_capacity(len * rec.channel_count());
            for c in 0..rec.channel_count() {
                data.extend_from_slice(&rec.channel(c)[start..end]);
            }
            EpochSlot::Valid(Epoch {
                trial_id,
                labels: rec.labels.clone(),
                sample_rate: fs,
                t0_offset_s: window.0,
                samples_per_channel: len,
                data,
            })
        })
        .collect()
}

/// Subtracts, per channel, the mean over `[start, end)` (seconds relative to
/// the event).
pub fn baseline_correct(e: &Epoch, interval: (f64, f64)) -> Result<Epoch, SignalError> {
    let a = e.index_of(interval.0);
    let b = e.index_of(interval.1);
    if a < 0 || b <= a || b > e.samples_per_channel as i64 {
        return Err(SignalError::Interval {
            start: interval.0,
            end: interval.1,
        });
    }
    let (a, b) = (a as usize, b as usize);
    let mut out = e.clone();
    let n = e.samples_per_channel;
    for c in 0..e.channels() {
        let ch = &mut out.data[c * n..(c + 1) * n];
        let mean = ch[a..b].iter().sum::<f64>() / (b - a) as f64;
        for v in ch.iter_mut() {
            *v -= mean;
        }
    }
    Ok(out)
}

/// Selects and reorders channels to match `mask`.
pub fn apply_channel_mask<S: AsRef<str>>(e: &Epoch, mask: &[S]) -> Result<Epoch, SignalError> {
    let mut seen = HashSet::new();
    let mut idx = Vec::with_capacity(mask.len());
    for label in mask {
        let label = label.as_ref();
        if !seen.insert(label) {
            return Err(SignalError::DuplicateLabel(label.to_string()));
        }
        let c = e
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| SignalError::UnknownLabel(label.to_string()))?;
        idx.push(c);
    }
    let n = e.samples_per_channel;
    let mut data = Vec::with_capacity(idx.len() * n);
    for &c in &idx {
        data.extend_from_slice(e.channel(c));
    }
    Ok(Epoch {
        labels: mask.iter().map(|s| s.as_ref().to_string()).collect(),
        data,
        ..e.clone()
    })
}
