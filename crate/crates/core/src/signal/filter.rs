//! Linear-phase FIR filters (windowed sinc, Hamming window) applied with
//! group-delay compensation, so the output is zero-phase.

use rustfft::{num_complex::Complex, FftPlanner};

use super::SignalError;

/// Minimum number of taps for any designed filter.
pub const MIN_TAPS: usize = 101;
/// Transition width of the 50 Hz notch, in Hz.
pub const NOTCH_TRANSITION_HZ: f64 = 1.0;
/// Half-width of the notch stopband around the notch frequency, in Hz.
pub const NOTCH_HALF_WIDTH_HZ: f64 = 1.0;

/// A symmetric (linear-phase) FIR kernel with an odd number of taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FirKernel {
    taps: Vec<f64>,
}

impl FirKernel {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate;
        let (re, im) = self.taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, h)| {
            let a = w * n as f64;
            (re + h * a.cos(), im - h * a.sin())
        });
        (re * re + im * im).sqrt()
    }

    /// Filters one channel, compensating the group delay so the response is
    /// zero-phase. The signal is mirrored at both ends to limit edge effects.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let half = self.taps.len() / 2;
        let padded = reflect_pad(x, half);
        let full = fft_convolve(&padded, &self.taps);
        // `full[k]` aligns padded sample `k - half`; the original sample `i`
        // sits at padded index `i + half`, so its compensated output is at
        // `i + 2 * half`.
        full[2 * half..2 * half + n].to_vec()
    }
}

/// Number of taps for a Hamming-window design with the given transition.
pub fn taps_for_transition(transition_hz: f64, sample_rate: f64) -> usize {
    let n = (3.3 * sample_rate / transition_hz).ceil() as usize;
    let n = n.max(MIN_TAPS);
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

fn hamming(n: usize, len: usize) -> f64 {
    0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Windowed-sinc low-pass kernel with unit DC gain.
fn lowpass_taps(cutoff_hz: f64, sample_rate: f64, len: usize) -> Vec<f64> {
    let fc = cutoff_hz / sample_rate;
    let mid = (len / 2) as f64;
    let mut h: Vec<f64> = (0..len)
        .map(|n| 2.0 * fc * sinc(2.0 * fc * (n as f64 - mid)) * hamming(n, len))
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Transition bandwidths for a band-pass design: `(low, high)` in Hz.
pub fn bandpass_transitions(low_hz: f64, high_hz: f64, sample_rate: f64) -> (f64, f64) {
    let nyq = sample_rate / 2.0;
    let low_tw = (0.25 * low_hz).max(2.0).min(low_hz);
    let high_tw = (0.25 * high_hz).max(2.0).min(nyq - high_hz);
    (low_tw, high_tw)
}

/// Band-pass kernel: difference of two low-pass kernels of equal length.
pub fn design_bandpass(low_hz: f64, high_hz: f64, sample_rate: f64) -> Result<FirKernel, SignalError> {
    let nyq = sample_rate / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyq) {
        return Err(SignalError::BandEdges {
            low: low_hz,
            high: high_hz,
            nyquist: nyq,
        });
    }
    let (low_tw, high_tw) = bandpass_transitions(low_hz, high_hz, sample_rate);
    let len = taps_for_transition(low_tw.min(high_tw), sample_rate);
    let hi = lowpass_taps(high_hz + high_tw / 2.0, sample_rate, len);
    let lo = lowpass_taps(low_hz - low_tw / 2.0, sample_rate, len);
    let taps = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
    Ok(FirKernel { taps })
}

/// Band-stop kernel centred at `freq_hz`.
pub fn design_notch(freq_hz: f64, sample_rate: f64) -> Result<FirKernel, SignalError> {
    let nyq = sample_rate / 2.0;
    let lo_edge = freq_hz - NOTCH_HALF_WIDTH_HZ;
    let hi_edge = freq_hz + NOTCH_HALF_WIDTH_HZ;
    if !(lo_edge > 0.0 && hi_edge < nyq) {
        return Err(SignalError::NotchFrequency {
            freq: freq_hz,
            nyquist: nyq,
        });
    }
    let len = taps_for_transition(NOTCH_TRANSITION_HZ, sample_rate);
    let hi = lowpass_taps(hi_edge, sample_rate, len);
    let lo = lowpass_taps(lo_edge, sample_rate, len);
    let mid = len / 2;
    let taps = (0..len)
        .map(|n| {
            let delta = if n == mid { 1.0 } else { 0.0 };
            delta - (hi[n] - lo[n])
        })
        .collect();
    Ok(FirKernel { taps })
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    // Mirror without repeating the edge sample; beyond the mirror, zeros.
    for k in (1..=pad).rev() {
        out.push(if k < n { x[k] } else { 0.0 });
    }
    out.extend_from_slice(x);
    for k in 1..=pad {
        out.push(if k < n { x[n - 1 - k] } else { 0.0 });
    }
    out
}

fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(size, Complex::new(0.0, 0.0));
    let mut b: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    b.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a.iter().take(out_len).map(|c| c.re * scale).collect()
}
