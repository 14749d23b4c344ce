//! Band-pass and notch a synthetic two-channel recording, then cut
//! baseline-corrected epochs around each `ReticleOn` marker.

use std::f64::consts::TAU;

use neurofuse::signal::{self, filter, ContinuousRecording, Marker};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 250.0;
    let n = (20.0 * fs) as usize;
    let mut samples = Vec::with_capacity(2 * n);
    for c in 0..2 {
        for i in 0..n {
            let t = i as f64 / fs;
            // 6 Hz signal, 50 Hz mains, slow drift
            samples.push((TAU * 6.0 * t).sin() + 0.8 * (TAU * 50.0 * t).sin() + 0.5 * t + c as f64);
        }
    }
    let markers: Vec<Marker> = [0.1, 2.0, 5.0, 9.5, 14.0, 19.5]
        .iter()
        .map(|&t| Marker { name: signal::RETICLE_ON.into(), time_s: t })
        .collect();
    let rec = ContinuousRecording::new(vec!["Fz".into(), "Pz".into()], fs, samples, markers)?;

    let bp = filter::design_bandpass(1.0, 30.0, fs)?;
    println!("band-pass: {} taps", bp.len());
    for f in [0.2, 6.0, 30.0, 50.0] {
        println!("  gain at {f:>4} Hz: {:.4}", bp.gain_at(f, fs));
    }
    let clean = signal::notch_filter(&signal::fir_bandpass(&rec, 1.0, 30.0)?, 50.0)?;

    for slot in signal::epochize(&clean, signal::RETICLE_ON, signal::EPOCH_WINDOW) {
        match slot.valid() {
            Some(e) => {
                let e = signal::baseline_correct(e, signal::BASELINE_WINDOW)?;
                let rms = (e.channel(0).iter().map(|v| v * v).sum::<f64>() / e.samples_per_channel as f64).sqrt();
                println!("trial {}: {} x {} samples, Fz rms {rms:.3}", e.trial_id, e.channels(), e.samples_per_channel);
            }
            None => println!("trial {}: window outside the recording", slot.trial_id()),
        }
    }
    Ok(())
}
