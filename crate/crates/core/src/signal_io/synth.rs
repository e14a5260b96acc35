//! Labelled synthetic recordings. Each class has a fixed deterministic
//! template; the seed only drives the background noise and a per-recording
//! gain, so template timing is identical across seeds.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::{Channel, Recording, SeizureType, STANDARD_MONTAGE};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("duration {0} s is shorter than one 1.8 s window")]
    BadDuration(f64),
    #[error("rate {0} Hz is below 100 Hz")]
    BadRate(f64),
    #[error("focal label is not a raw seizure type")]
    MergedLabel,
}

/// Background EEG: AR(1) low-frequency activity plus a white floor (uV).
const BACKGROUND_AR: f64 = 0.97;
const BACKGROUND_STD: f64 = 12.0;
const WHITE_STD: f64 = 1.5;

/// Left fronto-temporal electrodes carrying the focal rhythm.
const SIMPLE_PARTIAL_CHANNELS: [&str; 4] = ["F7", "T3", "T5", "C3"];
const COMPLEX_PARTIAL_CHANNELS: [&str; 10] =
    ["F7", "T3", "T5", "C3", "Fp1", "F3", "P3", "O1", "Fz", "Cz"];

fn gaussian_pulse(t: f64, centre: f64, width: f64) -> f64 {
    let z = (t - centre) / width;
    (-0.5 * z * z).exp()
}

/// Template value for `class` on montage channel `ch` at time `t` seconds.
fn template(class: SeizureType, ch: &str, t: f64) -> f64 {
    match class {
        SeizureType::Absence => {
            // 3 Hz generalised spike-and-wave
            let phase = (t * 3.0).fract() / 3.0;
            let spike = 90.0 * gaussian_pulse(phase, 0.02, 0.008);
            let wave = -45.0 * (2.0 * PI * 3.0 * (t - 0.09)).cos().max(0.0);
            spike + wave
        }
        SeizureType::Tonic => 55.0 * (2.0 * PI * 20.0 * t).sin(),
        SeizureType::TonicClonic => {
            let envelope = (0.5 + 0.5 * (2.0 * PI * 1.0 * t).sin()).powi(2);
            80.0 * envelope * (2.0 * PI * 10.0 * t).sin()
        }
        SeizureType::Myoclonic => {
            // Sparse biphasic jerks at fixed irregular offsets within each 2.1 s cycle.
            const OFFSETS: [f64; 3] = [0.25, 0.9, 1.45];
            let cyc = t % 2.1;
            OFFSETS
                .iter()
                .map(|&c| 160.0 * (gaussian_pulse(cyc, c, 0.012) - gaussian_pulse(cyc, c + 0.03, 0.015)))
                .sum()
        }
        SeizureType::SimplePartial if SIMPLE_PARTIAL_CHANNELS.contains(&ch) => {
            40.0 * (2.0 * PI * 6.0 * t).sin()
        }
        SeizureType::ComplexPartial if COMPLEX_PARTIAL_CHANNELS.contains(&ch) => {
            40.0 * (2.0 * PI * 6.0 * t).sin()
        }
        _ => 0.0,
    }
}

fn check_args(class: SeizureType, duration_s: f64, rate: f64) -> Result<usize, SynthError> {
    if class == SeizureType::Focal {
        return Err(SynthError::MergedLabel);
    }
    if !(duration_s >= 1.8) || !duration_s.is_finite() {
        return Err(SynthError::BadDuration(duration_s));
    }
    if !(rate >= 100.0) || !rate.is_finite() {
        return Err(SynthError::BadRate(rate));
    }
    Ok((duration_s * rate).round() as usize)
}

/// Deterministic template and noise parts of a synthetic recording, returned
/// separately. `synth_recording` is their sum.
pub fn synth_components(
    class: SeizureType,
    duration_s: f64,
    rate: f64,
    seed: u64,
) -> Result<(Recording, Recording), SynthError> {
    let n = check_args(class, duration_s, rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = rng.random_range(0.75..1.25);
    let drive = Normal::new(0.0, BACKGROUND_STD * (1.0 - BACKGROUND_AR * BACKGROUND_AR).sqrt())
        .expect("finite std");
    let white = Normal::new(0.0, WHITE_STD).expect("finite std");

    let mut templates = Vec::with_capacity(STANDARD_MONTAGE.len());
    let mut noises = Vec::with_capacity(STANDARD_MONTAGE.len());
    for name in STANDARD_MONTAGE {
        let samples: Vec<f64> = (0..n)
            .map(|i| gain * template(class, name, i as f64 / rate))
            .collect();
        let mut state = drive.sample(&mut rng) / (1.0 - BACKGROUND_AR * BACKGROUND_AR).sqrt();
        let noise: Vec<f64> = (0..n)
            .map(|_| {
                state = BACKGROUND_AR * state + drive.sample(&mut rng);
                state + white.sample(&mut rng)
            })
            .collect();
        templates.push(Channel { label: name.to_string(), samples });
        noises.push(Channel { label: name.to_string(), samples: noise });
    }
    let template = Recording::new(templates, rate).expect("non-empty synthetic recording");
    let noise = Recording::new(noises, rate).expect("non-empty synthetic recording");
    Ok((template, noise))
}

/// A 19-channel synthetic recording of `class`, deterministic in `seed`.
pub fn synth_recording(
    class: SeizureType,
    duration_s: f64,
    rate: f64,
    seed: u64,
) -> Result<Recording, SynthError> {
    let (template, noise) = synth_components(class, duration_s, rate, seed)?;
    let channels = template
        .into_channels()
        .into_iter()
        .zip(noise.into_channels())
        .map(|(t, n)| Channel {
            label: t.label,
            samples: t.samples.iter().zip(&n.samples).map(|(a, b)| a + b).collect(),
        })
        .collect();
    Ok(Recording::new(channels, rate).expect("non-empty synthetic recording"))
}
