//! Rational-factor polyphase resampling with a Kaiser-windowed FIR low-pass.

use super::{FilterSpec, PreprocessError, TARGET_RATE};
use crate::signal_io::Recording;

const KAISER_BETA: f64 = 5.0;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `target/rate` as `(up, down)` in lowest terms. Non-integral rates are
/// resolved to the nearest millihertz.
pub fn rational_factors(rate: f64, target: f64) -> (usize, usize) {
    let scale = if rate.fract() == 0.0 && target.fract() == 0.0 { 1.0 } else { 1000.0 };
    let r = (rate * scale).round() as u64;
    let t = (target * scale).round() as u64;
    let g = gcd(r, t);
    ((t / g) as usize, (r / g) as usize)
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Low-pass prototype for an `up/down` resampler. Cutoff is
/// `min(pi/up, pi/down)`; the taps sum to `up` so the DC gain of the whole
/// resampler is one.
pub fn design_prototype(up: usize, down: usize, taps_per_phase: usize) -> Vec<f64> {
    let m = up.max(down);
    let half = (taps_per_phase / 2) * m;
    let len = 2 * half + 1;
    let cutoff = 1.0 / m as f64;
    let denom = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 - half as f64;
            let sinc = if t == 0.0 {
                1.0
            } else {
                let a = std::f64::consts::PI * cutoff * t;
                a.sin() / a
            };
            let ratio = t / half.max(1) as f64;
            let w = bessel_i0(KAISER_BETA * (1.0 - ratio * ratio).max(0.0).sqrt()) / denom;
            cutoff * sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v *= up as f64 / sum;
    }
    h
}

/// Mirror an index into `0..len` (reflection without repeating the edge).
fn reflect(mut i: i64, len: usize) -> usize {
    let n = len as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Resample one channel by `up/down` with the given prototype. Output length
/// is `round(len * up / down)`.
pub fn resample_channel(x: &[f64], up: usize, down: usize, h: &[f64]) -> Vec<f64> {
    let half = (h.len() / 2) as i64;
    let (p, q) = (up as i64, down as i64);
    let out_len = ((x.len() * up) as f64 / down as f64).round() as usize;
    (0..out_len as i64)
        .map(|k| {
            // Filtered position in the upsampled stream, delay-compensated.
            let centre = k * q + half;
            let lo = (centre - (h.len() as i64 - 1)).div_euclid(p)
                + i64::from((centre - (h.len() as i64 - 1)).rem_euclid(p) != 0);
            let hi = centre.div_euclid(p);
            (lo..=hi)
                .map(|n| h[(centre - n * p) as usize] * x[reflect(n, x.len())])
                .sum()
        })
        .collect()
}

/// Resample every channel to 250 Hz. A recording already at 250 Hz is
/// returned unchanged.
pub fn resample_250(rec: &Recording, spec: &FilterSpec) -> Result<Recording, PreprocessError> {
    let rate = rec.rate();
    if rate < 100.0 {
        return Err(PreprocessError::RateTooLow(rate));
    }
    if rate == TARGET_RATE {
        return Ok(rec.clone());
    }
    let (up, down) = rational_factors(rate, TARGET_RATE);
    let h = design_prototype(up, down, spec.fir_taps);
    Ok(rec.map_channels(TARGET_RATE, |x| resample_channel(x, up, down, &h))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::Channel;
    use rustfft::{num_complex::Complex, FftPlanner};
    use std::f64::consts::PI;

    fn single(samples: Vec<f64>, rate: f64) -> Recording {
        Recording::new(vec![Channel { label: "x".into(), samples }], rate).unwrap()
    }

    #[test]
    fn factors_in_lowest_terms() {
        assert_eq!(rational_factors(400.0, 250.0), (5, 8));
        assert_eq!(rational_factors(256.0, 250.0), (125, 128));
        assert_eq!(rational_factors(500.0, 250.0), (1, 2));
        assert_eq!(rational_factors(100.0, 250.0), (5, 2));
    }

    #[test]
    fn ten_hz_tone_from_400() {
        let fs = 400.0;
        let x: Vec<f64> = (0..1600).map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin()).collect();
        let out = resample_250(&single(x, fs), &FilterSpec::default()).unwrap();
        assert_eq!(out.rate(), 250.0);
        let y = &out.channels()[0].samples;
        assert_eq!(y.len(), 1000);

        let mut buf: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let n = buf.len();
        let (peak, mag) = buf[1..n / 2]
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1, c.norm()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        let freq = peak as f64 * 250.0 / n as f64;
        let amplitude = 2.0 * mag / n as f64;
        assert!((freq - 10.0).abs() <= 0.2, "peak at {freq} Hz");
        assert!((amplitude - 1.0).abs() <= 0.02, "amplitude {amplitude}");
    }

    #[test]
    fn identity_at_target_rate() {
        let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin()).collect();
        let rec = single(x, 250.0);
        assert_eq!(resample_250(&rec, &FilterSpec::default()).unwrap(), rec);
    }

    #[test]
    fn low_rate_rejected() {
        let rec = single(vec![0.0; 100], 80.0);
        assert!(matches!(
            resample_250(&rec, &FilterSpec::default()),
            Err(PreprocessError::RateTooLow(r)) if r == 80.0
        ));
    }

    #[test]
    fn output_length_rounds() {
        let rec = single(vec![1.0; 1001], 256.0);
        let out = resample_250(&rec, &FilterSpec::default()).unwrap();
        assert_eq!(out.len(), (1001.0_f64 * 250.0 / 256.0).round() as usize);
        // DC passes with unit gain away from nothing: mirrored edges keep it flat.
        assert!(out.channels()[0].samples.iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(2, 5), 2);
        assert_eq!(reflect(-9, 5), 1);
    }
}
