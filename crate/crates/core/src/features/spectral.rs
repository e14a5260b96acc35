use rustfft::{num_complex::Complex, FftPlanner};

use super::{FeatureError, FeatureParams};

/// Normalised spectral entropy of each sliding sub-window; returns
/// `(mean, max, min)` across sub-windows. DC is excluded and the entropy is
/// divided by the log of the bin count so each value lies in `[0, 1]`.
pub fn spectral_entropy_stats(x: &[f64], params: &FeatureParams) -> Result<(f64, f64, f64), FeatureError> {
    let win = params.spectral_subwin;
    let hop = params.spectral_hop;
    if win < 4 || hop == 0 {
        return Err(FeatureError::BadParams("spectral_subwin >= 4 and spectral_hop >= 1 required".into()));
    }
    if x.len() < win {
        return Err(FeatureError::TooShort { need: win, got: x.len() });
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win);
    let bins = win / 2;
    let norm = (bins as f64).ln();
    let mut buf = vec![Complex::new(0.0, 0.0); win];
    let mut entropies = Vec::new();
    let mut start = 0;
    while start + win <= x.len() {
        for (b, &v) in buf.iter_mut().zip(&x[start..start + win]) {
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[1..=bins].iter().map(|c| c.norm_sqr()).collect();
        let total: f64 = power.iter().sum();
        // Power left over from rounding on a flat segment is not a spectrum.
        let frame_energy: f64 = x[start..start + win].iter().map(|v| v * v).sum();
        if !(total > 1e-20 * win as f64 * frame_energy) || !total.is_finite() {
            return Err(FeatureError::DegenerateSpectrum);
        }
        let h: f64 = -power
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| {
                let q = p / total;
                q * q.ln()
            })
            .sum::<f64>();
        entropies.push((h / norm).clamp(0.0, 1.0));
        start += hop;
    }
    let mean = entropies.iter().sum::<f64>() / entropies.len() as f64;
    let max = entropies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = entropies.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((mean, max, min))
}
