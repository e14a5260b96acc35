//! Second-order IIR notch (RBJ biquad) for line-noise removal.

use std::f64::consts::PI;

use super::{FilterSpec, PreprocessError, TARGET_RATE};
use crate::signal_io::Recording;

/// Normalised biquad coefficients (a0 = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn notch(center_hz: f64, bandwidth_hz: f64, rate: f64) -> Self {
        let w0 = 2.0 * PI * center_hz / rate;
        let q = center_hz / bandwidth_hz;
        let alpha = w0.sin() / (2.0 * q);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [1.0 / a0, -2.0 * cos / a0, 1.0 / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    /// Direct form II transposed, zero initial state.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (mut z1, mut z2) = (0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = self.b[0] * v + z1;
                z1 = self.b[1] * v - self.a[0] * y + z2;
                z2 = self.b[2] * v - self.a[1] * y;
                y
            })
            .collect()
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain(&self, freq_hz: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / rate;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, -(self.b[1] * s1 + self.b[2] * s2));
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, -(self.a[0] * s1 + self.a[1] * s2));
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Causal notch at `spec.notch_center` over every channel of a 250 Hz recording.
pub fn notch_60(rec: &Recording, spec: &FilterSpec) -> Result<Recording, PreprocessError> {
    if rec.rate() != TARGET_RATE {
        return Err(PreprocessError::WrongRate(rec.rate()));
    }
    let filter = Biquad::notch(spec.notch_center, spec.notch_bandwidth, TARGET_RATE);
    Ok(rec.map_channels(TARGET_RATE, |x| filter.apply(x))?)
}
