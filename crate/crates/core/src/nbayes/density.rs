//! Per-(class, feature) likelihood models.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::registry::Registry;

/// Densities are floored here before taking logs so scores stay finite.
pub const DENSITY_FLOOR: f64 = 1e-300;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Fitted state for one (class, feature) pair. KDE uses the stored training
/// values and bandwidth; the parametric model uses mean and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDensity {
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub mean: f64,
    pub spread: f64,
}

pub trait DensityStrategy: Send + Sync {
    fn fit(&self, values: &[f64]) -> ColumnDensity;
    fn log_density(&self, model: &ColumnDensity, x: f64) -> f64;
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn floor_width(mean: f64) -> f64 {
    1e-6 * (1.0 + mean.abs())
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^(-1/5)`. A zero IQR falls back to
/// the standard deviation; a zero standard deviation gets a small floor.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let sd = sample_std(values);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (values.len() as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        floor_width(mean(values))
    }
}

/// Gaussian kernel density on unbounded support.
pub struct KernelDensity;

impl DensityStrategy for KernelDensity {
    fn fit(&self, values: &[f64]) -> ColumnDensity {
        ColumnDensity {
            values: values.to_vec(),
            bandwidth: silverman_bandwidth(values),
            mean: mean(values),
            spread: sample_std(values),
        }
    }

    fn log_density(&self, model: &ColumnDensity, x: f64) -> f64 {
        let h = model.bandwidth;
        let norm = 1.0 / (model.values.len() as f64 * h * (2.0 * PI).sqrt());
        let sum: f64 = model
            .values
            .iter()
            .map(|v| {
                let z = (x - v) / h;
                (-0.5 * z * z).exp()
            })
            .sum();
        (norm * sum).max(DENSITY_FLOOR).ln()
    }
}

/// One Gaussian per (class, feature).
pub struct GaussianDensity;

impl DensityStrategy for GaussianDensity {
    fn fit(&self, values: &[f64]) -> ColumnDensity {
        let m = mean(values);
        let sd = sample_std(values);
        ColumnDensity {
            values: Vec::new(),
            bandwidth: 0.0,
            mean: m,
            spread: if sd > 0.0 { sd } else { floor_width(m) },
        }
    }

    fn log_density(&self, model: &ColumnDensity, x: f64) -> f64 {
        let z = (x - model.mean) / model.spread;
        let log_pdf = -0.5 * z * z - model.spread.ln() - LN_SQRT_2PI;
        log_pdf.max(DENSITY_FLOOR.ln())
    }
}

/// Registered likelihood models: `kde` (default) and `gaussian`.
pub fn densities() -> &'static Registry<dyn DensityStrategy> {
    static REGISTRY: OnceLock<Registry<dyn DensityStrategy>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn DensityStrategy> = Registry::new("density model");
        r.register("kde", Box::new(KernelDensity))
            .register("gaussian", Box::new(GaussianDensity));
        r
    })
}
