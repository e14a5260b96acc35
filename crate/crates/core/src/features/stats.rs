//! Time-domain statistics over one channel.

use super::FeatureError;

fn require(x: &[f64], need: usize) -> Result<(), FeatureError> {
    if x.len() < need {
        Err(FeatureError::TooShort { need, got: x.len() })
    } else {
        Ok(())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population central moments 2, 3 and 4.
fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let m = mean(x);
    let n = x.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

fn variance(x: &[f64]) -> f64 {
    central_moments(x).0
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> Result<f64, FeatureError> {
    require(x, 2)?;
    Ok(variance(x).sqrt())
}

/// Amplitude-histogram entropy in bits, `bins` equal-width bins spanning
/// `[min, max]`. A constant signal has zero entropy.
pub fn shannon_entropy(x: &[f64], bins: usize) -> Result<f64, FeatureError> {
    require(x, 2)?;
    if bins < 2 {
        return Err(FeatureError::BadParams("entropy_bins must be at least 2".into()));
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; bins];
    for v in x {
        let b = (((v - lo) / range) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = x.len() as f64;
    Ok(-counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>())
}

/// Pearson (non-excess) kurtosis m4 / m2^2.
pub fn kurtosis(x: &[f64]) -> Result<f64, FeatureError> {
    require(x, 4)?;
    let (m2, _, m4) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(FeatureError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2))
}

/// m3 / m2^(3/2).
pub fn skewness(x: &[f64]) -> Result<f64, FeatureError> {
    require(x, 3)?;
    let (m2, m3, _) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(FeatureError::ZeroVariance);
    }
    Ok(m3 / m2.powf(1.5))
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Hjorth mobility and complexity.
pub fn hjorth(x: &[f64]) -> Result<(f64, f64), FeatureError> {
    require(x, 3)?;
    let d1 = diff(x);
    let d2 = diff(&d1);
    let (v0, v1) = (variance(x), variance(&d1));
    if !(v0 > 0.0 && v1 > 0.0) {
        return Err(FeatureError::ZeroVariance);
    }
    let mobility = (v1 / v0).sqrt();
    let mobility_d1 = if d2.len() >= 2 { (variance(&d2) / v1).sqrt() } else { 0.0 };
    Ok((mobility, mobility_d1 / mobility))
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Mean Teager-Kaiser energy x[n]^2 - x[n-1] x[n+1] over interior samples.
pub fn nonlinear_energy(x: &[f64]) -> Result<f64, FeatureError> {
    require(x, 3)?;
    let total: f64 = x.windows(3).map(|w| w[1] * w[1] - w[0] * w[2]).sum();
    Ok(total / (x.len() - 2) as f64)
}
