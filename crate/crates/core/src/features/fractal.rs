//! Higuchi and Katz fractal dimensions.

use super::FeatureError;

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean normalised curve length at delay `k` over offsets `m = 1..=k`.
pub(crate) fn higuchi_length(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    let mut count = 0;
    for m in 1..=k {
        let r = (n - m) / k;
        if r == 0 {
            continue;
        }
        // 1-based x(m + i k) is x[m - 1 + i k]
        let path: f64 = (1..=r)
            .map(|i| (x[m - 1 + i * k] - x[m - 1 + (i - 1) * k]).abs())
            .sum();
        total += path * (n - 1) as f64 / (r * k) as f64 / k as f64;
        count += 1;
    }
    total / count as f64
}

/// Slope of ln L(k) against ln(1/k) for k = 1..=kmax.
pub fn higuchi_fd(x: &[f64], kmax: usize) -> Result<f64, FeatureError> {
    if kmax < 2 {
        return Err(FeatureError::BadParams("higuchi_kmax must be at least 2".into()));
    }
    let need = 2 * kmax + 2;
    if x.len() < need {
        return Err(FeatureError::TooShort { need, got: x.len() });
    }
    let mut ln_inv_k = Vec::with_capacity(kmax);
    let mut ln_len = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let l = higuchi_length(x, k);
        if !(l > 0.0) || !l.is_finite() {
            return Err(FeatureError::DegeneratePath);
        }
        ln_inv_k.push(-(k as f64).ln());
        ln_len.push(l.ln());
    }
    Ok(slope(&ln_inv_k, &ln_len))
}

/// Katz dimension of the planar curve (i, x[i]) with unit sample spacing.
pub fn katz_fd(x: &[f64]) -> Result<f64, FeatureError> {
    if x.len() < 3 {
        return Err(FeatureError::TooShort { need: 3, got: x.len() });
    }
    let amplitude_path: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if !(amplitude_path > 0.0) {
        return Err(FeatureError::DegeneratePath);
    }
    let length: f64 = x.windows(2).map(|w| (1.0 + (w[1] - w[0]).powi(2)).sqrt()).sum();
    let diameter = x
        .iter()
        .enumerate()
        .map(|(i, v)| ((i as f64).powi(2) + (v - x[0]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let n = (x.len() - 1) as f64;
    let log_n = n.log10();
    Ok(log_n / (log_n + (diameter / length).log10()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn higuchi_ramp_is_one() {
        let ramp: Vec<f64> = (0..1000).map(|i| i as f64 * 0.3).collect();
        let fd = higuchi_fd(&ramp, 8).unwrap();
        assert!((fd - 1.0).abs() <= 0.05, "{fd}");
    }

    #[test]
    fn higuchi_noise_is_two() {
        let fd = higuchi_fd(&noise(5000, 3), 8).unwrap();
        assert!((fd - 2.0).abs() <= 0.15, "{fd}");
    }

    #[test]
    fn higuchi_ordering() {
        let ramp: Vec<f64> = (0..1000).map(f64::from).collect();
        let sine: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.05).sin()).collect();
        let a = higuchi_fd(&noise(1000, 9), 8).unwrap();
        let b = higuchi_fd(&sine, 8).unwrap();
        let c = higuchi_fd(&ramp, 8).unwrap();
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn higuchi_rejects_degenerate() {
        assert!(higuchi_fd(&[0.0; 100], 8).is_err());
        assert!(higuchi_fd(&noise(100, 1), 1).is_err());
        assert!(matches!(higuchi_fd(&noise(10, 1), 8), Err(FeatureError::TooShort { need: 18, .. })));
    }

    #[test]
    fn katz_cases() {
        let ramp: Vec<f64> = (0..200).map(|i| i as f64 * 2.5).collect();
        assert!((katz_fd(&ramp).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(katz_fd(&[4.0; 20]), Err(FeatureError::DegeneratePath)));
        let triangle: Vec<f64> = (0..200).map(|i| ((i % 20) as f64 - 10.0).abs() * 2.5).collect();
        assert!(katz_fd(&triangle).unwrap() > katz_fd(&ramp).unwrap());
    }
}
