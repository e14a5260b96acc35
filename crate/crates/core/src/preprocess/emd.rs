//! First intrinsic mode function by EMD sifting.

use super::PreprocessError;

/// Number of extrema mirrored past each end of the signal before fitting
/// envelopes.
const MIRRORED_EXTREMA: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Imf {
    pub samples: Vec<f64>,
    /// Input had fewer than two local extrema and was returned unchanged.
    pub no_extrema: bool,
    pub sift_iterations: usize,
}

fn local_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..x.len().saturating_sub(1) {
        let (prev, cur, next) = (x[i - 1], x[i], x[i + 1]);
        if cur > prev && cur >= next {
            maxima.push(i);
        } else if cur < prev && cur <= next {
            minima.push(i);
        }
    }
    (maxima, minima)
}

/// Natural cubic spline through `(xs, ys)` (strictly increasing `xs`),
/// evaluated at integer positions `0..len`.
fn natural_spline(xs: &[f64], ys: &[f64], len: usize) -> Vec<f64> {
    let n = xs.len();
    debug_assert!(n >= 2);
    if n == 2 {
        let slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        return (0..len).map(|t| ys[0] + slope * (t as f64 - xs[0])).collect();
    }
    // Second derivatives via the tridiagonal system (Thomas algorithm).
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let mut m = vec![0.0; n];
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for i in 0..inner {
        let k = i + 1;
        diag[i] = 2.0 * (h[k - 1] + h[k]);
        upper[i] = h[k];
        rhs[i] = 6.0 * ((ys[k + 1] - ys[k]) / h[k] - (ys[k] - ys[k - 1]) / h[k - 1]);
    }
    for i in 1..inner {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (0..inner).rev() {
        let next = if i + 1 < inner { m[i + 2] } else { 0.0 };
        m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
    }

    let mut seg = 0;
    (0..len)
        .map(|t| {
            let t = t as f64;
            while seg + 2 < n && t > xs[seg + 1] {
                seg += 1;
            }
            let (x0, x1) = (xs[seg], xs[seg + 1]);
            let hh = x1 - x0;
            let a = (x1 - t) / hh;
            let b = (t - x0) / hh;
            a * ys[seg]
                + b * ys[seg + 1]
                + ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * hh * hh / 6.0
        })
        .collect()
}

/// Envelope through the samples at `idx`, with the first and last few
/// extrema mirrored about the signal's end points.
fn envelope(x: &[f64], idx: &[usize]) -> Vec<f64> {
    let last = (x.len() - 1) as f64;
    let k = MIRRORED_EXTREMA.min(idx.len());
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(idx.len() + 2 * k);
    for &i in idx[..k].iter().rev() {
        pts.push((-(i as f64), x[i]));
    }
    pts.extend(idx.iter().map(|&i| (i as f64, x[i])));
    for &i in idx[idx.len() - k..].iter().rev() {
        pts.push((2.0 * last - i as f64, x[i]));
    }
    pts.dedup_by(|b, a| (a.0 - b.0).abs() < 1e-12);
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    natural_spline(&xs, &ys, x.len())
}

/// Sift `x` until the summed squared change relative to the previous iterate
/// falls below `sd_threshold`, or `max_sift` iterations have run.
pub fn first_imf(x: &[f64], max_sift: usize, sd_threshold: f64) -> Result<Imf, PreprocessError> {
    if x.len() < 8 {
        return Err(PreprocessError::TooShort(x.len()));
    }
    let (maxima, minima) = local_extrema(x);
    if maxima.len() + minima.len() < 2 {
        return Ok(Imf {
            samples: x.to_vec(),
            no_extrema: true,
            sift_iterations: 0,
        });
    }

    let mut h = x.to_vec();
    let mut iterations = 0;
    while iterations < max_sift {
        let (maxima, minima) = local_extrema(&h);
        if maxima.is_empty() || minima.is_empty() {
            break;
        }
        let upper = envelope(&h, &maxima);
        let lower = envelope(&h, &minima);
        let next: Vec<f64> = h
            .iter()
            .zip(upper.iter().zip(&lower))
            .map(|(v, (u, l))| v - 0.5 * (u + l))
            .collect();
        iterations += 1;
        let change: f64 = h.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum();
        let energy: f64 = h.iter().map(|v| v * v).sum();
        h = next;
        if energy == 0.0 || change / energy < sd_threshold {
            break;
        }
    }
    Ok(Imf {
        samples: h,
        no_extrema: false,
        sift_iterations: iterations,
    })
}
