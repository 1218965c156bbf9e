//! Sample statistics used by the checks: Kolmogorov–Smirnov, Pearson χ² for angles,
//! percentile bootstrap and log-log regression.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::ln_gamma_pq_real;

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

/// Unbiased sample variance; zero for a single observation.
pub fn variance(x: &[f64]) -> Result<f64> {
    let m = mean(x)?;
    if x.len() < 2 {
        return Ok(0.0);
    }
    Ok(x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64)
}

pub fn std_error(x: &[f64]) -> Result<f64> {
    Ok((variance(x)? / x.len() as f64).sqrt())
}

pub fn median(x: &[f64]) -> Result<f64> {
    quantile(x, 0.5)
}

/// Linear-interpolated empirical quantile, p ∈ [0, 1].
pub fn quantile(x: &[f64], p: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    let v = sorted(x);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    Ok(if i + 1 < v.len() { v[i] + frac * (v[i + 1] - v[i]) } else { v[i] })
}

/// Survival function of the Kolmogorov distribution, P(K > λ).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-transformed series converges fast for small λ
        let c = PI * PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        return (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// sup_x |F_n(x) − F(x)| for a continuous reference CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let v = sorted(samples);
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

/// One-sample KS distance and its asymptotic p-value.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let d = ks_distance(samples, cdf)?;
    let sn = (samples.len() as f64).sqrt();
    Ok((d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)))
}

/// Two-sample KS distance and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (x, y) = (sorted(a), sorted(b));
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    Ok((d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d)))
}

/// Upper tail of χ² with `dof` degrees of freedom.
pub fn chi2_sf(stat: f64, dof: f64) -> Result<f64> {
    if stat <= 0.0 {
        return Ok(1.0);
    }
    Ok(ln_gamma_pq_real(0.5 * dof, 0.5 * stat)?.1.exp())
}

/// Pearson χ² statistic of the angles against the uniform law on [0, 2π), with its p-value.
pub fn chi2_uniform_angle(angles: &[f64], bins: usize) -> Result<(f64, f64)> {
    if angles.is_empty() {
        return Err(Error::EmptySample);
    }
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0usize; bins];
    for &a in angles {
        let u = a.rem_euclid(2.0 * PI) / (2.0 * PI);
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expect = angles.len() as f64 / bins as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum::<f64>();
    Ok((stat, chi2_sf(stat, (bins - 1) as f64)?))
}

/// Percentile bootstrap interval for `stat` at the given coverage.
pub fn bootstrap_ci(x: &[f64], stat: impl Fn(&[f64]) -> f64, reps: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; x.len()];
    let reps_stats: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            for b in buf.iter_mut() {
                *b = x[rng.random_range(0..x.len())];
            }
            stat(&buf)
        })
        .collect();
    let alpha = 0.5 * (1.0 - level);
    Ok((quantile(&reps_stats, alpha)?, quantile(&reps_stats, 1.0 - alpha)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least squares y = a + b x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("length mismatch".into()));
    }
    if x.len() < 2 {
        return Err(Error::EmptySample);
    }
    let n = x.len() as f64;
    let (mx, my) = (mean(x)?, mean(y)?);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LineFit { slope, intercept, slope_se })
}

/// Least squares of ln y on ln x.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}
