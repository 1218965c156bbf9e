//! Exact Ginibre computations: Kostlan sampling of the moduli, the exact law of
//! the spectral radius, the correlation kernel K̃ₙ and the Fredholm quantities
//! used for gap probabilities and Laplace functionals near the edge.
//!
//! Moduli follow the convention |σ| = √(Γ_k/n), Γ_k ~ Gamma(k, 1) independent,
//! which matches Ginibre matrices with entry variance 1/n.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{try_integrate, QuadOptions};
use crate::special::{gamma_pq, ln_1m_exp, ln_factorial, ln_gamma, ln_gamma_density, ln_gamma_pq, ln_gamma_pq_real, ln_upper_gamma_reg};

/// γₙ = log n − 2 log log n − log 2π.
pub fn gamma_n(n: u64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("gamma_n needs n >= 3, got {n}")));
    }
    let l = (n as f64).ln();
    Ok(l - 2.0 * l.ln() - (2.0 * PI).ln())
}

/// Raw value of γ'ₙ = (log n − 5 log log n − log (2π)⁴)/2, sign unchecked.
pub fn gamma_n_prime_value(n: u64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("gamma_n_prime needs n >= 3, got {n}")));
    }
    let l = (n as f64).ln();
    Ok(0.5 * (l - 5.0 * l.ln() - 4.0 * (2.0 * PI).ln()))
}

/// γ'ₙ, refused when it is not positive.
pub fn gamma_n_prime(n: u64) -> Result<f64> {
    let v = gamma_n_prime_value(n)?;
    if v <= 0.0 {
        return Err(Error::NonPositiveScale { n, value: v });
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaleParams {
    pub n: u64,
    pub gamma_n: f64,
    pub gamma_n_prime: f64,
}

impl RescaleParams {
    /// Requires γₙ > 0; γ'ₙ is stored as is and may be negative.
    pub fn new(n: u64) -> Result<Self> {
        let g = gamma_n(n)?;
        if g <= 0.0 {
            return Err(Error::NonPositiveScale { n, value: g });
        }
        Ok(Self { n, gamma_n: g, gamma_n_prime: gamma_n_prime_value(n)? })
    }

    fn scale(&self) -> f64 {
        (4.0 * self.n as f64 * self.gamma_n).sqrt()
    }

    fn center(&self) -> f64 {
        1.0 + (self.gamma_n / (4.0 * self.n as f64)).sqrt()
    }

    pub fn to_rescaled(&self, modulus: f64) -> f64 {
        self.scale() * (modulus - self.center())
    }

    pub fn to_modulus(&self, r: f64) -> f64 {
        self.center() + r / self.scale()
    }
}

/// r = √(4nγₙ)(|σ| − 1 − √(γₙ/4n)).
pub fn rescale_radius(n: u64, modulus: f64) -> Result<f64> {
    Ok(RescaleParams::new(n)?.to_rescaled(modulus))
}

/// Inverse of [`rescale_radius`].
pub fn radius_from_rescaled(n: u64, r: f64) -> Result<f64> {
    Ok(RescaleParams::new(n)?.to_modulus(r))
}

/// The k largest of n Kostlan moduli √(Γ_j/n), in decreasing order.
pub fn kostlan_sample<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let nf = n as f64;
    let mut moduli: Vec<f64> = (1..=n)
        .map(|j| {
            let g = Gamma::new(j as f64, 1.0).expect("positive shape");
            (g.sample(rng) / nf).sqrt()
        })
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli.truncate(k);
    Ok(moduli)
}

/// ln P(max_j |σ_j| ≤ x) = Σ_k ln P(k, n x²).
///
/// Only the O(√λ) shapes around λ = n x² carry information: below the window
/// P(k, λ) = 1 to double precision, above it P(k, λ) < e^{-800}. Inside, the
/// Poisson weights are summed from both ends so that either tail is accurate.
pub fn ln_radius_cdf_exact(n: u64, x: f64) -> f64 {
    if x <= 0.0 || n == 0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x.is_infinite() {
        return 0.0;
    }
    let lam = n as f64 * x * x;
    let half = 40.0 * lam.sqrt() + 40.0;
    let lo = (lam - half).floor().max(0.0) as u64;
    let hi = (lam + half).ceil() as u64;
    if n > hi {
        return f64::NEG_INFINITY;
    }
    let pmf = poisson_window(lam, lo, hi);
    // upper[i] = Σ_{j ≥ lo+i} pmf_j
    let mut upper = vec![0.0; pmf.len() + 1];
    for i in (0..pmf.len()).rev() {
        upper[i] = upper[i + 1] + pmf[i];
    }
    let mut total = 0.0;
    let mut lower = 0.0;
    // shape k uses Q(k) = Σ_{j ≤ k-1} pmf_j and P(k) = Σ_{j ≥ k} pmf_j
    for k in lo.max(1)..=n {
        let i = (k - lo) as usize;
        if i >= 1 {
            lower += pmf[i - 1];
        }
        let up = upper[i];
        total += if up < 0.5 { up.ln() } else { (-lower).ln_1p() };
    }
    total
}

// Poisson(λ) weights for j ∈ [lo, hi], by recurrence out of the mode.
fn poisson_window(lam: f64, lo: u64, hi: u64) -> Vec<f64> {
    let len = (hi - lo + 1) as usize;
    let mode = (lam.floor() as u64).clamp(lo, hi);
    let mut w = vec![0.0; len];
    let im = (mode - lo) as usize;
    w[im] = crate::special::ln_poisson_pmf(mode as f64, lam).exp();
    for i in im + 1..len {
        let j = lo + i as u64;
        w[i] = w[i - 1] * lam / j as f64;
    }
    for i in (0..im).rev() {
        let j = lo + i as u64;
        w[i] = w[i + 1] * (j + 1) as f64 / lam;
    }
    w
}

/// P(max_j |σ_j| ≤ x) for the n×n Ginibre ensemble.
pub fn radius_cdf_exact(n: u64, x: f64) -> f64 {
    ln_radius_cdf_exact(n, x).exp()
}

/// Annular sector A(t, a, b) = {r ≥ t, a ≤ arg ≤ b} in rescaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusSector {
    pub t: f64,
    pub a: f64,
    pub b: f64,
}

impl AnnulusSector {
    pub fn new(t: f64, a: f64, b: f64) -> Result<Self> {
        if !(0.0 <= a && a <= b && b <= 2.0 * PI) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid sector t={t}, a={a}, b={b}")));
        }
        Ok(Self { t, a, b })
    }

    pub fn full(t: f64) -> Self {
        Self { t, a: 0.0, b: 2.0 * PI }
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

/// K̃ₙ(z, w) = (n/π) e^{−n(|z|²+|w|²−2z w̄)/2} Γ(n, n z w̄)/Γ(n), evaluated in log space.
pub fn kernel(n: u64, z: Complex64, w: Complex64) -> Result<Complex64> {
    if n == 0 || n > 10_000_000 || z.norm() > 3.0 || w.norm() > 3.0 {
        return Err(Error::InvalidArgument(format!("kernel needs 1 <= n <= 1e7 and |z|, |w| <= 3 (n={n}, z={z}, w={w})")));
    }
    let nf = n as f64;
    let zeta = nf * z * w.conj();
    let ln_k = (nf / PI).ln() - 0.5 * nf * (z.norm_sqr() + w.norm_sqr()) + zeta + ln_upper_gamma_reg(n, zeta)?;
    Ok(ln_k.exp())
}

/// Diagonal K̃ₙ(z, z) = (n/π) Q(n, n|z|²).
pub fn kernel_diag(n: u64, modulus: f64) -> f64 {
    let nf = n as f64;
    (nf / PI) * gamma_pq(n, nf * modulus * modulus).1
}

/// Tr K̃ₙ on the sector by radial quadrature in rescaled coordinates; the diagonal
/// is rotation invariant, so the angular integral is exactly b − a.
pub fn trace_k(n: u64, sector: &AnnulusSector) -> Result<f64> {
    if sector.width() == 0.0 {
        return Ok(0.0);
    }
    let p = RescaleParams::new(n)?;
    let jac = 1.0 / p.scale();
    let f = |r: f64| -> Result<f64> {
        let rho = p.to_modulus(r);
        Ok(rho * kernel_diag(n, rho) * jac)
    };
    let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-10, max_evals: 200_000 };
    let knots = [0.0, 1.0, 3.0, 8.0, 20.0, 60.0];
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += try_integrate(f, sector.t + w[0], sector.t + w[1], opts)?.value;
    }
    Ok(sector.width() * total)
}

// Gram matrix entries M_jl = ⟨φ_j, 1_A φ_l⟩ of the sector in the orthonormal basis
// φ_k(z) = √(n/π) (√n z)^k e^{−n|z|²/2}/√k!, with |M_jl| depending on (j+l)/2 and |j−l|.
struct SectorGram {
    n: u64,
    // ln Q(s, nR²) for s = 1 + h/2, h = 0..2n-2
    ln_q: Vec<f64>,
    ln_fact: Vec<f64>,
    width: f64,
}

impl SectorGram {
    fn new(n: u64, sector: &AnnulusSector) -> Result<Self> {
        let p = RescaleParams::new(n)?;
        let rad = p.to_modulus(sector.t).max(0.0);
        let x = n as f64 * rad * rad;
        let ln_q = (0..(2 * n - 1))
            .map(|h| ln_gamma_pq_real(1.0 + 0.5 * h as f64, x).map(|v| v.1))
            .collect::<Result<Vec<_>>>()?;
        let ln_fact = (0..n).map(|k| ln_factorial(k as f64)).collect();
        Ok(Self { n, ln_q, ln_fact, width: sector.width() })
    }

    // |∫_a^b e^{ikθ} dθ| / 2π
    fn angular(&self, k: i64) -> f64 {
        if k == 0 {
            self.width / (2.0 * PI)
        } else {
            let kf = k as f64;
            (2.0 * (0.5 * kf * self.width).sin() / kf).abs() / (2.0 * PI)
        }
    }

    fn ln_radial(&self, j: usize, l: usize) -> f64 {
        let h = j + l;
        let s = 1.0 + 0.5 * h as f64;
        self.ln_q[h] + ln_gamma(s) - 0.5 * (self.ln_fact[j] + self.ln_fact[l])
    }

    fn trace(&self) -> f64 {
        (0..self.n as usize).map(|j| self.ln_radial(j, j).exp()).sum::<f64>() * self.angular(0)
    }

    fn hs_squared(&self) -> f64 {
        let n = self.n as usize;
        // Q(s, x) is negligible for s well below x; skip those (j, l) pairs
        let h_min = self.ln_q.iter().position(|&v| v > -400.0).unwrap_or(self.ln_q.len());
        let mut total = 0.0;
        for j in 0..n {
            let l_start = h_min.saturating_sub(j);
            for l in l_start.max(j)..n {
                let ln_r = self.ln_radial(j, l);
                if ln_r < -400.0 {
                    continue;
                }
                let m = ln_r.exp() * self.angular(l as i64 - j as i64);
                total += if l == j { m * m } else { 2.0 * m * m };
            }
        }
        total
    }
}

/// Hilbert–Schmidt norm of K̃ₙ restricted to the sector, from the exact Gram matrix of
/// the sector in the orthonormal polynomial basis (‖K 1_A‖₂² = Σ_{j,l} |M_jl|²).
pub fn hs_norm_k(n: u64, sector: &AnnulusSector) -> Result<f64> {
    if sector.width() == 0.0 {
        return Ok(0.0);
    }
    Ok(SectorGram::new(n, sector)?.hs_squared().sqrt())
}

/// Tr K̃ₙ on the sector from the same Gram matrix, Σ_j M_jj.
pub fn trace_k_series(n: u64, sector: &AnnulusSector) -> Result<f64> {
    if sector.width() == 0.0 {
        return Ok(0.0);
    }
    Ok(SectorGram::new(n, sector)?.trace())
}

/// Gap probability estimate e^{−Tr K} and the bound ‖K‖₂ e^{(‖K‖₂+1)²/2 − Tr K} on its
/// distance to det(1 − K).
pub fn gap_prob_fredholm(n: u64, sector: &AnnulusSector) -> Result<(f64, f64)> {
    if sector.width() == 0.0 {
        return Ok((1.0, 0.0));
    }
    let tr = trace_k(n, sector)?;
    let hs = hs_norm_k(n, sector)?;
    Ok(((-tr).exp(), hs * (0.5 * (hs + 1.0).powi(2) - tr).exp()))
}

/// C² step rising from 0 at r = start to `height` at r = start + width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothStep {
    pub height: f64,
    pub start: f64,
    pub width: f64,
}

impl SmoothStep {
    pub fn eval(&self, r: f64) -> f64 {
        let u = (r - self.start) / self.width;
        if u <= 0.0 {
            0.0
        } else if u >= 1.0 {
            self.height
        } else {
            self.height * u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
        }
    }

    pub fn breakpoints(&self) -> [f64; 2] {
        [self.start, self.start + self.width]
    }
}

/// E[exp(−Σ_j g(r_j))] over the rescaled Ginibre moduli, as the product over k of
/// E[exp(−g(r(√(Γ_k/n))))]. `g` must vanish for r < `support_start`; `breaks` lists
/// the points where g is not smooth.
pub fn laplace_functional_radial(n: u64, g: &dyn Fn(f64) -> f64, support_start: f64, breaks: &[f64], opts: QuadOptions) -> Result<f64> {
    let p = RescaleParams::new(n)?;
    let nf = n as f64;
    let rad0 = p.to_modulus(support_start).max(0.0);
    let y0 = nf * rad0 * rad0;
    let jac = 1.0 / p.scale();
    let mut knots: Vec<f64> = breaks.iter().copied().filter(|&b| b > support_start).collect();
    knots.push(support_start);
    knots.extend([1.0, 3.0, 8.0, 20.0, 60.0].iter().map(|d| support_start + d));
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut ln_total = 0.0;
    for k in 1..=n {
        // contribution bounded by P(Γ_k ≥ y0)
        if ln_gamma_pq(k, y0).1 < -45.0 {
            continue;
        }
        let kf = k as f64;
        let f = |r: f64| -> Result<f64> {
            let rho = p.to_modulus(r);
            if rho <= 0.0 {
                return Ok(0.0);
            }
            let y = nf * rho * rho;
            let weight = -(-g(r)).exp_m1();
            Ok(weight * ln_gamma_density(kf, y).exp() * 2.0 * nf * rho * jac)
        };
        let mut i_k = 0.0;
        for w in knots.windows(2) {
            i_k += try_integrate(f, w[0], w[1], opts)?.value;
        }
        ln_total += (-i_k).ln_1p();
    }
    Ok(ln_total.exp())
}

/// Poisson limit exp(−∫ (1 − e^{−g(r)}) e^{−r} dr) over r ≥ support_start.
pub fn laplace_poisson_limit(g: &dyn Fn(f64) -> f64, support_start: f64, breaks: &[f64]) -> Result<f64> {
    let f = |r: f64| -> Result<f64> { Ok(-(-g(r)).exp_m1() * (-r).exp()) };
    let mut knots: Vec<f64> = breaks.iter().copied().filter(|&b| b > support_start).collect();
    knots.push(support_start);
    knots.push(support_start + 60.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut s = 0.0;
    for w in knots.windows(2) {
        s += try_integrate(f, w[0], w[1], QuadOptions::abs(1e-14))?.value;
    }
    Ok((-s).exp())
}

/// e^{−γₙ/2} √n / (√(2π) γₙ), which tends to 1.
pub fn k_gamma_ratio(n: u64) -> Result<f64> {
    let g = gamma_n(n)?;
    Ok((-0.5 * g).exp() * (n as f64).sqrt() / ((2.0 * PI).sqrt() * g))
}

/// ln(1 − P(max ≤ x)) helper for tail probabilities of the spectral radius.
pub fn ln_radius_tail_exact(n: u64, x: f64) -> f64 {
    ln_1m_exp(ln_radius_cdf_exact(n, x))
}
