//! Scalar Dyson equation of the Hermitization and its self-consistent density.
//!
//! The solution m = m^z(w) of `-1/m = w + m - |z|^2/(w+m)` is the root of the
//! monic cubic `m^3 + 2w m^2 + (w^2 - |z|^2 + 1) m + w` lying on the same side
//! of the real axis as w.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{try_integrate, QuadOptions};

/// Spectral height used for boundary values on the real axis.
pub const BOUNDARY_ETA: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub z: Complex64,
    pub w: Complex64,
}

impl SpectralPoint {
    pub fn new(z: Complex64, w: Complex64) -> Self {
        Self { z, w }
    }

    /// The common case w = iη.
    pub fn imaginary(z: Complex64, eta: f64) -> Self {
        Self { z, w: Complex64::new(0.0, eta) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DysonSolution {
    pub m: Complex64,
    pub u: Complex64,
    pub rho: f64,
}

fn cubic_coeffs(z: Complex64, w: Complex64) -> [Complex64; 3] {
    let one = Complex64::new(1.0, 0.0);
    [2.0 * w, w * w - z.norm_sqr() + one, w]
}

fn eval_cubic(c: &[Complex64; 3], m: Complex64) -> (Complex64, Complex64) {
    let p = ((m + c[0]) * m + c[1]) * m + c[2];
    let dp = (3.0 * m + 2.0 * c[0]) * m + c[1];
    (p, dp)
}

fn newton(c: &[Complex64; 3], mut m: Complex64, steps: usize) -> Complex64 {
    for _ in 0..steps {
        let (p, dp) = eval_cubic(c, m);
        if dp.norm() == 0.0 {
            break;
        }
        let next = m - p / dp;
        if !next.re.is_finite() || !next.im.is_finite() {
            break;
        }
        m = next;
    }
    m
}

fn cbrt(x: Complex64) -> Complex64 {
    if x.norm() == 0.0 {
        return x;
    }
    Complex64::from_polar(x.norm().cbrt(), x.arg() / 3.0)
}

/// All three roots of m^3 + a m^2 + b m + c by Cardano's formula.
pub fn cubic_roots(a: Complex64, b: Complex64, c: Complex64) -> [Complex64; 3] {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    let sq = disc.sqrt();
    let plus = -q / 2.0 + sq;
    let minus = -q / 2.0 - sq;
    let big = cbrt(if plus.norm() >= minus.norm() { plus } else { minus });
    let omega = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let mut roots = [Complex64::new(0.0, 0.0); 3];
    let mut rot = Complex64::new(1.0, 0.0);
    for r in roots.iter_mut() {
        let y = if big.norm() == 0.0 { Complex64::new(0.0, 0.0) } else { rot * big - p / (3.0 * rot * big) };
        *r = y - shift;
        rot *= omega;
    }
    roots
}

/// The three roots of the Dyson cubic, each polished by Newton steps.
pub fn dyson_roots(z: Complex64, w: Complex64) -> [Complex64; 3] {
    let c = cubic_coeffs(z, w);
    let mut roots = cubic_roots(c[0], c[1], c[2]);
    for r in roots.iter_mut() {
        *r = newton(&c, *r, 3);
    }
    roots
}

/// Residual of the Dyson equation multiplied through by m:
/// `|1 + m(w+m) - |z|^2 m/(w+m)|`. All terms are O(1) in every regime.
pub fn dyson_residual(z: Complex64, w: Complex64, m: Complex64) -> f64 {
    (1.0 + m * (w + m) - z.norm_sqr() * m / (w + m)).norm()
}

/// Solve the scalar Dyson equation at p, selecting the root with Im m · Im w > 0.
pub fn solve_m(p: SpectralPoint) -> Result<DysonSolution> {
    let SpectralPoint { z, w } = p;
    if z.norm() > 10.0 {
        return Err(Error::InvalidArgument(format!("|z| = {} exceeds 10", z.norm())));
    }
    let fmt = || (format!("{z}"), format!("{w}"));
    if w.im == 0.0 || !w.im.is_finite() || !w.re.is_finite() {
        let (z, w) = fmt();
        return Err(Error::NoValidRoot { z, w });
    }
    let sign = w.im.signum();
    let mut chosen = None;
    let mut count = 0;
    for r in dyson_roots(z, w) {
        if r.im * sign > 1e-15 {
            count += 1;
            chosen = Some(r);
        }
    }
    let m = match (count, chosen) {
        (1, Some(m)) => newton(&cubic_coeffs(z, w), m, 2),
        (0, _) => {
            let (z, w) = fmt();
            return Err(Error::NoValidRoot { z, w });
        }
        _ => {
            let (z, w) = fmt();
            return Err(Error::AmbiguousRoot { z, w });
        }
    };
    let m = if w.re == 0.0 { Complex64::new(0.0, m.im) } else { m };
    let u = m / (w + m);
    let u = if w.re == 0.0 { Complex64::new(u.re, 0.0) } else { u };
    Ok(DysonSolution { m, u, rho: m.im.abs() / PI })
}

/// Shorthand for `solve_m` at w = iη.
pub fn solve_imag(z: Complex64, eta: f64) -> Result<DysonSolution> {
    solve_m(SpectralPoint::imaginary(z, eta))
}

/// Self-consistent density ρ^z(E), from η = 1e-9 and one Richardson step.
pub fn density(z: Complex64, e: f64) -> Result<f64> {
    if e.abs() > 10.0 {
        return Err(Error::InvalidArgument(format!("|E| = {} exceeds 10", e.abs())));
    }
    let e = e.abs();
    let f1 = solve_m(SpectralPoint::new(z, Complex64::new(e, BOUNDARY_ETA)))?.m.im;
    let f2 = solve_m(SpectralPoint::new(z, Complex64::new(e, 2.0 * BOUNDARY_ETA)))?.m.im;
    Ok(((2.0 * f1 - f2) / PI).max(0.0))
}

fn mass(z: Complex64, a: f64, b: f64) -> Result<f64> {
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 0.0, max_evals: 400_000 };
    let r = try_integrate(|x| density(z, x), a, b, opts)
        .map_err(|e| Error::QuadratureFailure(format!("density integral on [{a}, {b}]: {e}")))?;
    Ok(r.value)
}

/// Quantile γ_i of ρ^z: the point with ∫_0^{γ_i} ρ = i / (2n).
pub fn quantile(z: Complex64, n: usize, i: usize) -> Result<f64> {
    if i == 0 {
        return Ok(0.0);
    }
    if n == 0 || i > n {
        return Err(Error::InvalidArgument(format!("quantile index {i} for n = {n}")));
    }
    let target = i as f64 / (2.0 * n as f64);
    // bracket
    let mut lo = 0.0;
    let mut f_lo = 0.0;
    let mut hi = 1e-4;
    let mut f_hi = mass(z, 0.0, hi)?;
    while f_hi < target {
        if hi >= 10.0 {
            return Err(Error::QuadratureFailure(format!("mass {f_hi} on [0, 10] does not reach {target}")));
        }
        lo = hi;
        f_lo = f_hi;
        hi = (2.0 * hi).min(10.0);
        f_hi = f_lo + mass(z, lo, hi)?;
    }
    // safeguarded Newton on the cumulative mass, integrating incrementally from lo
    let mut x = lo + (hi - lo) * (target - f_lo) / (f_hi - f_lo).max(1e-300);
    for _ in 0..200 {
        let fx = f_lo + mass(z, lo, x)?;
        if (fx - target).abs() <= 1e-13 || hi - lo <= 1e-15 * hi.max(1e-300) {
            return Ok(x);
        }
        if fx < target {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        let rho = density(z, x)?;
        let step = x - (fx - target) / rho;
        x = if rho > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
    }
    Err(Error::QuadratureFailure(format!("quantile iteration did not converge for i = {i}")))
}

/// Quantiles γ_1, …, γ_k computed in one sweep.
pub fn quantiles(z: Complex64, n: usize, k: usize) -> Result<Vec<f64>> {
    (1..=k).map(|i| quantile(z, n, i)).collect()
}

/// Width Δ of the gap around 0 in the support of ρ^z for |z| > 1.
pub fn support_gap(z: Complex64) -> Result<f64> {
    let r = z.norm();
    if (r - 1.0).abs() <= 1e-12 {
        return Ok(0.0);
    }
    if density(z, 0.0)? > 1e-8 || r < 1.0 {
        return Err(Error::NoGap(r));
    }
    let threshold = 1e-10;
    let (mut lo, mut hi) = (0.0, 2.0);
    if density(z, hi)? <= threshold {
        return Err(Error::QuadratureFailure("density vanishes on [0, 2]".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if density(z, mid)? > threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(2.0 * lo)
}

/// Residuals of the small-ρ expansions of u and η/Im m at w = iη.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionReport {
    pub rho: f64,
    pub u_residual: f64,
    pub eta_residual: f64,
}

impl ExpansionReport {
    /// Largest of the two residuals divided by ρ^4.
    pub fn constant(&self) -> f64 {
        self.u_residual.max(self.eta_residual) / self.rho.powi(4)
    }
}

pub fn expansion_checks(z: Complex64, eta: f64) -> Result<ExpansionReport> {
    let s = solve_imag(z, eta)?;
    let z2 = z.norm_sqr();
    let pr2 = (PI * s.rho).powi(2);
    Ok(ExpansionReport {
        rho: s.rho,
        u_residual: (s.u.re - (1.0 / z2 - pr2)).abs(),
        eta_residual: (eta / s.m.im - (z2 - 1.0 + pr2 * z2 * z2)).abs(),
    })
}
