//! Characteristic flow of spectral parameters and a Dyson Brownian motion
//! stepper for the singular values of X − z.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::dyson::solve_imag;
use crate::error::{Error, Result};

pub const DEFAULT_DT: f64 = 1e-4;
const TSTAR_ETA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub z: Complex64,
    pub eta: f64,
    pub m: Complex64,
    pub rho: f64,
}

impl FlowState {
    pub fn at(t: f64, z: Complex64, eta: f64) -> Result<Self> {
        let s = solve_imag(z, eta)?;
        Ok(Self { t, z, eta, m: s.m, rho: s.rho })
    }

    /// η_t / ρ_t.
    pub fn eta_over_rho(&self) -> f64 {
        self.eta / self.rho
    }
}

// Right-hand side (∂_t z, ∂_t η).
fn velocity(z: Complex64, eta: f64) -> Result<(Complex64, f64)> {
    let m = solve_imag(z, eta)?.m;
    Ok((-0.5 * z, -m.im - 0.5 * eta))
}

fn rk4_step(t: f64, z: Complex64, eta: f64, h: f64) -> Result<(Complex64, f64)> {
    let sign = eta.signum();
    let stage = |z: Complex64, e: f64| -> Result<(Complex64, f64)> {
        if e * sign <= 0.0 {
            return Err(Error::CrossedAxis(t + h));
        }
        velocity(z, e)
    };
    let (kz1, ke1) = stage(z, eta)?;
    let (kz2, ke2) = stage(z + 0.5 * h * kz1, eta + 0.5 * h * ke1)?;
    let (kz3, ke3) = stage(z + 0.5 * h * kz2, eta + 0.5 * h * ke2)?;
    let (kz4, ke4) = stage(z + h * kz3, eta + h * ke3)?;
    let z1 = z + h / 6.0 * (kz1 + 2.0 * kz2 + 2.0 * kz3 + kz4);
    let e1 = eta + h / 6.0 * (ke1 + 2.0 * ke2 + 2.0 * ke3 + ke4);
    if e1 * sign <= 0.0 {
        return Err(Error::CrossedAxis(t + h));
    }
    Ok((z1, e1))
}

/// RK4 trajectory of ∂_t η = −Im m^{z_t}(iη_t) − η_t/2, ∂_t z = −z_t/2 on [0, T].
/// Every step is returned, the last one landing exactly on T.
pub fn flow_integrate(z0: Complex64, eta0: f64, t_end: f64, dt: f64) -> Result<Vec<FlowState>> {
    if eta0 == 0.0 {
        return Err(Error::InvalidArgument("eta0 must be nonzero".into()));
    }
    if !(dt > 0.0) || t_end < 0.0 {
        return Err(Error::InvalidArgument(format!("invalid T = {t_end} or dt = {dt}")));
    }
    let steps = (t_end / dt).ceil().max(0.0) as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(FlowState::at(0.0, z0, eta0)?);
    let (mut z, mut eta) = (z0, eta0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = (t_end - t).min(dt);
        (z, eta) = rk4_step(t, z, eta, h)?;
        let t_next = if k + 1 == steps { t_end } else { (k + 1) as f64 * dt };
        out.push(FlowState::at(t_next, z, eta)?);
    }
    Ok(out)
}

/// Endpoint of the flow at time T.
pub fn flow_endpoint(z0: Complex64, eta0: f64, t_end: f64, dt: f64) -> Result<FlowState> {
    let steps = (t_end / dt).ceil() as usize;
    let (mut z, mut eta) = (z0, eta0);
    for k in 0..steps {
        let t = k as f64 * dt;
        (z, eta) = rk4_step(t, z, eta, (t_end - t).min(dt))?;
    }
    FlowState::at(t_end, z, eta)
}

/// First time T* at which |η_t| ≤ 1e-10.
pub fn tstar(z0: Complex64, eta0: f64) -> Result<f64> {
    tstar_with(z0, eta0, DEFAULT_DT)
}

pub fn tstar_with(z0: Complex64, eta0: f64, dt: f64) -> Result<f64> {
    if eta0 == 0.0 {
        return Err(Error::InvalidArgument("eta0 must be nonzero".into()));
    }
    let (mut z, mut eta, mut t) = (z0, eta0, 0.0);
    let reached = |e: f64| e.abs() <= TSTAR_ETA;
    loop {
        if reached(eta) {
            return Ok(t);
        }
        match rk4_step(t, z, eta, dt) {
            Ok((z1, e1)) if !reached(e1) => {
                z = z1;
                eta = e1;
                t += dt;
            }
            _ => break,
        }
        if t > 1e4 {
            return Err(Error::NoSolution("flow did not reach the real axis".into()));
        }
    }
    // bisection on the length of the final step
    let (mut lo, mut hi) = (0.0, dt);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        match rk4_step(t, z, eta, mid) {
            Ok((_, e1)) if !reached(e1) => lo = mid,
            _ => hi = mid,
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    Ok(t + hi)
}

/// Closed-form T* = log(1 + η₀/Im m₀) implied by m_t = e^{t/2} m₀.
pub fn tstar_closed_form(z0: Complex64, eta0: f64) -> Result<f64> {
    let m0 = solve_imag(z0, eta0)?.m;
    Ok((1.0 + eta0 / m0.im).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootResult {
    pub z0: Complex64,
    pub eta0: f64,
    /// (|z₀|² − 1)/T, bounded below by 1 for |z| ≥ 1.
    pub c1: f64,
    /// (η₀/ρ₀)/T, bounded below by π.
    pub c2: f64,
}

/// Initial condition (z₀, η₀) whose flow reaches (z, η) at time T.
pub fn shoot_back(z: Complex64, eta: f64, t_end: f64) -> Result<ShootResult> {
    shoot_back_with(z, eta, t_end, DEFAULT_DT)
}

pub fn shoot_back_with(z: Complex64, eta: f64, t_end: f64, dt: f64) -> Result<ShootResult> {
    if eta == 0.0 || z.norm() < 1.0 || !(t_end > 0.0 && t_end <= 1.0) {
        return Err(Error::InvalidArgument(format!("shoot_back needs eta != 0, |z| >= 1, 0 < T <= 1 (got {eta}, {}, {t_end})", z.norm())));
    }
    let z0 = (0.5 * t_end).exp() * z;
    let sign = eta.signum();
    let target = eta.abs();
    // η_T as a function of |η₀|; overshooting T* counts as landing below the target
    let end = |e0: f64| -> f64 {
        match flow_endpoint(z0, sign * e0, t_end, dt) {
            Ok(s) => s.eta.abs(),
            Err(_) => 0.0,
        }
    };
    let mut lo = target;
    let mut hi = 2.0 * target;
    let mut f_hi = end(hi);
    let mut tries = 0;
    while f_hi < target {
        lo = hi;
        hi *= 2.0;
        f_hi = end(hi);
        tries += 1;
        if tries > 60 {
            return Err(Error::NoSolution("could not bracket eta0".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if end(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let eta0 = sign * 0.5 * (lo + hi);
    let s0 = FlowState::at(0.0, z0, eta0)?;
    Ok(ShootResult {
        z0,
        eta0,
        c1: (z0.norm_sqr() - 1.0) / t_end,
        c2: (eta0.abs() / s0.rho) / t_end,
    })
}

/// ∫ₛᵗ ρ_r/|η_r| dr along a trajectory, by the trapezoid rule on the RK4 grid
/// refined with Simpson weights when the grid is uniform.
pub fn rho_over_eta_integral(traj: &[FlowState], from: usize, to: usize) -> f64 {
    let f: Vec<f64> = traj[from..=to].iter().map(|s| s.rho / s.eta.abs()).collect();
    let ts: Vec<f64> = traj[from..=to].iter().map(|s| s.t).collect();
    let k = f.len() - 1;
    let h = ts[1] - ts[0];
    let uniform = ts.windows(2).all(|w| ((w[1] - w[0]) - h).abs() < 1e-12);
    if uniform && k % 2 == 0 {
        let mut s = f[0] + f[k];
        for (i, v) in f.iter().enumerate().take(k).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s * h / 3.0
    } else {
        ts.windows(2).zip(f.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
    }
}

/// Closed-form value (1/π)[log(η_s/η_t) − (t − s)/2].
pub fn rho_over_eta_closed(s: &FlowState, t: &FlowState) -> f64 {
    ((s.eta / t.eta).ln() - 0.5 * (t.t - s.t)) / PI
}

/// Singular values of X − z evolving under the chiral Dyson Brownian motion.
/// Only λ₁ ≤ … ≤ λ_n are stored; the mirrored half is −λ_i by construction.
#[derive(Debug, Clone)]
pub struct DbmState {
    pub lambda: Vec<f64>,
    pub t: f64,
    pub rng: ChaCha8Rng,
}

impl DbmState {
    pub fn new(mut lambda: Vec<f64>, rng: ChaCha8Rng) -> Self {
        for l in lambda.iter_mut() {
            *l = l.abs();
        }
        lambda.sort_by(f64::total_cmp);
        Self { lambda, t: 0.0, rng }
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// All 2n points ordered as (λ₁, …, λ_n, −λ₁, …, −λ_n).
    pub fn full(&self) -> Vec<f64> {
        self.lambda.iter().copied().chain(self.lambda.iter().map(|l| -l)).collect()
    }

    /// Smallest distance between any two of the 2n points.
    pub fn min_gap(&self) -> f64 {
        let mut g = 2.0 * self.lambda[0];
        for w in self.lambda.windows(2) {
            g = g.min(w[1] - w[0]);
        }
        g
    }

    /// Drift (1/2n) Σ_{j ≠ i over ±[n]} 1/(λ_i − λ_j) for each positive index.
    pub fn drift(&self) -> Vec<f64> {
        let scale = 1.0 / (2.0 * self.n() as f64);
        self.pair_drift().iter().zip(&self.lambda).map(|(d, l)| d + scale * 0.5 / l).collect()
    }

    // The drift without the mirror term 1/(2λ_i), which the stepper integrates exactly.
    fn pair_drift(&self) -> Vec<f64> {
        let n = self.n();
        let scale = 1.0 / (2.0 * n as f64);
        (0..n)
            .map(|i| {
                let li = self.lambda[i];
                let mut s = 0.0;
                for j in 0..n {
                    if j != i {
                        let lj = self.lambda[j];
                        s += 1.0 / (li - lj) + 1.0 / (li + lj);
                    }
                }
                scale * s
            })
            .collect()
    }
}

/// Largest step allowed by the stability guard dt ≤ (min gap)² n / 10, where the gap is
/// taken among the positive points only. The pair (λ₁, −λ₁) needs no guard because
/// the mirror interaction is integrated exactly.
pub fn dbm_max_dt(s: &DbmState) -> f64 {
    let gap = s.lambda.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    gap.powi(2) * s.n() as f64 / 10.0
}

// λ_i and its mirror image interact like a two-dimensional Bessel process, so the
// point is moved as the norm of a planar Gaussian step; the remaining pair drift is
// explicit. A sub-step is accepted only if it preserves the ordering.
fn dbm_try(s: &DbmState, h: f64, noise: &[f64]) -> Option<Vec<f64>> {
    let n = s.n();
    let sd = (h / (2.0 * n as f64)).sqrt();
    let drift = s.pair_drift();
    let mut next: Vec<f64> =
        (0..n).map(|i| (s.lambda[i] + drift[i] * h + sd * noise[2 * i]).hypot(sd * noise[2 * i + 1])).collect();
    if next[0] < 0.5e-14 || next.windows(2).any(|w| w[1] - w[0] < 1e-14) {
        return None;
    }
    next.sort_by(f64::total_cmp);
    Some(next)
}

/// One Euler–Maruyama step of length dt, split into guarded sub-steps. A rejected
/// sub-step is retried with half the length and fresh noise.
pub fn dbm_step(mut s: DbmState, dt: f64) -> Result<DbmState> {
    let n = s.n();
    let mut remaining = dt;
    while remaining > 0.0 {
        let mut h = remaining.min(dbm_max_dt(&s));
        loop {
            let noise: Vec<f64> = (0..2 * n).map(|_| s.rng.sample(StandardNormal)).collect();
            if let Some(next) = dbm_try(&s, h, &noise) {
                s.lambda = next;
                s.t += h;
                remaining -= h;
                break;
            }
            h *= 0.5;
            if h < 1e-24 {
                return Err(Error::Collision(s.t));
            }
        }
        if remaining < 1e-15 * dt {
            break;
        }
    }
    Ok(s)
}

/// Evolve to time t_end with nominal step dt.
pub fn dbm_evolve(mut s: DbmState, t_end: f64, dt: f64) -> Result<DbmState> {
    while s.t < t_end - 1e-15 {
        let h = dt.min(t_end - s.t);
        s = dbm_step(s, h)?;
    }
    Ok(s)
}
