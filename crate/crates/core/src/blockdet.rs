//! Block-constant deterministic approximations: M^z, the covariance operator,
//! the two-body stability operator and the two-resolvent approximations M₁₂^A.
//!
//! A 2n×2n matrix whose four n×n blocks are multiples of the identity is
//! represented by its 2×2 matrix of coefficients. Products, the normalized
//! trace ⟨·⟩ and 𝒮 all commute with this representation.

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

use crate::dyson::{solve_imag, DysonSolution};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block2(pub [[Complex64; 2]; 2]);

impl Block2 {
    pub fn new(m11: Complex64, m12: Complex64, m21: Complex64, m22: Complex64) -> Self {
        Self([[m11, m12], [m21, m22]])
    }

    pub fn diag(a: Complex64, b: Complex64) -> Self {
        Self::new(a, ZERO, ZERO, b)
    }

    pub fn zero() -> Self {
        Self::diag(ZERO, ZERO)
    }

    pub fn e_plus() -> Self {
        Self::diag(ONE, ONE)
    }

    pub fn e_minus() -> Self {
        Self::diag(ONE, -ONE)
    }

    pub fn f() -> Self {
        Self::new(ZERO, ONE, ZERO, ZERO)
    }

    pub fn f_star() -> Self {
        Self::new(ZERO, ZERO, ONE, ZERO)
    }

    /// Z = [[0, z], [z̄, 0]].
    pub fn chiral(z: Complex64) -> Self {
        Self::new(ZERO, z, z.conj(), ZERO)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[i][j]
    }

    /// Normalized trace ⟨V⟩ = (v11 + v22)/2.
    pub fn trace(&self) -> Complex64 {
        0.5 * (self.0[0][0] + self.0[1][1])
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Result<Self> {
        let d = self.det();
        if d.norm() < 1e-300 {
            return Err(Error::SingularM);
        }
        let [[a, b], [c, e]] = self.0;
        Ok(Self::new(e / d, -b / d, -c / d, a / d))
    }

    pub fn adjoint(&self) -> Self {
        let [[a, b], [c, d]] = self.0;
        Self::new(a.conj(), c.conj(), b.conj(), d.conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let [[a, b], [c, d]] = self.0;
        Self::new(s * a, s * b, s * c, s * d)
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Operator norm of the 2×2 matrix (largest singular value).
    pub fn op_norm(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        let fro2 = a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr();
        let det = self.det().norm();
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
        (0.5 * (fro2 + disc)).sqrt()
    }

    /// Coordinates in the basis {E₊, E₋, F, F*}.
    pub fn coords(&self) -> [Complex64; 4] {
        let [[a, b], [c, d]] = self.0;
        [0.5 * (a + d), 0.5 * (a - d), b, c]
    }

    pub fn from_coords(x: [Complex64; 4]) -> Self {
        Self::new(x[0] + x[1], x[2], x[3], x[0] - x[1])
    }
}

impl Add for Block2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] += o.0[i][j];
            }
        }
        r
    }
}

impl Sub for Block2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for Block2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-ONE)
    }
}

impl Mul for Block2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut r = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j];
            }
        }
        r
    }
}

impl Mul<Complex64> for Block2 {
    type Output = Self;
    fn mul(self, s: Complex64) -> Self {
        self.scale(s)
    }
}

impl Mul<f64> for Block2 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }
}

/// 𝒮[V] = ⟨V E₊⟩E₊ − ⟨V E₋⟩E₋, which swaps the diagonal and kills the off-diagonal.
pub fn cov_s(v: &Block2) -> Block2 {
    Block2::diag(v.0[1][1], v.0[0][0])
}

fn m_from(z: Complex64, s: &DysonSolution) -> Block2 {
    Block2::new(s.m, -z * s.u, -z.conj() * s.u, s.m)
}

/// M^z(iη) = [[m, −z u], [−z̄ u, m]].
pub fn m_matrix(z: Complex64, eta: f64) -> Result<Block2> {
    Ok(m_from(z, &solve_imag(z, eta)?))
}

/// Max-entry residual of the matrix Dyson equation −M⁻¹ = iηE₊ + Z + 𝒮[M].
pub fn mde_residual(m: &Block2, z: Complex64, eta: f64) -> Result<f64> {
    let lhs = -m.inverse()?;
    let rhs = Block2::e_plus() * Complex64::new(0.0, eta) + Block2::chiral(z) + cov_s(m);
    Ok((lhs - rhs).max_norm())
}

/// ℬ₁₂[V] = V − M₁𝒮[V]M₂.
pub fn stab_apply(m1: &Block2, m2: &Block2, v: &Block2) -> Block2 {
    *v - *m1 * cov_s(v) * *m2
}

/// Matrix of ℬ₁₂ acting on coordinates in the basis {E₊, E₋, F, F*}.
pub fn stab_matrix(m1: &Block2, m2: &Block2) -> [[Complex64; 4]; 4] {
    let mut out = [[ZERO; 4]; 4];
    for k in 0..4 {
        let mut e = [ZERO; 4];
        e[k] = ONE;
        let col = stab_apply(m1, m2, &Block2::from_coords(e)).coords();
        for r in 0..4 {
            out[r][k] = col[r];
        }
    }
    out
}

fn solve4(mut a: [[Complex64; 4]; 4], mut b: [Complex64; 4]) -> Option<[Complex64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))?;
        if a[piv][col].norm() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                let t = a[col][c];
                a[r][c] -= f * t;
            }
            let t = b[col];
            b[r] -= f * t;
        }
    }
    let mut x = [ZERO; 4];
    for r in (0..4).rev() {
        let mut s = b[r];
        for c in r + 1..4 {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityData {
    pub beta_plus: Complex64,
    pub beta_minus: Complex64,
    pub b: f64,
    pub a_plus: Complex64,
    pub a_minus: Complex64,
}

impl StabilityData {
    pub fn product(&self) -> Complex64 {
        self.beta_plus * self.beta_minus
    }

    /// a_t: a₊ when η₁η₂ < 0 and a₋ when η₁η₂ > 0.
    pub fn a_for(&self, eta1: f64, eta2: f64) -> Complex64 {
        if eta1 * eta2 < 0.0 {
            self.a_plus
        } else {
            self.a_minus
        }
    }
}

/// Closed-form nontrivial eigenvalues β± of ℬ₁₂ and the derived quantities b, a±.
///
/// a₊ = ⟨M₁₂^{E₊}E₊⟩ and a₋ = −⟨M₁₂^{E₋}E₋⟩.
pub fn stab_eigs(z1: Complex64, eta1: f64, z2: Complex64, eta2: f64) -> Result<StabilityData> {
    let s1 = solve_imag(z1, eta1)?;
    let s2 = solve_imag(z2, eta2)?;
    let zz = z1 * z2.conj();
    let uu = s1.u * s2.u;
    let mm = s1.m * s2.m;
    let s = mm * mm - uu * uu * zz.im * zz.im;
    let root = s.sqrt();
    let half_sum = ONE - uu * zz.re;
    let beta_plus = half_sum + root;
    let beta_minus = half_sum - root;
    let prod = beta_plus * beta_minus;
    if prod.norm() < 1e-300 || !(prod.re > 0.0) {
        return Err(Error::DegenerateStability(prod.norm()));
    }
    let b = (zz.im * uu / prod).re;
    let a_plus = -ONE + (mm + half_sum) / prod;
    let a_minus = -ONE + (-mm + half_sum) / prod;
    Ok(StabilityData { beta_plus, beta_minus, b, a_plus, a_minus })
}

/// M₁₂^A = ℬ₁₂⁻¹[M₁ A M₂], the deterministic approximation of G₁AG₂.
pub fn m12(z1: Complex64, eta1: f64, z2: Complex64, eta2: f64, a: &Block2) -> Result<Block2> {
    let m1 = m_matrix(z1, eta1)?;
    let m2 = m_matrix(z2, eta2)?;
    m12_from(&m1, &m2, a)
}

/// M₁₂^A from precomputed M₁ and M₂.
pub fn m12_from(m1: &Block2, m2: &Block2, a: &Block2) -> Result<Block2> {
    let rhs = *m1 * *a * *m2;
    let mat = stab_matrix(m1, m2);
    let x = solve4(mat, rhs.coords()).ok_or(Error::DegenerateStability(0.0))?;
    let out = Block2::from_coords(x);
    let res = (stab_apply(m1, m2, &out) - rhs).max_norm();
    if !(res <= 1e-11 * (1.0 + out.max_norm())) {
        return Err(Error::DegenerateStability(res));
    }
    Ok(out)
}

/// Deterministic approximation of Im G₁ A Im G₂: −¼ Σ_{s₁,s₂} s₁s₂ M₁₂^A(s₁η₁, s₂η₂).
pub fn m12_im(z1: Complex64, eta1: f64, z2: Complex64, eta2: f64, a: &Block2) -> Result<Block2> {
    let mut acc = Block2::zero();
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            acc = acc + m12(z1, s1 * eta1, z2, s2 * eta2, a)? * (s1 * s2);
        }
    }
    Ok(acc * (-0.25))
}

/// Imaginary unit times the identity block, for callers assembling iηE₊.
pub fn i_eta(eta: f64) -> Block2 {
    Block2::e_plus() * (I * eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn coordinates_round_trip() {
        let v = Block2::new(c(1.0, 2.0), c(-3.0, 0.5), c(0.25, -1.0), c(4.0, 0.0));
        assert_eq!(Block2::from_coords(v.coords()), v);
        assert_eq!(Block2::from_coords([ONE, ZERO, ZERO, ZERO]), Block2::e_plus());
        assert_eq!(Block2::from_coords([ZERO, ONE, ZERO, ZERO]), Block2::e_minus());
    }

    #[test]
    fn covariance_matches_trace_definition() {
        let v = Block2::new(c(1.0, 2.0), c(-3.0, 0.5), c(0.25, -1.0), c(4.0, 0.0));
        let direct = Block2::e_plus() * (v * Block2::e_plus()).trace() - Block2::e_minus() * (v * Block2::e_minus()).trace();
        assert!((direct - cov_s(&v)).max_norm() < 1e-15);
    }

    #[test]
    fn inverse_and_op_norm() {
        let v = Block2::new(c(1.0, 2.0), c(-3.0, 0.5), c(0.25, -1.0), c(4.0, 0.0));
        let p = v * v.inverse().unwrap();
        assert!((p - Block2::e_plus()).max_norm() < 1e-14);
        assert!((Block2::diag(c(3.0, 0.0), c(0.0, -5.0)).op_norm() - 5.0).abs() < 1e-14);
        assert!(Block2::zero().inverse().is_err());
    }
}
