//! Sampling of i.i.d. matrices and the spectral quantities of their
//! Hermitizations: eigenvalues, singular triples, resolvent traces and overlaps.
//!
//! Resolvents of H^z are never formed. Every trace is a spectral sum over the
//! singular triples (λ_i, u_i, v_i) of X − z with ‖u_i‖² = ‖v_i‖² = 1/2, the
//! eigenvectors of H^z being w_{±i} = (u_i, ±v_i) with eigenvalue ±λ_i.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::blockdet::Block2;
use crate::error::{Error, Result};

pub type CMat = Mat<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    ComplexGaussian,
    ComplexBernoulli,
    ComplexUniform,
}

impl EntryLaw {
    /// One draw of χ with Eχ = 0, Eχ² = 0, E|χ|² = 1.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        match self {
            EntryLaw::ComplexGaussian => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * FRAC_1_SQRT_2
            }
            EntryLaw::ComplexBernoulli => {
                let bits: u8 = rng.random();
                let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                Complex64::new(re, im)
            }
            EntryLaw::ComplexUniform => {
                let half_width = 1.5f64.sqrt();
                let re = rng.random_range(-half_width..half_width);
                let im = rng.random_range(-half_width..half_width);
                Complex64::new(re, im)
            }
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of the independent stream for sample `index` under master seed `master`.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn stream_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, index))
}

/// n×n matrix with i.i.d. entries n^{-1/2}χ drawn from `rng` in row-major order.
pub fn sample_iid_rng<R: Rng + ?Sized>(n: usize, law: EntryLaw, rng: &mut R) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    let mut entries = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        entries.push(law.draw(rng) * scale);
    }
    Mat::from_fn(n, n, |i, j| entries[i * n + j])
}

/// Deterministic draw given (law, seed).
pub fn sample_iid(n: usize, law: EntryLaw, seed: u64) -> CMat {
    sample_iid_rng(n, law, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// √(1 − s²) X + s X^Gin.
pub fn ou_interpolate(x: MatRef<'_, Complex64>, x_gin: MatRef<'_, Complex64>, s: f64) -> Result<CMat> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("interpolation parameter {s} outside [0, 1]")));
    }
    if x.nrows() != x_gin.nrows() || x.ncols() != x_gin.ncols() {
        return Err(Error::InvalidArgument("shape mismatch".into()));
    }
    if s == 0.0 {
        return Ok(x.to_owned());
    }
    if s == 1.0 {
        return Ok(x_gin.to_owned());
    }
    let a = (1.0 - s * s).sqrt();
    Ok(Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * a + x_gin[(i, j)] * s))
}

/// Eigenvalues sorted by decreasing modulus.
pub fn spectrum(x: MatRef<'_, Complex64>) -> Result<Vec<Complex64>> {
    if x.nrows() != x.ncols() {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    let mut ev = x.eigenvalues().map_err(|_| Error::EigFailure)?;
    if ev.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
        return Err(Error::EigFailure);
    }
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(ev)
}

fn shifted(x: MatRef<'_, Complex64>, z: Complex64) -> CMat {
    let mut y = x.to_owned();
    for i in 0..y.nrows() {
        y[(i, i)] -= z;
    }
    y
}

/// Singular triples of X − z, λ ascending, vectors scaled to squared norm 1/2.
#[derive(Debug, Clone)]
pub struct SingularData {
    pub z: Complex64,
    pub lambda: Vec<f64>,
    pub u: CMat,
    pub v: CMat,
}

impl SingularData {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    fn check_index(&self, i: i64) -> Result<usize> {
        let n = self.n();
        if i == 0 || i.unsigned_abs() as usize > n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        Ok(i.unsigned_abs() as usize - 1)
    }

    /// Eigenvector w_i = (u_i, sign(i) v_i) of H^z as a 2n vector.
    pub fn w(&self, i: i64) -> Result<Vec<Complex64>> {
        let k = self.check_index(i)?;
        let s = if i > 0 { 1.0 } else { -1.0 };
        let n = self.n();
        Ok((0..2 * n).map(|r| if r < n { self.u[(r, k)] } else { self.v[(r - n, k)] * s }).collect())
    }

    /// Eigenvalue of H^z with signed index i.
    pub fn eigenvalue(&self, i: i64) -> Result<f64> {
        let k = self.check_index(i)?;
        Ok(if i > 0 { self.lambda[k] } else { -self.lambda[k] })
    }
}

pub fn svd_z(x: MatRef<'_, Complex64>, z: Complex64) -> Result<SingularData> {
    let n = x.nrows();
    let y = shifted(x, z);
    let svd = y.svd().map_err(|_| Error::SvdFailure)?;
    let s = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    // faer orders singular values nonincreasingly
    let lambda: Vec<f64> = (0..n).map(|k| s[n - 1 - k].re).collect();
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::SvdFailure);
    }
    let uu = Mat::from_fn(n, n, |r, k| u[(r, n - 1 - k)] * FRAC_1_SQRT_2);
    let vv = Mat::from_fn(n, n, |r, k| v[(r, n - 1 - k)] * FRAC_1_SQRT_2);
    Ok(SingularData { z, lambda, u: uu, v: vv })
}

/// Singular values of X − z in ascending order.
pub fn singular_values_z(x: MatRef<'_, Complex64>, z: Complex64) -> Result<Vec<f64>> {
    let y = shifted(x, z);
    let mut s = y.singular_values().map_err(|_| Error::SvdFailure)?;
    s.reverse();
    Ok(s)
}

/// Smallest singular value of X − z by LU-based block inverse iteration with
/// Rayleigh–Ritz extraction.
pub fn smallest_singular_value(x: MatRef<'_, Complex64>, z: Complex64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = x.nrows();
    let block = 4.min(n);
    let a = shifted(x, z);
    let lu = a.partial_piv_lu();
    let mut q = Mat::from_fn(n, block, |_, _| EntryLaw::ComplexGaussian.draw(rng));
    orthonormalize(&mut q);
    let mut prev = f64::INFINITY;
    for _ in 0..200 {
        let mut y = q.clone();
        lu.solve_adjoint_in_place(y.as_mut());
        lu.solve_in_place(y.as_mut());
        if y.norm_max().is_nan() || y.norm_max().is_infinite() {
            return Ok(0.0);
        }
        q = y;
        orthonormalize(&mut q);
        let aq = &a * &q;
        let s = aq.singular_values().map_err(|_| Error::SvdFailure)?;
        let cur = *s.last().expect("nonempty block");
        if (prev - cur).abs() <= 1e-13 * cur.max(1e-300) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::SvdFailure)
}

fn orthonormalize(q: &mut CMat) {
    let (n, p) = (q.nrows(), q.ncols());
    for j in 0..p {
        for _ in 0..2 {
            for k in 0..j {
                let mut dot = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    dot += q[(r, k)].conj() * q[(r, j)];
                }
                for r in 0..n {
                    let t = q[(r, k)];
                    q[(r, j)] -= dot * t;
                }
            }
        }
        let nrm = (0..n).map(|r| q[(r, j)].norm_sqr()).sum::<f64>().sqrt();
        for r in 0..n {
            q[(r, j)] /= nrm;
        }
    }
}

/// Eigenvalues plus singular data at a list of spectral locations z.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub n: usize,
    pub sigma: Vec<Complex64>,
    pub singular: Vec<SingularData>,
}

impl SpectralData {
    pub fn new(x: MatRef<'_, Complex64>, zs: &[Complex64], with_eigenvalues: bool) -> Result<Self> {
        let sigma = if with_eigenvalues { spectrum(x)? } else { Vec::new() };
        let singular = zs.iter().map(|&z| svd_z(x, z)).collect::<Result<_>>()?;
        Ok(Self { n: x.nrows(), sigma, singular })
    }

    pub fn at(&self, z: Complex64) -> Result<&SingularData> {
        self.singular
            .iter()
            .find(|s| (s.z - z).norm() <= 1e-14 * (1.0 + z.norm()))
            .ok_or_else(|| Error::MissingZ(format!("{z}")))
    }
}

/// Which resolvent enters a product: G, G* or Im G = (G − G*)/(2i).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolventKind {
    Plain,
    Adjoint,
    Imag,
}

// (Σ_s f(s), Σ_s s f(s)) for the spectral weight f(s) of the chosen resolvent at ±λ.
fn weights(kind: ResolventKind, lambda: f64, eta: f64) -> (Complex64, Complex64) {
    let d = lambda * lambda + eta * eta;
    match kind {
        ResolventKind::Plain => (Complex64::new(0.0, 2.0 * eta / d), Complex64::new(2.0 * lambda / d, 0.0)),
        ResolventKind::Adjoint => (Complex64::new(0.0, -2.0 * eta / d), Complex64::new(2.0 * lambda / d, 0.0)),
        ResolventKind::Imag => (Complex64::new(2.0 * eta / d, 0.0), Complex64::new(0.0, 0.0)),
    }
}

fn col_dot(a: &CMat, i: usize, b: &CMat, j: usize) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for r in 0..a.nrows() {
        s += a[(r, i)].conj() * b[(r, j)];
    }
    s
}

/// ⟨G^z(iη) A⟩ from the singular triples.
pub fn resolvent_trace_sd(sd: &SingularData, eta: f64, a: &Block2, kind: ResolventKind) -> Complex64 {
    let n = sd.n();
    let mut tr = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let (f0, f1) = weights(kind, sd.lambda[i], eta);
        let uu = col_dot(&sd.u, i, &sd.u, i);
        let vv = col_dot(&sd.v, i, &sd.v, i);
        let uv = col_dot(&sd.u, i, &sd.v, i);
        tr += f0 * (a.get(0, 0) * uu + a.get(1, 1) * vv) + f1 * (a.get(0, 1) * uv + a.get(1, 0) * uv.conj());
    }
    tr / (2.0 * n as f64)
}

pub fn resolvent_trace(s: &SpectralData, z: Complex64, eta: f64, a: &Block2) -> Result<Complex64> {
    if eta == 0.0 {
        return Err(Error::InvalidArgument("eta must be nonzero".into()));
    }
    Ok(resolvent_trace_sd(s.at(z)?, eta, a, ResolventKind::Plain))
}

/// Isotropic entry ⟨x, G^z(iη) y⟩ for 2n-vectors x, y.
pub fn isotropic_entry(sd: &SingularData, eta: f64, x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let n = sd.n();
    let proj = |vec: &[Complex64], basis: &CMat, offset: usize, k: usize| -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for r in 0..n {
            s += basis[(r, k)].conj() * vec[offset + r];
        }
        s
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        // ⟨w_{±k}, x⟩ = ⟨u_k, x₁⟩ ± ⟨v_k, x₂⟩
        let (ux, vx) = (proj(x, &sd.u, 0, k), proj(x, &sd.v, n, k));
        let (uy, vy) = (proj(y, &sd.u, 0, k), proj(y, &sd.v, n, k));
        for s in [1.0, -1.0] {
            let wx = ux + vx * s;
            let wy = uy + vy * s;
            let f = 1.0 / Complex64::new(s * sd.lambda[k], -eta);
            acc += f * wx.conj() * wy;
        }
    }
    acc
}

/// Cached overlap matrices between the singular vectors at z₁ and z₂.
#[derive(Debug, Clone)]
pub struct PairOverlaps {
    pub uu: CMat,
    pub uv: CMat,
    pub vu: CMat,
    pub vv: CMat,
}

impl PairOverlaps {
    pub fn new(s1: &SingularData, s2: &SingularData) -> Self {
        Self {
            uu: s1.u.adjoint() * &s2.u,
            uv: s1.u.adjoint() * &s2.v,
            vu: s1.v.adjoint() * &s2.u,
            vv: s1.v.adjoint() * &s2.v,
        }
    }
}

/// ⟨X₁ A X₂ B⟩ where X_k is G^{z_k}(iη_k), its adjoint or its imaginary part.
#[allow(clippy::too_many_arguments)]
pub fn two_resolvent_trace_with(
    s1: &SingularData,
    eta1: f64,
    kind1: ResolventKind,
    s2: &SingularData,
    eta2: f64,
    kind2: ResolventKind,
    ov: &PairOverlaps,
    a: &Block2,
    b: &Block2,
) -> Complex64 {
    let n = s1.n();
    let w1: Vec<_> = s1.lambda.iter().map(|&l| weights(kind1, l, eta1)).collect();
    let w2: Vec<_> = s2.lambda.iter().map(|&l| weights(kind2, l, eta2)).collect();
    let (a11, a12, a21, a22) = (a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1));
    let (b11, b12, b21, b22) = (b.get(0, 0), b.get(0, 1), b.get(1, 0), b.get(1, 1));
    let mut tr = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let (g0, g1) = w2[j];
        for i in 0..n {
            let (f0, f1) = w1[i];
            let (uu, uv, vu, vv) = (ov.uu[(i, j)], ov.uv[(i, j)], ov.vu[(i, j)], ov.vv[(i, j)]);
            // w₁* A w₂ = α₀ + α₁s' + α₂s + α₃ss',  w₂* B w₁ = β₀ + β₁s + β₂s' + β₃ss'
            let al = [a11 * uu, a12 * uv, a21 * vu, a22 * vv];
            let be = [b11 * uu.conj(), b12 * vu.conj(), b21 * uv.conj(), b22 * vv.conj()];
            let c00 = al[0] * be[0] + al[1] * be[2] + al[2] * be[1] + al[3] * be[3];
            let c10 = al[0] * be[1] + al[2] * be[0] + al[1] * be[3] + al[3] * be[2];
            let c01 = al[0] * be[2] + al[1] * be[0] + al[2] * be[3] + al[3] * be[1];
            let c11 = al[0] * be[3] + al[3] * be[0] + al[1] * be[1] + al[2] * be[2];
            tr += c00 * f0 * g0 + c10 * f1 * g0 + c01 * f0 * g1 + c11 * f1 * g1;
        }
    }
    tr / (2.0 * n as f64)
}

/// Convenience form of [`two_resolvent_trace_with`] that builds the overlaps.
#[allow(clippy::too_many_arguments)]
pub fn two_resolvent_trace(
    s: &SpectralData,
    z1: Complex64,
    eta1: f64,
    z2: Complex64,
    eta2: f64,
    a: &Block2,
    b: &Block2,
    kinds: (ResolventKind, ResolventKind),
) -> Result<Complex64> {
    let s1 = s.at(z1)?;
    let s2 = s.at(z2)?;
    let ov = PairOverlaps::new(s1, s2);
    Ok(two_resolvent_trace_with(s1, eta1, kinds.0, s2, eta2, kinds.1, &ov, a, b))
}

/// (|⟨u_i^{z₁}, u_j^{z₂}⟩|², |⟨v_i^{z₁}, v_j^{z₂}⟩|², |⟨u_i^{z₁}, v_j^{z₂}⟩|²).
pub fn overlaps(s: &SpectralData, z1: Complex64, z2: Complex64, i: i64, j: i64) -> Result<(f64, f64, f64)> {
    let s1 = s.at(z1)?;
    let s2 = s.at(z2)?;
    overlaps_sd(s1, s2, i, j)
}

pub fn overlaps_sd(s1: &SingularData, s2: &SingularData, i: i64, j: i64) -> Result<(f64, f64, f64)> {
    let a = s1.check_index(i)?;
    let b = s2.check_index(j)?;
    Ok((
        col_dot(&s1.u, a, &s2.u, b).norm_sqr(),
        col_dot(&s1.v, a, &s2.v, b).norm_sqr(),
        col_dot(&s1.u, a, &s2.v, b).norm_sqr(),
    ))
}

/// Complex inner products (⟨u_i, u_j⟩, ⟨v_i, v_j⟩) between two singular data sets.
pub fn inner_products(s1: &SingularData, s2: &SingularData, i: i64, j: i64) -> Result<(Complex64, Complex64)> {
    let a = s1.check_index(i)?;
    let b = s2.check_index(j)?;
    let sj = if j > 0 { 1.0 } else { -1.0 };
    let si = if i > 0 { 1.0 } else { -1.0 };
    Ok((col_dot(&s1.u, a, &s2.u, b), col_dot(&s1.v, a, &s2.v, b) * (si * sj)))
}

/// The 2n×2n Hermitization [[0, X − z], [(X − z)*, 0]] as a dense matrix.
pub fn hermitization(x: MatRef<'_, Complex64>, z: Complex64) -> CMat {
    let n = x.nrows();
    let y = shifted(x, z);
    Mat::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
        (true, false) => y[(r, c - n)],
        (false, true) => y[(c, r - n)].conj(),
        _ => Complex64::new(0.0, 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_moments_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = EntryLaw::ComplexBernoulli.draw(&mut rng);
            assert!((x.norm_sqr() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stream_seeds_differ() {
        let a: Vec<u64> = (0..1000).map(|i| stream_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_ne!(stream_seed(7, 0), stream_seed(8, 0));
    }

    #[test]
    fn smallest_singular_value_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (k, &z) in [Complex64::new(0.3, 0.2), Complex64::new(1.1, 0.0), Complex64::new(0.0, 1.0)].iter().enumerate() {
            let x = sample_iid(96, EntryLaw::ComplexGaussian, 100 + k as u64);
            let want = singular_values_z(x.as_ref(), z).unwrap()[0];
            let got = smallest_singular_value(x.as_ref(), z, &mut rng).unwrap();
            assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
        }
    }
}
