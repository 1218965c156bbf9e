//! Monte Carlo checks of the local laws, rigidity, overlap decay, singular value
//! tails and independence, plus the Girko and counting identities.
//!
//! Stochastic domination is read as: median statistic ≤ n^{0.2} times the rate,
//! judged at the upper end of a bootstrap 95% interval of the median. Every
//! sample draws from its own stream `stream_rng(seed, index)` and results are
//! reduced in index order, so reports do not depend on the thread count.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockdet::{m12, m12_im, m_matrix, Block2};
use crate::dyson::{quantiles, solve_imag, support_gap};
use crate::error::{Error, Result};
use crate::randmat::{
    overlaps_sd, resolvent_trace_sd, sample_iid_rng, singular_values_z, smallest_singular_value, stream_rng, stream_seed,
    svd_z, two_resolvent_trace_with, EntryLaw, PairOverlaps, ResolventKind,
};
use crate::stats::{bootstrap_ci, loglog_fit, median, quantile};

/// Exponent of the n^ξ slack in median checks.
pub const XI: f64 = 0.2;
const BOOTSTRAP_REPS: usize = 400;

/// ℓ, γ, δ and the gap Δ for a pair of spectral parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub ell: f64,
    pub gamma: f64,
    pub delta: f64,
    #[serde(rename = "gap")]
    pub big_delta: f64,
}

impl ControlParams {
    pub fn new(z1: Complex64, eta1: f64, z2: Complex64, eta2: f64) -> Result<Self> {
        let r1 = solve_imag(z1, eta1)?.rho;
        let r2 = solve_imag(z2, eta2)?.rho;
        let ell = (eta1.abs() * r1).min(eta2.abs() * r2);
        let gamma = (z1 - z2).norm() + eta1.abs() / r1 + eta2.abs() / r2;
        let delta = z1.norm_sqr() - 1.0;
        let big_delta = if delta > 0.0 { support_gap(z1)? } else { 0.0 };
        Ok(Self { ell, gamma, delta, big_delta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    /// Upper end of the interval must not exceed the value.
    AtMost { value: f64 },
    /// Point value must reach the threshold.
    AtLeast { value: f64 },
    /// Whole interval inside [lo, hi].
    Within { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub label: String,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Criterion {
    pub fn new(label: impl Into<String>, value: f64, ci: (f64, f64), bound: Bound) -> Self {
        let pass = match bound {
            Bound::AtMost { value: b } => ci.1 <= b,
            Bound::AtLeast { value: b } => value >= b,
            Bound::Within { lo, hi } => ci.0 >= lo && ci.1 <= hi,
        };
        Self { label: label.into(), value, ci_lo: ci.0, ci_hi: ci.1, bound, pass }
    }

    /// Median of `x` with its bootstrap interval, against an upper bound.
    pub fn median_at_most(label: impl Into<String>, x: &[f64], bound: f64, seed: u64) -> Result<Self> {
        let m = median(x)?;
        let ci = bootstrap_ci(x, |s| median(s).unwrap_or(f64::NAN), BOOTSTRAP_REPS, 0.95, seed)?;
        Ok(Self::new(label, m, ci, Bound::AtMost { value: bound }))
    }

    pub fn exact(label: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self::new(label, value, (value, value), bound)
    }
}

/// One emitted row: sample index, its stream seed and the check's columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub sample: u64,
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub n: usize,
    pub samples: usize,
    pub criteria: Vec<Criterion>,
    pub metadata: BTreeMap<String, f64>,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl CheckReport {
    fn new(name: &str, n: usize, samples: usize, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            n,
            samples,
            criteria: Vec::new(),
            metadata: BTreeMap::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    /// Column `name` across all rows (optionally restricted to rows whose `key` column equals `value`).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    fn column_where(&self, name: &str, key: &str, value: f64) -> Vec<f64> {
        let k = self.columns.iter().position(|c| c == name).expect("known column");
        let kk = self.columns.iter().position(|c| c == key).expect("known column");
        self.rows.iter().filter(|r| r.values[kk] == value).map(|r| r.values[k]).collect()
    }
}

fn slack(n: usize) -> f64 {
    (n as f64).powf(XI)
}

fn bootstrap_seed(seed: u64, tag: u64) -> u64 {
    stream_seed(seed ^ 0xb007_57a9, tag)
}

// Runs `f` over sample indices in parallel and returns the per-sample outputs in index order.
fn per_sample<T: Send>(samples: usize, seed: u64, f: impl Fn(u64, &mut rand_chacha::ChaCha8Rng) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            f(i, &mut rng)
        })
        .collect()
}

fn need_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        Err(Error::EmptySample)
    } else {
        Ok(())
    }
}

/// Median over samples of n|η|·|⟨(G − M)E₊⟩| at each η, against n^{0.2}.
pub fn check_single_law(n: usize, z: Complex64, etas: &[f64], law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    let mut ms = Vec::new();
    for &eta in etas {
        let s = solve_imag(z, eta)?;
        if n as f64 * eta.abs() * s.rho < 1.0 {
            return Err(Error::InvalidArgument(format!("n|eta|rho < 1 at eta = {eta}")));
        }
        ms.push(s.m);
    }
    let nf = n as f64;
    let per = per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        let lam = singular_values_z(x.as_ref(), z)?;
        Ok(etas
            .iter()
            .zip(&ms)
            .map(|(&eta, &m)| {
                // ⟨G E₊⟩ = (1/2n) Σ_{±λ} 1/(±λ − iη)
                let g: f64 = lam.iter().map(|l| eta / (l * l + eta * eta)).sum::<f64>() / nf;
                nf * eta.abs() * (Complex64::new(0.0, g) - m).norm()
            })
            .collect::<Vec<f64>>())
    })?;
    let mut rep = CheckReport::new("single_law", n, samples, &["eta", "stat"]);
    for (i, v) in per.iter().enumerate() {
        for (k, &eta) in etas.iter().enumerate() {
            rep.rows.push(Row { sample: i as u64, seed: stream_seed(seed, i as u64), values: vec![eta, v[k]] });
        }
    }
    for (k, &eta) in etas.iter().enumerate() {
        let stats: Vec<f64> = per.iter().map(|v| v[k]).collect();
        rep.criteria.push(Criterion::median_at_most(format!("eta={eta}"), &stats, slack(n), bootstrap_seed(seed, k as u64))?);
    }
    Ok(rep)
}

/// Test vector pairs for the isotropic law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsoVectors {
    /// x = y = e₁
    First,
    /// x = y = (e₁ + e_{n+1})/√2
    Mixed,
    /// x = y = (1, …, 1)/√(2n)
    Flat,
    /// x = e₁, y = e₂, orthogonal and both in the first block
    Orthogonal,
}

impl IsoVectors {
    pub const ALL: [IsoVectors; 4] = [IsoVectors::First, IsoVectors::Mixed, IsoVectors::Flat, IsoVectors::Orthogonal];

    pub fn build(&self, n: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let zero = Complex64::new(0.0, 0.0);
        let unit = |k: usize| {
            let mut v = vec![zero; 2 * n];
            v[k] = Complex64::new(1.0, 0.0);
            v
        };
        match self {
            IsoVectors::First => (unit(0), unit(0)),
            IsoVectors::Mixed => {
                let mut v = vec![zero; 2 * n];
                v[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                v[n] = v[0];
                (v.clone(), v)
            }
            IsoVectors::Flat => {
                let v = vec![Complex64::new(1.0 / (2.0 * n as f64).sqrt(), 0.0); 2 * n];
                (v.clone(), v)
            }
            IsoVectors::Orthogonal => (unit(0), unit(1.min(n - 1))),
        }
    }
}

// ⟨x, M y⟩ for a block-constant M.
fn block_form(m: &Block2, x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let n = x.len() / 2;
    let mut acc = Complex64::new(0.0, 0.0);
    for (bi, bj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let c = m.get(bi, bj);
        if c.norm() == 0.0 {
            continue;
        }
        let s: Complex64 = (0..n).map(|k| x[bi * n + k].conj() * y[bj * n + k]).sum();
        acc += c * s;
    }
    acc
}

/// Median of |⟨x, (G − M)y⟩| / (√(ρ/(nη)) + 1/(nη)) per vector pair, against n^{0.2}.
pub fn check_isotropic(n: usize, z: Complex64, eta: f64, vectors: &[IsoVectors], law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    let sol = solve_imag(z, eta)?;
    let m = m_matrix(z, eta)?;
    let nf = n as f64;
    let scale = (sol.rho / (nf * eta)).sqrt() + 1.0 / (nf * eta);
    let pairs: Vec<_> = vectors.iter().map(|v| v.build(n)).collect();
    let per = per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        let sd = svd_z(x.as_ref(), z)?;
        Ok(pairs
            .iter()
            .map(|(a, b)| (crate::randmat::isotropic_entry(&sd, eta, a, b) - block_form(&m, a, b)).norm() / scale)
            .collect::<Vec<f64>>())
    })?;
    let mut rep = CheckReport::new("isotropic", n, samples, &["pair", "stat"]);
    for (i, v) in per.iter().enumerate() {
        for (k, s) in v.iter().enumerate() {
            rep.rows.push(Row { sample: i as u64, seed: stream_seed(seed, i as u64), values: vec![k as f64, *s] });
        }
    }
    for (k, vec) in vectors.iter().enumerate() {
        let stats: Vec<f64> = per.iter().map(|v| v[k]).collect();
        rep.criteria.push(Criterion::median_at_most(format!("{vec:?}"), &stats, slack(n), bootstrap_seed(seed, k as u64))?);
    }
    rep.metadata.insert("rate".into(), scale);
    Ok(rep)
}

/// Rigidity window n^{0.2}·max(n^{−3/4}i^{−1/4}, Δ^{1/9}n^{−2/3}i^{−1/3}).
pub fn rigidity_window(n: usize, i: usize, gap: f64) -> f64 {
    let (nf, fi) = (n as f64, i as f64);
    slack(n) * (nf.powf(-0.75) * fi.powf(-0.25)).max(gap.powf(1.0 / 9.0) * nf.powf(-2.0 / 3.0) * fi.powf(-1.0 / 3.0))
}

/// Quantile-index windows used by the counting form of rigidity.
pub const COUNT_WINDOWS: [(usize, usize); 3] = [(0, 10), (5, 15), (10, 20)];

/// Fraction of samples with |λ_i − γ_i| inside the rigidity window (i ≤ `imax`), and
/// median count deviations on quantile-delimited energy windows.
pub fn check_rigidity(n: usize, z: Complex64, imax: usize, law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    let imax = imax.max(COUNT_WINDOWS.iter().map(|w| w.1).max().unwrap_or(0)).min(n);
    let gam = quantiles(z, n, imax)?;
    let gap = if z.norm() > 1.0 { support_gap(z)? } else { 0.0 };
    let quant = |k: usize| if k == 0 { 0.0 } else { gam[k - 1] };
    let per = per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        let lam = singular_values_z(x.as_ref(), z)?;
        let mut out: Vec<f64> = (0..imax).map(|k| lam[k] - gam[k]).collect();
        for &(a, b) in &COUNT_WINDOWS {
            let (e1, e2) = (quant(a), quant(b));
            let count = lam.iter().filter(|&&l| l >= e1 && l <= e2).count() as f64;
            out.push(count - (b - a) as f64);
        }
        Ok(out)
    })?;
    let mut cols: Vec<String> = (1..=imax).map(|i| format!("dev_{i}")).collect();
    cols.extend(COUNT_WINDOWS.iter().map(|(a, b)| format!("count_{a}_{b}")));
    let mut rep = CheckReport::new("rigidity", n, samples, &[]);
    rep.columns = cols;
    for (i, v) in per.iter().enumerate() {
        rep.rows.push(Row { sample: i as u64, seed: stream_seed(seed, i as u64), values: v.clone() });
    }
    for i in 1..=imax.min(20) {
        let w = rigidity_window(n, i, gap);
        let frac = per.iter().filter(|v| v[i - 1].abs() <= w).count() as f64 / samples as f64;
        rep.criteria.push(Criterion::exact(format!("i={i}"), frac, Bound::AtLeast { value: 0.95 }));
    }
    for (k, &(a, b)) in COUNT_WINDOWS.iter().enumerate() {
        let dev: Vec<f64> = per.iter().map(|v| v[imax + k].abs()).collect();
        rep.criteria.push(Criterion::median_at_most(format!("count[{a},{b}]"), &dev, slack(n), bootstrap_seed(seed, 100 + k as u64))?);
    }
    rep.metadata.insert("gap".into(), gap);
    for (k, g) in gam.iter().enumerate().take(3) {
        rep.metadata.insert(format!("gamma_{}", k + 1), *g);
    }
    Ok(rep)
}

/// Median |λ₁ − γ₁| at each n, with a log-log fit of the scale exponent.
pub fn rigidity_scale_fit(ns: &[usize], z: Complex64, law: EntryLaw, samples: usize, seed: u64) -> Result<(Vec<f64>, crate::stats::LineFit)> {
    need_samples(samples)?;
    let mut meds = Vec::new();
    for (k, &n) in ns.iter().enumerate() {
        let g1 = quantiles(z, n, 1)?[0];
        let dev = per_sample(samples, seed.wrapping_add(k as u64), |_, rng| {
            let x = sample_iid_rng(n, law, rng);
            Ok((singular_values_z(x.as_ref(), z)?[0] - g1).abs())
        })?;
        meds.push(median(&dev)?);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let fit = loglog_fit(&xs, &meds)?;
    Ok((meds, fit))
}

/// The three F-improved local laws at (z, iη).
pub fn check_f_laws(n: usize, z: Complex64, eta: f64, law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    let rho = solve_imag(z, eta)?.rho;
    let m = m_matrix(z, eta)?;
    let (f, fs, ep) = (Block2::f(), Block2::f_star(), Block2::e_plus());
    let mf = (m * f).trace();
    let me = (m * ep).trace();
    let m_f = m12(z, eta, z, eta, &f)?;
    let mff = m_f.trace();
    let mffs = (m_f * fs).trace();
    let nf = n as f64;
    let per = per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        let sd = svd_z(x.as_ref(), z)?;
        let ov = PairOverlaps::new(&sd, &sd);
        let g_f = resolvent_trace_sd(&sd, eta, &f, ResolventKind::Plain) - mf;
        let g_e = resolvent_trace_sd(&sd, eta, &ep, ResolventKind::Plain) - me;
        let gfg = two_resolvent_trace_with(&sd, eta, ResolventKind::Plain, &sd, eta, ResolventKind::Plain, &ov, &f, &ep) - mff;
        let gfgf = two_resolvent_trace_with(&sd, eta, ResolventKind::Plain, &sd, eta, ResolventKind::Plain, &ov, &f, &fs) - mffs;
        Ok(vec![
            nf * eta / rho * g_f.norm(),
            nf * eta * eta / rho * gfg.norm(),
            nf * eta * eta / (rho * rho) * (nf * eta * rho).powf(-0.5) * gfgf.norm(),
            g_f.norm(),
            g_e.norm(),
        ])
    })?;
    let mut rep = CheckReport::new("f_laws", n, samples, &["gf", "gfg", "gfgf", "raw_gf", "raw_ge"]);
    for (i, v) in per.iter().enumerate() {
        rep.rows.push(Row { sample: i as u64, seed: stream_seed(seed, i as u64), values: v.clone() });
    }
    for (k, label) in ["<(G-M)F>", "<GFG-M^F>", "<(GFG-M^F)F*>"].iter().enumerate() {
        let col: Vec<f64> = per.iter().map(|v| v[k]).collect();
        rep.criteria.push(Criterion::median_at_most(*label, &col, slack(n), bootstrap_seed(seed, k as u64))?);
    }
    let ratio = median(&per.iter().map(|v| v[3]).collect::<Vec<_>>())? / median(&per.iter().map(|v| v[4]).collect::<Vec<_>>())?;
    rep.criteria.push(Criterion::exact("rho-improvement", ratio, Bound::AtMost { value: 3.0 * rho }));
    rep.metadata.insert("rho".into(), rho);
    Ok(rep)
}

/// z₂ on the circle |z₂| = |z₁| at distance d from z₁, so that ρ₁ = ρ₂.
pub fn rotate_by_distance(z1: Complex64, d: f64) -> Complex64 {
    let r = z1.norm();
    if r == 0.0 {
        return Complex64::new(d, 0.0);
    }
    let phi = 2.0 * (d / (2.0 * r)).min(1.0).asin();
    z1 * Complex64::from_polar(1.0, phi)
}

/// |⟨(Im G₁ A Im G₂ − M̂₁₂^A)A⟩| for A ∈ {E₊, E₋} over a sweep of |z₁ − z₂|.
pub fn check_two_resolvent(n: usize, z1: Complex64, distances: &[f64], eta: f64, law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    let nf = n as f64;
    let blocks = [("E+", Block2::e_plus()), ("E-", Block2::e_minus())];
    let z2s: Vec<Complex64> = distances.iter().map(|&d| rotate_by_distance(z1, d)).collect();
    let mut targets = Vec::new();
    let mut envelopes = Vec::new();
    for &z2 in &z2s {
        let cp = ControlParams::new(z1, eta, z2, eta)?;
        envelopes.push(((nf * cp.ell).powf(-0.5) / cp.gamma).min(1.0 / (nf * eta * eta)));
        let mut t = Vec::new();
        for (_, a) in &blocks {
            t.push((m12_im(z1, eta, z2, eta, a)? * *a).trace());
        }
        targets.push(t);
    }
    let per = per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        let s1 = svd_z(x.as_ref(), z1)?;
        let mut out = Vec::new();
        for (k, &z2) in z2s.iter().enumerate() {
            let s2 = if distances[k] == 0.0 { s1.clone() } else { svd_z(x.as_ref(), z2)? };
            let ov = PairOverlaps::new(&s1, &s2);
            for (b, (_, a)) in blocks.iter().enumerate() {
                let tr = two_resolvent_trace_with(&s1, eta, ResolventKind::Imag, &s2, eta, ResolventKind::Imag, &ov, a, a);
                out.push((tr - targets[k][b]).norm());
            }
        }
        Ok(out)
    })?;
    let mut rep = CheckReport::new("two_resolvent", n, samples, &["distance", "block", "error", "envelope"]);
    for (i, v) in per.iter().enumerate() {
        for (k, &d) in distances.iter().enumerate() {
            for b in 0..blocks.len() {
                rep.rows.push(Row {
                    sample: i as u64,
                    seed: stream_seed(seed, i as u64),
                    values: vec![d, b as f64, v[k * blocks.len() + b], envelopes[k]],
                });
            }
        }
    }
    for (b, (name, _)) in blocks.iter().enumerate() {
        let mut meds = Vec::new();
        for (k, &d) in distances.iter().enumerate() {
            let col: Vec<f64> = per.iter().map(|v| v[k * blocks.len() + b] / envelopes[k]).collect();
            let crit = Criterion::median_at_most(format!("{name} d={d}"), &col, slack(n), bootstrap_seed(seed, (10 * k + b) as u64))?;
            meds.push(median(&per.iter().map(|v| v[k * blocks.len() + b]).collect::<Vec<_>>())?);
            rep.criteria.push(crit);
        }
        let monotone = meds.windows(2).all(|w| w[1] < w[0]);
        rep.criteria.push(Criterion::exact(format!("{name} monotone"), if monotone { 1.0 } else { 0.0 }, Bound::AtLeast { value: 1.0 }));
        for (k, m) in meds.iter().enumerate() {
            rep.metadata.insert(format!("{name}_median_{k}"), *m);
        }
    }
    for (k, e) in envelopes.iter().enumerate() {
        rep.metadata.insert(format!("envelope_{k}"), *e);
    }
    Ok(rep)
}

/// Overlap decay at i = j = 1: the normalized statistic √n(d + n^{−1/2})(ov_uu + ov_vv),
/// its flatness across the sweep and the decay exponent in d.
pub fn check_overlap_decay(n: usize, z1: Complex64, multipliers: &[f64], law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    let nf = n as f64;
    let ds: Vec<f64> = multipliers.iter().map(|c| c / nf.sqrt()).collect();
    let per = per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        let s1 = svd_z(x.as_ref(), z1)?;
        ds.iter()
            .map(|&d| {
                let s2 = svd_z(x.as_ref(), rotate_by_distance(z1, d))?;
                let (uu, vv, _) = overlaps_sd(&s1, &s2, 1, 1)?;
                Ok(uu + vv)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut rep = CheckReport::new("overlap", n, samples, &["distance", "overlap", "stat"]);
    for (i, v) in per.iter().enumerate() {
        for (k, &d) in ds.iter().enumerate() {
            let stat = nf.sqrt() * (d + 1.0 / nf.sqrt()) * v[k];
            rep.rows.push(Row { sample: i as u64, seed: stream_seed(seed, i as u64), values: vec![d, v[k], stat] });
        }
    }
    let mut meds = Vec::new();
    let mut stat_meds = Vec::new();
    for (k, &d) in ds.iter().enumerate() {
        let stat = rep.column_where("stat", "distance", d);
        rep.criteria.push(Criterion::median_at_most(format!("d={d}"), &stat, nf.powf(0.25), bootstrap_seed(seed, k as u64))?);
        stat_meds.push(median(&stat)?);
        meds.push(median(&per.iter().map(|v| v[k]).collect::<Vec<_>>())?);
    }
    let flat = stat_meds.iter().cloned().fold(0.0, f64::max) / stat_meds.iter().cloned().fold(f64::INFINITY, f64::min);
    rep.criteria.push(Criterion::exact("flatness", flat, Bound::AtMost { value: 4.0 }));
    let fit = loglog_fit(&ds, &meds)?;
    rep.criteria.push(Criterion::new("decay exponent", fit.slope, (fit.slope, fit.slope), Bound::Within { lo: -1.3, hi: -0.7 }));
    rep.metadata.insert("slope_se".into(), fit.slope_se);
    for (k, m) in meds.iter().enumerate() {
        rep.metadata.insert(format!("median_overlap_{k}"), *m);
    }
    Ok(rep)
}

/// Median i = j = 1 overlap at fixed distance d for each n, with the exponent of its n-scaling.
pub fn overlap_n_scaling(ns: &[usize], z1: Complex64, d: f64, law: EntryLaw, samples: usize, seed: u64) -> Result<(Vec<f64>, crate::stats::LineFit)> {
    need_samples(samples)?;
    let z2 = rotate_by_distance(z1, d);
    let mut meds = Vec::new();
    for (k, &n) in ns.iter().enumerate() {
        let v = per_sample(samples, seed.wrapping_add(k as u64), |_, rng| {
            let x = sample_iid_rng(n, law, rng);
            let (uu, vv, _) = overlaps_sd(&svd_z(x.as_ref(), z1)?, &svd_z(x.as_ref(), z2)?, 1, 1)?;
            Ok(uu + vv)
        })?;
        meds.push(median(&v)?);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    Ok((meds.clone(), loglog_fit(&xs, &meds)?))
}

/// 10·n^{3/2}E²e^{−nδ²/2}.
pub fn sv_tail_bound(n: usize, delta: f64, e: f64) -> f64 {
    let nf = n as f64;
    10.0 * nf.powf(1.5) * e * e * (-nf * delta * delta / 2.0).exp()
}

/// Smallest singular value of X − z for each sample, |z| = √(1 + δ).
pub fn smallest_sv_samples(n: usize, z: Complex64, law: EntryLaw, samples: usize, seed: u64) -> Result<Vec<f64>> {
    per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        smallest_singular_value(x.as_ref(), z, rng)
    })
}

/// Empirical P(λ₁ ≤ E) against the tail bound, and the growth of the probability when E doubles.
pub fn check_sv_tail(n: usize, delta: f64, e: f64, law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    if delta <= -1.0 {
        return Err(Error::InvalidArgument("delta must exceed -1".into()));
    }
    let z = Complex64::new((1.0 + delta).sqrt(), 0.0);
    let lam = smallest_sv_samples(n, z, law, samples, seed)?;
    let nn = samples as f64;
    let hits = |t: f64| lam.iter().filter(|&&l| l <= t).count() as f64;
    let (h1, h2) = (hits(e), hits(2.0 * e));
    let (p1, p2) = (h1 / nn, h2 / nn);
    let se1 = (p1 * (1.0 - p1) / nn).sqrt();
    let mut rep = CheckReport::new("sv_tail", n, samples, &["lambda1"]);
    for (i, l) in lam.iter().enumerate() {
        rep.rows.push(Row { sample: i as u64, seed: stream_seed(seed, i as u64), values: vec![*l] });
    }
    let bound = sv_tail_bound(n, delta, e);
    rep.criteria.push(Criterion::exact("tail (p - 3se)", p1 - 3.0 * se1, Bound::AtMost { value: bound }));
    // P(2E)/P(E) with delta-method error; the events are nested
    let ratio = if h1 > 0.0 { h2 / h1 } else { f64::INFINITY };
    let ratio_se = if h1 > 0.0 { ratio * ((h2 - h1) / (h1 * h2)).max(0.0).sqrt() } else { f64::INFINITY };
    let covers_four = (ratio - 3.0 * ratio_se) <= 4.0 && 4.0 <= ratio + 3.0 * ratio_se;
    rep.criteria.push(Criterion::exact("doubling ratio covers 4", if covers_four { 1.0 } else { 0.0 }, Bound::AtLeast { value: 1.0 }));
    rep.metadata.insert("p_e".into(), p1);
    rep.metadata.insert("p_2e".into(), p2);
    rep.metadata.insert("bound".into(), bound);
    rep.metadata.insert("ratio".into(), ratio);
    rep.metadata.insert("ratio_se".into(), ratio_se);
    Ok(rep)
}

/// Ratio P(λ₁(z₁) ≤ E, λ₁(z₂) ≤ E)/(P₁P₂), E the pooled 5% quantile, with a bootstrap interval.
pub fn check_sv_independence(n: usize, z1: Complex64, z2: Complex64, law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    let pairs = per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        let a = smallest_singular_value(x.as_ref(), z1, rng)?;
        let b = if z1 == z2 { a } else { smallest_singular_value(x.as_ref(), z2, rng)? };
        Ok((a, b))
    })?;
    let pooled: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let e = quantile(&pooled, 0.05)?;
    let mut rep = CheckReport::new("sv_independence", n, samples, &["lambda1_z1", "lambda1_z2"]);
    for (i, &(a, b)) in pairs.iter().enumerate() {
        rep.rows.push(Row { sample: i as u64, seed: stream_seed(seed, i as u64), values: vec![a, b] });
    }
    // encode each sample as (hit₁ + 2·hit₂) so the bootstrap statistic sees the joint event
    let codes: Vec<f64> = pairs.iter().map(|&(a, b)| (a <= e) as u8 as f64 + 2.0 * (b <= e) as u8 as f64).collect();
    let ratio_of = |c: &[f64]| {
        let nn = c.len() as f64;
        let p1 = c.iter().filter(|&&v| v == 1.0 || v == 3.0).count() as f64 / nn;
        let p2 = c.iter().filter(|&&v| v >= 2.0).count() as f64 / nn;
        let both = c.iter().filter(|&&v| v == 3.0).count() as f64 / nn;
        both / (p1 * p2)
    };
    let ratio = ratio_of(&codes);
    let ci = bootstrap_ci(&codes, ratio_of, BOOTSTRAP_REPS, 0.95, bootstrap_seed(seed, 0))?;
    rep.criteria.push(Criterion::new("ratio", ratio, ci, Bound::Within { lo: 0.5, hi: 2.0 }));
    rep.metadata.insert("threshold_e".into(), e);
    rep.metadata.insert("distance".into(), (z1 - z2).norm());
    Ok(rep)
}

/// C² bump f(z) = a(1 − |z − c|²/r²)³ on the disk of radius r around c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: (f64, f64),
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    fn s(&self, z: Complex64) -> f64 {
        (z - Complex64::new(self.center.0, self.center.1)).norm_sqr() / (self.radius * self.radius)
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        let s = self.s(z);
        if s >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - s).powi(3)
        }
    }

    /// Δf = (12a/r²)(1 − s)(3s − 1).
    pub fn laplacian(&self, z: Complex64) -> f64 {
        let s = self.s(z);
        if s >= 1.0 {
            0.0
        } else {
            12.0 * self.amplitude / (self.radius * self.radius) * (1.0 - s) * (3.0 * s - 1.0)
        }
    }
}

/// z grid points per side and log-spaced η nodes on [η_min, T].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirkoQuad {
    pub grid: usize,
    pub eta_nodes: usize,
    pub eta_min: f64,
}

impl Default for GirkoQuad {
    fn default() -> Self {
        Self { grid: 101, eta_nodes: 401, eta_min: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirkoReport {
    pub sum_f: f64,
    pub formula: f64,
    pub residual: f64,
    pub relative: f64,
}

// ∫_{η_min}^{T} Im Tr G^z(iη) dη by composite Simpson in log η.
fn eta_integral(lam: &[f64], t: f64, q: &GirkoQuad) -> f64 {
    let m = if q.eta_nodes % 2 == 1 { q.eta_nodes } else { q.eta_nodes + 1 }.max(3);
    let (a, b) = (q.eta_min.ln(), t.ln());
    let h = (b - a) / (m - 1) as f64;
    let mut acc = 0.0;
    for k in 0..m {
        let eta = (a + h * k as f64).exp();
        let val: f64 = lam.iter().map(|l| 2.0 * eta / (l * l + eta * eta)).sum::<f64>() * eta;
        let w = if k == 0 || k == m - 1 { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * val;
    }
    acc * h / 3.0
}

/// Residual of Girko's formula for the bump f:
/// Σ f(σ_i) against −(1/4π)∬Δf ∫₀^T Im Tr G^z(iη)dη d²z + (1/4π)∬Δf log|det(H^z − iT)| d²z,
/// with a trapezoidal tensor grid over the support square of f.
pub fn girko_verify(x: faer::MatRef<'_, Complex64>, f: &Bump, t: f64, quad: &GirkoQuad) -> Result<GirkoReport> {
    if t < 1e3 {
        return Err(Error::InvalidArgument(format!("T = {t} must be at least 1e3")));
    }
    if quad.grid < 3 {
        return Err(Error::InvalidArgument("z grid needs at least 3 points".into()));
    }
    let sigma = crate::randmat::spectrum(x)?;
    let sum_f: f64 = sigma.iter().map(|&s| f.eval(s)).sum();
    let abs_f: f64 = sigma.iter().map(|&s| f.eval(s).abs()).sum();
    if f.amplitude == 0.0 {
        return Ok(GirkoReport { sum_f, formula: 0.0, residual: 0.0, relative: 0.0 });
    }
    let g = quad.grid;
    let h = 2.0 * f.radius / (g - 1) as f64;
    let nodes: Vec<(usize, usize)> = (0..g).flat_map(|i| (0..g).map(move |j| (i, j))).collect();
    let parts = nodes
        .par_iter()
        .map(|&(i, j)| {
            let z = Complex64::new(f.center.0 - f.radius + h * i as f64, f.center.1 - f.radius + h * j as f64);
            let lap = f.laplacian(z);
            if lap == 0.0 {
                return Ok(0.0);
            }
            let lam = singular_values_z(x, z)?;
            let im_int = eta_integral(&lam, t, quad);
            let logdet: f64 = lam.iter().map(|l| (l * l + t * t).ln()).sum();
            let w = if i == 0 || i == g - 1 { 0.5 } else { 1.0 } * if j == 0 || j == g - 1 { 0.5 } else { 1.0 };
            Ok(w * lap * (logdet - im_int))
        })
        .collect::<Result<Vec<f64>>>()?;
    let formula = parts.iter().sum::<f64>() * h * h / (4.0 * std::f64::consts::PI);
    let residual = (sum_f - formula).abs();
    Ok(GirkoReport { sum_f, formula, residual, relative: residual / abs_f.max(1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingResult {
    pub count: f64,
    pub integral: f64,
    pub edge_count: f64,
    pub bound_ok: bool,
}

/// #{|λ| ≤ E} over the 2n eigenvalues ±λ_i of H^z against (1/π)∫_{−E}^{E} Im Tr G(y + iη)dy,
/// with the allowance #{|λ| ∈ [E − l', E + l']} + 1.
pub fn counting_vs_smoothed(lambda: &[f64], e: f64, eta: f64, l_prime: f64) -> Result<CountingResult> {
    if !(e > l_prime && l_prime > eta && eta > 0.0) {
        return Err(Error::InvalidArgument(format!("need E > l' > eta > 0 (E={e}, l'={l_prime}, eta={eta})")));
    }
    let mut count = 0.0;
    let mut edge = 0.0;
    let mut integral = 0.0;
    for &l in lambda {
        for s in [l, -l] {
            if s.abs() <= e {
                count += 1.0;
            }
            if (s.abs() - e).abs() <= l_prime {
                edge += 1.0;
            }
            integral += (((e - s) / eta).atan() + ((e + s) / eta).atan()) / std::f64::consts::PI;
        }
    }
    Ok(CountingResult { count, integral, edge_count: edge, bound_ok: (count - integral).abs() <= edge + 1.0 })
}

/// Fraction of samples where the counting bound holds, with l' = E n^{−ζ} and η = E n^{−3ζ}, ζ = 0.1.
pub fn check_counting(n: usize, z: Complex64, e: f64, law: EntryLaw, samples: usize, seed: u64) -> Result<CheckReport> {
    need_samples(samples)?;
    let zeta = 0.1;
    let nf = n as f64;
    let (lp, eta) = (e * nf.powf(-zeta), e * nf.powf(-3.0 * zeta));
    let per = per_sample(samples, seed, |_, rng| {
        let x = sample_iid_rng(n, law, rng);
        let lam = singular_values_z(x.as_ref(), z)?;
        counting_vs_smoothed(&lam, e, eta, lp)
    })?;
    let mut rep = CheckReport::new("counting", n, samples, &["count", "integral", "edge", "ok"]);
    for (i, r) in per.iter().enumerate() {
        rep.rows.push(Row {
            sample: i as u64,
            seed: stream_seed(seed, i as u64),
            values: vec![r.count, r.integral, r.edge_count, r.bound_ok as u8 as f64],
        });
    }
    let frac = per.iter().filter(|r| r.bound_ok).count() as f64 / samples as f64;
    rep.criteria.push(Criterion::exact("bound holds", frac, Bound::AtLeast { value: 0.99 }));
    rep.metadata.insert("l_prime".into(), lp);
    rep.metadata.insert("eta".into(), eta);
    Ok(rep)
}

/// Median statistic of a column, for callers inspecting reports.
pub fn column_median(rep: &CheckReport, name: &str) -> Result<f64> {
    median(&rep.column(name).ok_or_else(|| Error::InvalidArgument(format!("no column {name}")))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_laplacian_matches_finite_differences() {
        let f = Bump { center: (0.5, 0.0), radius: 0.3, amplitude: 1.0 };
        let h = 1e-4;
        for &(x, y) in &[(0.5, 0.0), (0.6, 0.1), (0.4, -0.15), (0.7, 0.05)] {
            let z = Complex64::new(x, y);
            let fd = (f.eval(z + h) + f.eval(z - h) + f.eval(z + Complex64::new(0.0, h)) + f.eval(z - Complex64::new(0.0, h)) - 4.0 * f.eval(z)) / (h * h);
            assert!((fd - f.laplacian(z)).abs() < 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", f.laplacian(z));
        }
    }

    #[test]
    fn counting_far_inside_gap() {
        let r = counting_vs_smoothed(&[1.0, 2.0], 0.01, 1e-5, 1e-3).unwrap();
        assert_eq!(r.count, 0.0);
        assert!(r.integral.abs() < 1e-4);
        assert!(r.bound_ok);
    }

    #[test]
    fn counting_everything() {
        let lam = [0.1, 0.5, 1.2];
        let r = counting_vs_smoothed(&lam, 10.0, 1e-3, 1e-2).unwrap();
        assert_eq!(r.count, 6.0);
        assert!((r.integral - 6.0).abs() < 1.0);
    }

    #[test]
    fn rotation_keeps_modulus() {
        let z = Complex64::new(0.6, 0.8);
        let w = rotate_by_distance(z, 0.05);
        assert!((w.norm() - 1.0).abs() < 1e-15 && ((w - z).norm() - 0.05).abs() < 1e-14);
    }

    #[test]
    fn criterion_rules() {
        assert!(Criterion::new("a", 1.0, (0.5, 1.5), Bound::AtMost { value: 1.5 }).pass);
        assert!(!Criterion::new("a", 1.0, (0.5, 1.6), Bound::AtMost { value: 1.5 }).pass);
        assert!(Criterion::new("a", 1.0, (0.6, 1.5), Bound::Within { lo: 0.5, hi: 2.0 }).pass);
        assert!(!Criterion::exact("a", 0.9, Bound::AtLeast { value: 0.95 }).pass);
    }
}
