use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rmtx_core::error::Error;
use rmtx_core::ginexact::*;
use rmtx_core::quad::{try_integrate, QuadOptions};
use rmtx_core::randmat::{sample_iid, spectrum, EntryLaw};
use rmtx_core::stats::ks_two_sample;
use statrs::function::gamma::{gamma_ur, ln_gamma as sr_ln_gamma};
use std::f64::consts::PI;

fn gumbel(r: f64) -> f64 {
    (-(-r).exp()).exp()
}

fn gumbel_sup(n: u64) -> f64 {
    (0..=600)
        .map(|i| {
            let r = -2.0 + 0.01 * i as f64;
            (radius_cdf_exact(n, radius_from_rescaled(n, r).unwrap()) - gumbel(r)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn rescale_matches_direct_formula() {
    let n = 512.0f64;
    let g = n.ln() - 2.0 * n.ln().ln() - (2.0 * PI).ln();
    let want = (4.0 * n * g).sqrt() * (1.08 - 1.0 - (g / (4.0 * n)).sqrt());
    assert!((rescale_radius(512, 1.08).unwrap() - want).abs() < 1e-12);
}

#[test]
fn rightmost_scale_negative_at_desk_scale() {
    let mut n = 3u64;
    while n <= 1_000_000_000 {
        assert!(matches!(gamma_n_prime(n), Err(Error::NonPositiveScale { .. })), "n={n}");
        n = n * 3 / 2 + 1;
    }
    assert!(gamma_n_prime(1_000_000_000).is_err());
}

#[test]
fn small_n_refused() {
    assert!(gamma_n(2).is_err());
    // γ₁₀₀ < 0
    assert!(matches!(rescale_radius(100, 1.0), Err(Error::NonPositiveScale { .. })));
}

#[test]
fn kostlan_output_decreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = kostlan_sample(100, 100, &mut rng).unwrap();
    assert!(s.windows(2).all(|w| w[0] > w[1]));
    assert!(kostlan_sample(10, 0, &mut rng).is_err());
    assert!(kostlan_sample(10, 11, &mut rng).is_err());
}

#[test]
fn kostlan_normalization_matches_ginibre() {
    let n = 64;
    let runs = 1500;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut k_max = Vec::new();
    let mut k_all = Vec::new();
    for _ in 0..runs {
        let s = kostlan_sample(n, n, &mut rng).unwrap();
        k_max.push(s[0]);
        k_all.extend(s.iter().step_by(8));
    }
    let mut g_max = Vec::new();
    let mut g_all = Vec::new();
    for r in 0..runs as u64 {
        let x = sample_iid(n, EntryLaw::ComplexGaussian, 9000 + r);
        let mut m: Vec<f64> = spectrum(x.as_ref()).unwrap().iter().map(|z| z.norm()).collect();
        m.sort_by(|a, b| b.total_cmp(a));
        g_max.push(m[0]);
        g_all.extend(m.iter().step_by(8));
    }
    let (d, p) = ks_two_sample(&k_max, &g_max).unwrap();
    eprintln!("max modulus KS {d}, p {p}");
    assert!(p >= 0.01);
    let (d, p) = ks_two_sample(&k_all, &g_all).unwrap();
    eprintln!("pooled moduli KS {d}, p {p}");
    assert!(p >= 0.01);
}

#[test]
fn radius_cdf_matches_monte_carlo() {
    let n = 64;
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shapes: Vec<Gamma<f64>> = (1..=n).map(|j| Gamma::new(j as f64, 1.0).unwrap()).collect();
    let mut maxima: Vec<f64> = (0..draws)
        .map(|_| shapes.iter().map(|g| g.sample(&mut rng)).fold(0.0, f64::max))
        .map(|m| (m / n as f64).sqrt())
        .collect();
    maxima.sort_by(f64::total_cmp);
    for q in 1..=20 {
        let x = maxima[q * draws / 21];
        let emp = maxima.partition_point(|&m| m <= x) as f64 / draws as f64;
        let p = radius_cdf_exact(n as u64, x);
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((emp - p).abs() <= 3.0 * se, "x={x}: emp {emp} exact {p} se {se}");
    }
}

#[test]
fn radius_cdf_is_a_distribution() {
    let n = 1000;
    let mut prev = 0.0;
    for i in 0..200 {
        let x = 0.9 + 0.002 * i as f64;
        let p = radius_cdf_exact(n, x);
        assert!((0.0..=1.0).contains(&p) && p >= prev);
        prev = p;
    }
    // numerical derivative integrates to one
    let h = 1e-5;
    let dens = |x: f64| Ok((radius_cdf_exact(n, x + h) - radius_cdf_exact(n, x - h)) / (2.0 * h));
    let mut mass = 0.0;
    let knots = [0.8, 0.98, 1.0, 1.02, 1.05, 1.1, 1.3];
    for w in knots.windows(2) {
        mass += try_integrate(dens, w[0], w[1], QuadOptions::abs(1e-9)).unwrap().value;
    }
    assert!((mass - 1.0).abs() <= 1e-3, "mass {mass}");
}

#[test]
fn gumbel_distance_decreases() {
    let d: Vec<f64> = [1_000u64, 10_000, 100_000].iter().map(|&n| gumbel_sup(n)).collect();
    eprintln!("sup distances {d:?}");
    assert!(d.windows(2).all(|w| w[1] < w[0]));
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn kernel_symmetries() {
    let n = 10_000;
    let pts = [(c(1.0, 0.01), c(0.99, 0.02)), (c(0.3, 0.95), c(0.31, 0.96)), (c(-1.02, 0.0), c(-1.0, 0.005))];
    for &(z, w) in &pts {
        let k = kernel(n, z, w).unwrap();
        let rot = Complex64::from_polar(1.0, 0.7);
        let kr = kernel(n, rot * z, rot * w).unwrap();
        assert!((k - kr).norm() <= 1e-12 * k.norm(), "{k} {kr}");
        let kt = kernel(n, w, z).unwrap();
        assert!((k - kt.conj()).norm() <= 1e-12 * k.norm());
    }
}

#[test]
fn kernel_preconditions() {
    assert!(kernel(100, c(3.5, 0.0), c(1.0, 0.0)).is_err());
    assert!(kernel(20_000_000, c(1.0, 0.0), c(1.0, 0.0)).is_err());
}

#[test]
fn kernel_diagonal_positive_and_consistent() {
    let n = 10_000;
    for i in 0..40 {
        let m = 0.5 + 0.015 * i as f64;
        let z = Complex64::from_polar(m, 0.3 * i as f64);
        let k = kernel(n, z, z).unwrap();
        let d = kernel_diag(n, m);
        assert!(k.re > 0.0 && d > 0.0);
        assert!(k.im.abs() <= 1e-10 * k.re);
        assert!((k.re - d).abs() <= 1e-10 * d, "m={m}: {} vs {d}", k.re);
    }
}

#[test]
fn kernel_diagonal_asymptotics() {
    let n = 10_000u64;
    let p = RescaleParams::new(n).unwrap();
    let scale = (4.0 * n as f64 * p.gamma_n).sqrt();
    let ln = (n as f64).ln();
    for i in 0..=12 {
        let r = -2.0 + 0.5 * i as f64;
        let z = Complex64::from_polar(p.to_modulus(r), 1.0);
        let k = kernel(n, z, z).unwrap().re / scale;
        let target = (-r).exp() / (2.0 * PI);
        let env = 10.0 * (ln.ln() + r * r) / ln * target;
        assert!((k - target).abs() <= env, "r={r}: {k} vs {target}");
    }
}

#[test]
fn kernel_off_diagonal_decay() {
    let n = 10_000u64;
    let p = RescaleParams::new(n).unwrap();
    let nf = n as f64;
    let mut worst = 0.0f64;
    for &r1 in &[0.0, 1.0, 2.5, 4.0] {
        for &r2 in &[0.0, 0.5, 2.0, 4.0] {
            for &dth in &[0.0, 0.005, 0.02, 0.1, 0.5, 2.0] {
                let z1 = Complex64::from_polar(p.to_modulus(r1), 0.2);
                let z2 = Complex64::from_polar(p.to_modulus(r2), 0.2 + dth);
                let k = kernel(n, z1, z2).unwrap().norm() / (nf * p.gamma_n).sqrt();
                let cap = if dth == 0.0 { 1.0 } else { ((p.gamma_n / nf).sqrt() / dth).min(1.0) };
                worst = worst.max(k / ((-(r1 + r2) / 2.0).exp() * cap));
            }
        }
    }
    eprintln!("off-diagonal constant {worst}");
    assert!(worst <= 10.0);
}

// ((b − a)/2π) Σ_{k=1}^n Q(k, nR²) with statrs's incomplete gamma
fn trace_closed(n: u64, s: &AnnulusSector) -> f64 {
    let rad = radius_from_rescaled(n, s.t).unwrap();
    let x = n as f64 * rad * rad;
    s.width() / (2.0 * PI) * (1..=n).map(|k| gamma_ur(k as f64, x)).sum::<f64>()
}

#[test]
fn trace_quadrature_matches_closed_form() {
    for &(n, t, a, b) in &[(1_000u64, 0.0, 0.0, 2.0 * PI), (10_000, 0.0, 0.0, 2.0 * PI), (10_000, 2.0, 0.5, 2.0), (2_000, -1.0, 0.0, PI)] {
        let s = AnnulusSector::new(t, a, b).unwrap();
        let q = trace_k(n, &s).unwrap();
        let cf = trace_closed(n, &s);
        let series = trace_k_series(n, &s).unwrap();
        assert!((q - cf).abs() <= 1e-6 * cf, "n={n} t={t}: {q} vs {cf}");
        assert!((series - cf).abs() <= 1e-8 * cf, "n={n} t={t}: {series} vs {cf}");
    }
}

#[test]
fn trace_within_asymptotic_envelope() {
    let n = 10_000u64;
    let ln = (n as f64).ln();
    let env = 10.0 * ln.ln().powi(2) / ln;
    for &t in &[0.0, 2.0] {
        let tr = trace_k(n, &AnnulusSector::full(t)).unwrap();
        let target = (-t).exp();
        assert!((tr / target - 1.0).abs() <= env, "t={t}: {tr} vs {target}");
    }
}

// ∫∫_{A×A} |K(z₁, z₂)|² by nested quadrature over (r₁, r₂, θ₁ − θ₂)
fn hs_brute(n: u64, s: &AnnulusSector) -> f64 {
    let p = RescaleParams::new(n).unwrap();
    let jac = 1.0 / (4.0 * n as f64 * p.gamma_n).sqrt();
    let width = s.width();
    let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-7, max_evals: 100_000 };
    let top = s.t + 20.0;
    let inner = |r1: f64, r2: f64| -> rmtx_core::error::Result<f64> {
        let (m1, m2) = (p.to_modulus(r1), p.to_modulus(r2));
        let f = |phi: f64| -> rmtx_core::error::Result<f64> {
            let k = kernel(n, Complex64::new(m1, 0.0), Complex64::from_polar(m2, phi))?;
            Ok(2.0 * (width - phi) * k.norm_sqr())
        };
        let mut v = 0.0;
        for w in [0.0, 0.05, 0.3, width].windows(2) {
            if w[0] < width {
                v += try_integrate(f, w[0], w[1].min(width), opts)?.value;
            }
        }
        Ok(m1 * m2 * jac * jac * v)
    };
    let outer = |r1: f64| -> rmtx_core::error::Result<f64> {
        let mut v = 0.0;
        for w in [s.t, s.t + 2.0, s.t + 6.0, top].windows(2) {
            v += try_integrate(|r2| inner(r1, r2), w[0], w[1], opts)?.value;
        }
        Ok(v)
    };
    let mut total = 0.0;
    for w in [s.t, s.t + 2.0, s.t + 6.0, top].windows(2) {
        total += try_integrate(outer, w[0], w[1], opts).unwrap().value;
    }
    total.sqrt()
}

#[test]
fn hs_norm_matches_brute_quadrature() {
    let n = 400;
    let s = AnnulusSector::new(-1.0, 0.3, 1.3).unwrap();
    let series = hs_norm_k(n, &s).unwrap();
    let brute = hs_brute(n, &s);
    assert!((series - brute).abs() <= 1e-5 * brute, "{series} vs {brute}");
}

#[test]
fn hs_norm_full_annulus_closed_form() {
    for &n in &[1_000u64, 10_000] {
        let rad = radius_from_rescaled(n, 0.0).unwrap();
        let x = n as f64 * rad * rad;
        let want = (1..=n).map(|k| gamma_ur(k as f64, x).powi(2)).sum::<f64>().sqrt();
        let got = hs_norm_k(n, &AnnulusSector::full(0.0)).unwrap();
        assert!((got - want).abs() <= 1e-9 * want, "n={n}: {got} vs {want}");
    }
}

#[test]
fn hs_norm_small_at_ten_thousand() {
    let v = hs_norm_k(10_000, &AnnulusSector::full(0.0)).unwrap();
    assert!(v <= 0.1, "hs norm {v}");
}

#[test]
fn fredholm_vs_exact_radius_law() {
    let n = 1_000;
    let (p, bound) = gap_prob_fredholm(n, &AnnulusSector::full(0.0)).unwrap();
    let exact = radius_cdf_exact(n, radius_from_rescaled(n, 0.0).unwrap());
    eprintln!("exp(-Tr K) {p}, exact {exact}, bound {bound}");
    assert!((p - exact).abs() <= bound + 0.05);
}

#[test]
fn half_sector_gap_probability() {
    let (p, _) = gap_prob_fredholm(10_000, &AnnulusSector::new(0.0, 0.0, PI).unwrap()).unwrap();
    assert!((p - (-0.5f64).exp()).abs() <= 0.05, "gap probability {p}");
}

fn step() -> SmoothStep {
    SmoothStep { height: 1.0, start: 0.0, width: 0.02 }
}

#[test]
fn laplace_of_zero_is_one() {
    let v = laplace_functional_radial(1_000, &|_| 0.0, 0.0, &[], QuadOptions::abs(1e-12)).unwrap();
    assert_eq!(v, 1.0);
}

#[test]
fn laplace_poisson_limit_of_step() {
    let s = step();
    let lim = laplace_poisson_limit(&|r| s.eval(r), 0.0, &s.breakpoints()).unwrap();
    // smoothing shifts the sharp-step value exp(−(1 − e^{−1})) by O(width)
    let sharp = (-(1.0 - (-1.0f64).exp())).exp();
    assert!((lim - sharp).abs() < 0.01);
}

#[test]
fn laplace_matches_kostlan_monte_carlo() {
    let n = 1_000u64;
    let s = step();
    let g = |r: f64| s.eval(r);
    let exact = laplace_functional_radial(n, &g, 0.0, &s.breakpoints(), QuadOptions::abs(1e-12)).unwrap();
    let p = RescaleParams::new(n).unwrap();
    let y0 = n as f64 * p.to_modulus(0.0).powi(2);
    // shapes with P(Γ_k ≥ y0) below 1e-13 never reach the support of g
    let shapes: Vec<Gamma<f64>> = (1..=n)
        .filter(|&k| rmtx_core::special::ln_gamma_pq(k, y0).1 > -30.0)
        .map(|k| Gamma::new(k as f64, 1.0).unwrap())
        .collect();
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let vals: Vec<f64> = (0..draws)
        .map(|_| {
            let sum: f64 = shapes.iter().map(|d| g(p.to_rescaled((d.sample(&mut rng) / n as f64).sqrt()))).sum();
            (-sum).exp()
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / draws as f64;
    let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64 / draws as f64).sqrt();
    eprintln!("laplace exact {exact}, MC {mean} ± {se}");
    assert!((exact - mean).abs() <= 3.0 * se);
}

#[test]
fn laplace_near_poisson_limit_at_large_n() {
    let s = step();
    let v = laplace_functional_radial(100_000, &|r| s.eval(r), 0.0, &s.breakpoints(), QuadOptions::abs(1e-12)).unwrap();
    let target = (-(1.0 - (-1.0f64).exp())).exp();
    assert!((v - target).abs() <= 0.05, "{v} vs {target}");
}

#[test]
fn k_gamma_ratio_rate() {
    for &n in &[10_000u64, 1_000_000] {
        let ln = (n as f64).ln();
        let dev = (k_gamma_ratio(n).unwrap() - 1.0).abs();
        assert!(dev <= 10.0 * ln.ln() / ln, "n={n}: {dev}");
    }
}

#[test]
fn statrs_agrees_on_log_gamma() {
    // guards the oracle library against our own special functions
    for &x in &[0.5, 3.0, 17.5, 1e4] {
        assert!((sr_ln_gamma(x) - rmtx_core::special::ln_gamma(x)).abs() <= 1e-12 * sr_ln_gamma(x).abs().max(1.0));
    }
}
