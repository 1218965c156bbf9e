use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmtx_core::error::Error;
use rmtx_core::randmat::{sample_iid, spectrum, EntryLaw};
use rmtx_core::stats::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn uniforms(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[test]
fn ks_p_values_under_the_null() {
    let ok = (0..100).filter(|&s| ks_one_sample(&uniforms(10_000, s), |x| x).unwrap().1 >= 1e-3).count();
    assert!(ok >= 99, "{ok} of 100");
}

#[test]
fn ks_two_sample_null() {
    let ok = (0..100).filter(|&s| ks_two_sample(&uniforms(2000, 2 * s), &uniforms(2000, 2 * s + 1)).unwrap().1 >= 1e-3).count();
    assert!(ok >= 99, "{ok} of 100");
}

#[test]
fn shifted_sample_distance_is_shift_mass() {
    let shifted: Vec<f64> = uniforms(20_000, 3).iter().map(|u| u + 0.1).collect();
    let d = ks_distance(&shifted, |x| x.clamp(0.0, 1.0)).unwrap();
    assert!((d - 0.1).abs() < 0.02, "{d}");
    let (d2, p) = ks_two_sample(&uniforms(20_000, 4), &shifted).unwrap();
    assert!((d2 - 0.1).abs() < 0.02 && p < 1e-10);
}

#[test]
fn empty_samples() {
    assert_eq!(ks_distance(&[], |x| x), Err(Error::EmptySample));
    assert_eq!(median(&[]), Err(Error::EmptySample));
    assert!(chi2_uniform_angle(&[0.1], 1).is_err());
}

#[test]
fn chi2_sf_matches_statrs() {
    for dof in [1.0, 2.0, 7.0, 30.0] {
        let dist = ChiSquared::new(dof).unwrap();
        for x in [0.1, 1.0, 5.0, 14.0, 60.0] {
            let want = dist.sf(x);
            let got = chi2_sf(x, dof).unwrap();
            assert!((got - want).abs() <= 1e-12 + 1e-10 * want, "dof {dof} x {x}: {got} vs {want}");
        }
    }
}

#[test]
fn uniform_angles_pass() {
    let angles: Vec<f64> = uniforms(5000, 5).iter().map(|u| u * std::f64::consts::TAU).collect();
    assert!(chi2_uniform_angle(&angles, 8).unwrap().1 >= 1e-3);
}

#[test]
fn ginibre_top_argument_uniform() {
    let n = 256;
    let angles: Vec<f64> = (0..2000u64).map(|s| spectrum(sample_iid(n, EntryLaw::ComplexGaussian, 9000 + s).as_ref()).unwrap()[0].arg()).collect();
    let (stat, p) = chi2_uniform_angle(&angles, 8).unwrap();
    assert!(p >= 1e-3, "chi2 {stat} p {p}");
}

#[test]
fn bootstrap_interval_covers_the_mean() {
    let x = uniforms(400, 6);
    let (lo, hi) = bootstrap_ci(&x, |s| mean(s).unwrap(), 1000, 0.95, 1).unwrap();
    assert!(lo < 0.5 && 0.5 < hi, "[{lo}, {hi}]");
    // normal-theory width 2·1.96·σ/√n with σ² = 1/12
    let width = 2.0 * 1.96 / (12.0f64 * 400.0).sqrt();
    assert!(((hi - lo) / width - 1.0).abs() < 0.15);
}

#[test]
fn slope_standard_error_matches_scatter() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let slopes: Vec<f64> = (0..400)
        .map(|_| {
            let x: Vec<f64> = (0..20).map(|k| k as f64).collect();
            let y: Vec<f64> = x.iter().map(|v| 2.0 * v + rng.random_range(-1.0..1.0)).collect();
            linear_fit(&x, &y).unwrap().slope
        })
        .collect();
    let x: Vec<f64> = (0..20).map(|k| k as f64).collect();
    let sxx: f64 = x.iter().map(|v| (v - 9.5) * (v - 9.5)).sum();
    let want = (1.0 / 3.0 / sxx).sqrt();
    let got = variance(&slopes).unwrap().sqrt();
    assert!((got / want - 1.0).abs() < 0.1, "{got} vs {want}");
    assert!((mean(&slopes).unwrap() - 2.0).abs() < 3.0 * want / 20.0);
}

proptest! {
    #[test]
    fn ks_distance_in_unit_interval(v in proptest::collection::vec(-3.0f64..3.0, 1..200)) {
        let d = ks_distance(&v, |x| (x / 6.0 + 0.5).clamp(0.0, 1.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn ks_two_sample_symmetric(a in proptest::collection::vec(0.0f64..1.0, 1..100), b in proptest::collection::vec(0.0f64..1.0, 1..100)) {
        let (d1, p1) = ks_two_sample(&a, &b).unwrap();
        let (d2, p2) = ks_two_sample(&b, &a).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-15 && (p1 - p2).abs() < 1e-15);
    }

    #[test]
    fn quantiles_monotone(v in proptest::collection::vec(-1e3f64..1e3, 1..100), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile(&v, lo).unwrap() <= quantile(&v, hi).unwrap());
    }

    #[test]
    fn kolmogorov_sf_decreasing(a in 0.01f64..3.0, b in 0.01f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(kolmogorov_sf(lo) >= kolmogorov_sf(hi) - 1e-15);
    }
}
