use faer::Mat;
use num_complex::Complex64;
use rmtx_core::error::Error;
use rmtx_core::laws::*;
use rmtx_core::randmat::{stream_seed, EntryLaw};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn reports_are_deterministic_and_well_formed() {
    let a = check_single_law(48, c(1.0, 0.0), &[0.2, 10.0], EntryLaw::ComplexBernoulli, 6, 11).unwrap();
    let b = check_single_law(48, c(1.0, 0.0), &[0.2, 10.0], EntryLaw::ComplexBernoulli, 6, 11).unwrap();
    let other = check_single_law(48, c(1.0, 0.0), &[0.2, 10.0], EntryLaw::ComplexBernoulli, 6, 12).unwrap();
    // one row per sample and eta
    assert_eq!(a.rows.len(), 12);
    for (i, r) in a.rows.iter().enumerate() {
        assert_eq!(r.sample, i as u64 / 2);
        assert_eq!(r.seed, stream_seed(11, r.sample));
        assert_eq!(r.values.len(), a.columns.len());
    }
    assert_eq!(a.rows.iter().map(|r| r.values.clone()).collect::<Vec<_>>(), b.rows.iter().map(|r| r.values.clone()).collect::<Vec<_>>());
    assert_ne!(a.rows[0].values, other.rows[0].values);
    assert_eq!(a.criteria.len(), 2);
}

#[test]
fn single_law_refuses_scales_below_spacing() {
    let e = check_single_law(64, c(1.0, 0.0), &[1e-4], EntryLaw::ComplexGaussian, 2, 1).unwrap_err();
    assert!(matches!(e, Error::InvalidArgument(_)));
    assert_eq!(check_single_law(64, c(1.0, 0.0), &[1.0], EntryLaw::ComplexGaussian, 0, 1).unwrap_err(), Error::EmptySample);
}

#[test]
fn large_eta_error_is_small() {
    // far above the spacing the trace matches the deterministic value closely
    let rep = check_single_law(64, c(0.5, 0.0), &[10.0], EntryLaw::ComplexGaussian, 8, 2).unwrap();
    assert!(rep.pass(), "{:?}", rep.criteria);
}

#[test]
fn sv_tail_far_gap_has_no_hits() {
    let n = 128;
    let nf = n as f64;
    let rep = check_sv_tail(n, 10.0 / nf.sqrt(), nf.powf(-0.75), EntryLaw::ComplexGaussian, 200, 4).unwrap();
    assert_eq!(rep.metadata["p_e"], 0.0);
    assert_eq!(rep.metadata["p_2e"], 0.0);
}

#[test]
fn sv_tail_bound_formula() {
    let n = 256usize;
    let (d, e) = (2.0 / 16.0, 256f64.powf(-0.75));
    let want = 10.0 * 4096.0 * e * e * (-256.0 * d * d / 2.0f64).exp();
    assert!((sv_tail_bound(n, d, e) / want - 1.0).abs() < 1e-14);
}

#[test]
fn counting_bound_at_small_n() {
    let rep = check_counting(64, c(1.0, 0.0), 64f64.powf(-0.75), EntryLaw::ComplexBernoulli, 50, 5).unwrap();
    assert!(rep.pass(), "{:?}", rep.criteria);
}

#[test]
fn counting_full_mass() {
    let lam: Vec<f64> = (1..=40).map(|k| k as f64 / 40.0).collect();
    let r = counting_vs_smoothed(&lam, 10.0, 1e-3, 1e-2).unwrap();
    assert_eq!(r.count, 80.0);
    assert!((r.integral - 80.0).abs() < 1.0);
    assert!(counting_vs_smoothed(&lam, 0.1, 0.2, 0.05).is_err());
}

#[test]
fn girko_on_a_known_spectrum() {
    // upper triangular, so the eigenvalues are the diagonal
    let diag = [c(0.45, 0.05), c(0.6, -0.1), c(0.3, 0.0), c(1.5, 0.5)];
    let x = Mat::from_fn(4, 4, |i, j| if i == j { diag[i] } else if j > i { c(0.1, 0.0) } else { c(0.0, 0.0) });
    let f = Bump { center: (0.5, 0.0), radius: 0.3, amplitude: 1.0 };
    let want: f64 = diag.iter().map(|&s| f.eval(s)).sum();
    let rep = girko_verify(x.as_ref(), &f, 1e3, &GirkoQuad::default()).unwrap();
    assert!((rep.sum_f - want).abs() < 1e-12);
    assert!(rep.relative < 5e-2, "{rep:?}");
}

#[test]
fn girko_needs_a_large_cutoff() {
    let x = Mat::<Complex64>::identity(3, 3);
    let f = Bump { center: (0.0, 0.0), radius: 0.5, amplitude: 1.0 };
    assert!(girko_verify(x.as_ref(), &f, 10.0, &GirkoQuad::default()).is_err());
}

#[test]
fn control_parameters_symmetric() {
    let a = ControlParams::new(c(1.0, 0.0), 0.01, c(1.02, 0.01), 0.02).unwrap();
    let b = ControlParams::new(c(1.02, 0.01), 0.02, c(1.0, 0.0), 0.01).unwrap();
    assert!((a.ell - b.ell).abs() < 1e-15 && (a.gamma - b.gamma).abs() < 1e-15);
    assert!(a.ell > 0.0 && a.gamma > 0.0);
}

#[test]
fn median_criterion_on_constant_data() {
    let crit = Criterion::median_at_most("m", &[0.3; 25], 0.3, 1).unwrap();
    assert_eq!((crit.value, crit.ci_lo, crit.ci_hi), (0.3, 0.3, 0.3));
    assert!(crit.pass);
}

#[test]
fn rigidity_window_decreases_in_n() {
    for i in [1, 5, 20] {
        assert!(rigidity_window(1024, i, 0.0) < rigidity_window(128, i, 0.0));
    }
}
