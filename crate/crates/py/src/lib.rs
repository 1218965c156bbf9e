use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rmtx_core::error::Error;
use rmtx_core::harness::{self, ExperimentConfig, HarnessError};
use rmtx_core::{blockdet, charflow, dyson, ginexact, randmat, stats};

fn core_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::NonPositiveScale { .. } | Error::EmptySample => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn harness_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Config(m) => PyValueError::new_err(m),
        HarnessError::Backend(e) => PyRuntimeError::new_err(e.to_string()),
        HarnessError::Io(e) => PyOSError::new_err(e.to_string()),
    }
}

fn parse_law(law: &str) -> PyResult<randmat::EntryLaw> {
    serde_json::from_value(serde_json::Value::String(law.into())).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Sector {|σ| ≥ x(t), arg σ ∈ [a, b)} in rescaled coordinates.
#[pyclass(name = "AnnulusSector", frozen)]
#[derive(Clone, Copy)]
struct PySector(ginexact::AnnulusSector);

#[pymethods]
impl PySector {
    #[new]
    #[pyo3(signature = (t, a=0.0, b=std::f64::consts::TAU))]
    fn new(t: f64, a: f64, b: f64) -> PyResult<Self> {
        ginexact::AnnulusSector::new(t, a, b).map(Self).map_err(core_err)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t
    }

    #[getter]
    fn a(&self) -> f64 {
        self.0.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    fn trace(&self, n: u64) -> PyResult<f64> {
        ginexact::trace_k(n, &self.0).map_err(core_err)
    }

    fn hs_norm(&self, n: u64) -> PyResult<f64> {
        ginexact::hs_norm_k(n, &self.0).map_err(core_err)
    }

    /// (exp(-Tr K), rigorous error bound).
    fn gap_probability(&self, n: u64) -> PyResult<(f64, f64)> {
        ginexact::gap_prob_fredholm(n, &self.0).map_err(core_err)
    }

    fn __repr__(&self) -> String {
        format!("AnnulusSector(t={}, a={}, b={})", self.0.t, self.0.a, self.0.b)
    }
}

/// Experiment configuration; `run` executes it and returns the summary as JSON text.
#[pyclass(name = "ExperimentConfig")]
struct PyConfig(ExperimentConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_json(text).map(Self).map_err(harness_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn experiment(&self) -> &'static str {
        self.0.experiment.name()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    #[pyo3(signature = (threads=0))]
    fn run(&self, py: Python<'_>, threads: usize) -> PyResult<String> {
        let cfg = self.0.clone();
        let rec = py.allow_threads(move || harness::run(&cfg, threads)).map_err(harness_err)?;
        Ok(harness::summary_json(&rec))
    }

    /// Per-sample rows as CSV text, header first.
    #[pyo3(signature = (threads=0))]
    fn rows_csv(&self, py: Python<'_>, threads: usize) -> PyResult<String> {
        let cfg = self.0.clone();
        let rec = py.allow_threads(move || harness::run(&cfg, threads)).map_err(harness_err)?;
        Ok(harness::rows_csv(&rec))
    }
}

#[pyfunction]
fn gamma_n(n: u64) -> PyResult<f64> {
    ginexact::gamma_n(n).map_err(core_err)
}

#[pyfunction]
fn gamma_n_prime(n: u64) -> PyResult<f64> {
    ginexact::gamma_n_prime(n).map_err(core_err)
}

#[pyfunction]
fn rescale_radius(n: u64, modulus: f64) -> PyResult<f64> {
    ginexact::rescale_radius(n, modulus).map_err(core_err)
}

#[pyfunction]
fn radius_from_rescaled(n: u64, r: f64) -> PyResult<f64> {
    ginexact::radius_from_rescaled(n, r).map_err(core_err)
}

#[pyfunction]
fn radius_cdf_exact(n: u64, x: f64) -> f64 {
    ginexact::radius_cdf_exact(n, x)
}

#[pyfunction]
fn kostlan_sample(n: usize, k: usize, seed: u64) -> PyResult<Vec<f64>> {
    ginexact::kostlan_sample(n, k, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(core_err)
}

#[pyfunction]
fn kernel(n: u64, z: Complex64, w: Complex64) -> PyResult<Complex64> {
    ginexact::kernel(n, z, w).map_err(core_err)
}

/// Dyson solution m(z, w) and the density ρ at w.
#[pyfunction]
fn solve_m(z: Complex64, w: Complex64) -> PyResult<(Complex64, f64)> {
    dyson::solve_m(dyson::SpectralPoint::new(z, w)).map(|s| (s.m, s.rho)).map_err(core_err)
}

#[pyfunction]
fn density(z: Complex64, e: f64) -> PyResult<f64> {
    dyson::density(z, e).map_err(core_err)
}

#[pyfunction]
fn quantile(z: Complex64, n: usize, i: usize) -> PyResult<f64> {
    dyson::quantile(z, n, i).map_err(core_err)
}

/// (β₊, β₋) of the two-body stability operator.
#[pyfunction]
fn stability_eigenvalues(z1: Complex64, eta1: f64, z2: Complex64, eta2: f64) -> PyResult<(Complex64, Complex64)> {
    blockdet::stab_eigs(z1, eta1, z2, eta2).map(|s| (s.beta_plus, s.beta_minus)).map_err(core_err)
}

#[pyfunction]
fn tstar(z: Complex64, eta: f64) -> PyResult<f64> {
    charflow::tstar(z, eta).map_err(core_err)
}

/// Eigenvalues of one i.i.d. sample, ordered by decreasing modulus.
#[pyfunction]
#[pyo3(signature = (n, seed, law="complex_gaussian"))]
fn eigenvalues(py: Python<'_>, n: usize, seed: u64, law: &str) -> PyResult<Vec<Complex64>> {
    let law = parse_law(law)?;
    py.allow_threads(|| randmat::spectrum(randmat::sample_iid(n, law, seed).as_ref())).map_err(core_err)
}

/// Singular values of X − z for one i.i.d. sample, decreasing.
#[pyfunction]
#[pyo3(signature = (n, z, seed, law="complex_gaussian"))]
fn singular_values(py: Python<'_>, n: usize, z: Complex64, seed: u64, law: &str) -> PyResult<Vec<f64>> {
    let law = parse_law(law)?;
    py.allow_threads(|| randmat::singular_values_z(randmat::sample_iid(n, law, seed).as_ref(), z)).map_err(core_err)
}

#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    stats::ks_two_sample(&a, &b).map_err(core_err)
}

#[pymodule]
fn rmtx(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", harness::VERSION)?;
    m.add_class::<PySector>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(gamma_n, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_n_prime, m)?)?;
    m.add_function(wrap_pyfunction!(rescale_radius, m)?)?;
    m.add_function(wrap_pyfunction!(radius_from_rescaled, m)?)?;
    m.add_function(wrap_pyfunction!(radius_cdf_exact, m)?)?;
    m.add_function(wrap_pyfunction!(kostlan_sample, m)?)?;
    m.add_function(wrap_pyfunction!(kernel, m)?)?;
    m.add_function(wrap_pyfunction!(solve_m, m)?)?;
    m.add_function(wrap_pyfunction!(density, m)?)?;
    m.add_function(wrap_pyfunction!(quantile, m)?)?;
    m.add_function(wrap_pyfunction!(stability_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(tstar, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    Ok(())
}
