//! Experiment runner behind the `rmtx` binary: JSON configuration, dispatch into
//! the check modules, and deterministic CSV/JSON output.
//!
//! Output files for experiment `e` in the output directory:
//! `e_rows.csv` (one row per sample and grid point, first columns `sample,seed`),
//! `e_summary.json` (config echo, criteria, metadata, plot series) and
//! `e_timing.json` (wall clock, kept apart so the other two are reproducible).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charflow::{flow_integrate, DbmState, dbm_evolve};
use crate::error::Error;
use crate::ginexact::{
    gamma_n_prime, gamma_n_prime_value, gap_prob_fredholm, hs_norm_k, k_gamma_ratio, kostlan_sample, laplace_functional_radial,
    laplace_poisson_limit, radius_cdf_exact, radius_from_rescaled, trace_k, AnnulusSector, RescaleParams, SmoothStep,
};
use crate::laws::{self, Bound, Bump, CheckReport, Criterion, GirkoQuad, IsoVectors, Row};
use crate::quad::QuadOptions;
use crate::randmat::{sample_iid_rng, singular_values_z, spectrum, stream_rng, stream_seed, EntryLaw};
use crate::stats::{ks_one_sample, ks_two_sample, median};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// Second independent family of streams, for reference draws paired with sample i.
const REFERENCE_TAG: u64 = 0x5eed_0f_4ef5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Backend(_) | HarnessError::Io(_) => 3,
        }
    }
}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => HarnessError::Config(m),
            Error::NonPositiveScale { n, value } => {
                HarnessError::Config(format!("rescaling refused: non-positive scale {value} at n = {n}"))
            }
            Error::EmptySample => HarnessError::Config("experiment needs samples > 0".into()),
            other => HarnessError::Backend(other),
        }
    }
}

pub type HResult<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Gumbel,
    Rightmost,
    Ppp,
    Locallaw,
    Isotropic,
    Rigidity,
    Flaws,
    Tworesolvent,
    Overlap,
    Svtail,
    Independence,
    Girko,
    Counting,
    Kernel,
    Kostlan,
    Flow,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Gumbel => "gumbel",
            Experiment::Rightmost => "rightmost",
            Experiment::Ppp => "ppp",
            Experiment::Locallaw => "locallaw",
            Experiment::Isotropic => "isotropic",
            Experiment::Rigidity => "rigidity",
            Experiment::Flaws => "flaws",
            Experiment::Tworesolvent => "tworesolvent",
            Experiment::Overlap => "overlap",
            Experiment::Svtail => "svtail",
            Experiment::Independence => "independence",
            Experiment::Girko => "girko",
            Experiment::Counting => "counting",
            Experiment::Kernel => "kernel",
            Experiment::Kostlan => "kostlan",
            Experiment::Flow => "flow",
        }
    }
}

/// Experiment-specific parameters; every field is optional and defaults scale with n.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z2: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imax: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<AnnulusSector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<SmoothStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub large_n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump: Option<Bump>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_batches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_gumbel: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

fn default_law() -> EntryLaw {
    EntryLaw::ComplexGaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: usize,
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_law")]
    pub law: EntryLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> HResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if cfg.n == 0 {
            return Err(HarnessError::Config("n must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn z(&self) -> Complex64 {
        self.params.z.map(|[a, b]| Complex64::new(a, b)).unwrap_or(Complex64::new(1.0, 0.0))
    }
}

/// One point of a plot-ready series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl SeriesPoint {
    fn new(series: &str, x: f64, y: f64, lo: f64, hi: f64) -> Self {
        Self { series: series.into(), x, y, y_lo: lo, y_hi: hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub version: String,
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub criteria: Vec<Criterion>,
    pub metadata: BTreeMap<String, f64>,
    pub series: Vec<SeriesPoint>,
    pub columns: Vec<String>,
    pub row_count: usize,
    #[serde(skip)]
    pub rows: Vec<Row>,
}

struct Outcome {
    report: CheckReport,
    series: Vec<SeriesPoint>,
}

impl From<CheckReport> for Outcome {
    fn from(report: CheckReport) -> Self {
        let series = criteria_series(&report);
        Self { report, series }
    }
}

fn criteria_series(rep: &CheckReport) -> Vec<SeriesPoint> {
    rep.criteria
        .iter()
        .enumerate()
        .map(|(k, c)| SeriesPoint::new(&format!("{}_criteria", rep.name), k as f64, c.value, c.ci_lo, c.ci_hi))
        .collect()
}

fn empty_report(name: &str, cfg: &ExperimentConfig, columns: &[&str]) -> CheckReport {
    CheckReport {
        name: name.into(),
        n: cfg.n,
        samples: cfg.samples,
        criteria: Vec::new(),
        metadata: BTreeMap::new(),
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows: Vec::new(),
    }
}

fn per_sample<T: Send>(samples: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng) -> crate::error::Result<T> + Sync) -> HResult<Vec<T>> {
    Ok((0..samples as u64)
        .into_par_iter()
        .map(|i| f(&mut stream_rng(seed, i)))
        .collect::<crate::error::Result<Vec<T>>>()?)
}

fn max_modulus(x: faer::MatRef<'_, Complex64>) -> crate::error::Result<f64> {
    Ok(spectrum(x)?[0].norm())
}

/// Top modulus, its argument, and the largest moduli in the closed upper and open lower half-planes.
fn extremes(x: faer::MatRef<'_, Complex64>) -> crate::error::Result<[f64; 4]> {
    let sig = spectrum(x)?;
    let half_max = |upper: bool| sig.iter().filter(|s| (s.im >= 0.0) == upper).map(|s| s.norm()).fold(0.0, f64::max);
    Ok([sig[0].norm(), sig[0].arg(), half_max(true), half_max(false)])
}

/// Joint-minus-product of the two indicator means, with a delta-method standard error.
fn factorization_gap(a: &[bool], b: &[bool]) -> (f64, f64) {
    let n = a.len() as f64;
    let pa = a.iter().filter(|&&v| v).count() as f64 / n;
    let pb = b.iter().filter(|&&v| v).count() as f64 / n;
    let infl: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x as u8 as f64, y as u8 as f64);
            x * y - pb * x - pa * y
        })
        .collect();
    let joint = a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64 / n;
    let se = crate::stats::std_error(&infl).unwrap_or(0.0);
    (joint - pa * pb, se)
}

fn run_gumbel(cfg: &ExperimentConfig) -> HResult<Outcome> {
    let n = cfg.n;
    let mut rep = empty_report("gumbel", cfg, &["modulus", "pit", "arg", "upper_max", "lower_max"]);
    let mut series = Vec::new();
    if cfg.samples > 0 {
        let ext = per_sample(cfg.samples, cfg.seed, |rng| extremes(sample_iid_rng(n, cfg.law, rng).as_ref()))?;
        let pit: Vec<f64> = ext.iter().map(|e| radius_cdf_exact(n as u64, e[0])).collect();
        for (i, (e, u)) in ext.iter().zip(&pit).enumerate() {
            rep.rows.push(Row { sample: i as u64, seed: stream_seed(cfg.seed, i as u64), values: vec![e[0], *u, e[1], e[2], e[3]] });
        }
        let (d, p) = ks_one_sample(&pit, |u| u.clamp(0.0, 1.0))?;
        rep.metadata.insert("pit_ks_distance".into(), d);
        let p_min = cfg.params.p_min.unwrap_or(1e-3);
        rep.criteria.push(Criterion::exact("pit uniform (KS p)", p, Bound::AtLeast { value: p_min }));
        let args: Vec<f64> = ext.iter().map(|e| e[1]).collect();
        let (chi2, p_arg) = crate::stats::chi2_uniform_angle(&args, 8)?;
        rep.metadata.insert("arg_chi2".into(), chi2);
        rep.criteria.push(Criterion::exact("arg uniform (chi2 p)", p_arg, Bound::AtLeast { value: p_min }));
        let halves: Vec<f64> = ext.iter().flat_map(|e| [e[2], e[3]]).collect();
        let x = median(&halves)?;
        let up: Vec<bool> = ext.iter().map(|e| e[2] <= x).collect();
        let lo: Vec<bool> = ext.iter().map(|e| e[3] <= x).collect();
        let (gap, se) = factorization_gap(&up, &lo);
        rep.metadata.insert("factorization_x".into(), x);
        rep.metadata.insert("factorization_gap".into(), gap);
        rep.metadata.insert("factorization_se".into(), se);
        let z = if se > 0.0 { gap.abs() / se } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
        rep.criteria.push(Criterion::exact("|joint - product| / SE", z, Bound::AtMost { value: 3.0 }));
    }
    let ns = cfg.params.ns.clone().unwrap_or_default();
    if !ns.is_empty() {
        let mut sups = Vec::new();
        for &m in &ns {
            let mut sup = 0.0f64;
            for i in 0..=600 {
                let r = -2.0 + 0.01 * i as f64;
                let exact = radius_cdf_exact(m as u64, radius_from_rescaled(m as u64, r)?);
                let gumbel = (-(-r).exp()).exp();
                sup = sup.max((exact - gumbel).abs());
                if m == *ns.last().expect("nonempty") && i % 10 == 0 {
                    series.push(SeriesPoint::new("cdf_vs_gumbel", r, exact, gumbel.min(exact), gumbel.max(exact)));
                }
            }
            sups.push(sup);
            series.push(SeriesPoint::new("sup_distance", m as f64, sup, sup, sup));
            rep.metadata.insert(format!("sup_n{m}"), sup);
        }
        let monotone = sups.windows(2).all(|w| w[1] < w[0]);
        rep.criteria.push(Criterion::exact("sup decreasing in n", monotone as u8 as f64, Bound::AtLeast { value: 1.0 }));
        let last = *sups.last().expect("nonempty");
        rep.criteria.push(Criterion::exact("sup at largest n", last, Bound::AtMost { value: cfg.params.tolerance.unwrap_or(0.06) }));
    }
    if rep.criteria.is_empty() {
        return Err(HarnessError::Config("gumbel needs samples > 0 or a list of ns".into()));
    }
    let mut out = Outcome::from(rep);
    out.series.extend(series);
    Ok(out)
}

fn run_kostlan(cfg: &ExperimentConfig) -> HResult<Outcome> {
    let n = cfg.n;
    let samples = cfg.samples;
    let ref_master = cfg.seed ^ REFERENCE_TAG;
    let direct = per_sample(samples, cfg.seed, |rng| max_modulus(sample_iid_rng(n, cfg.law, rng).as_ref()))?;
    let kostlan_batch = |offset: u64| -> HResult<Vec<f64>> {
        Ok((0..samples as u64)
            .into_par_iter()
            .map(|i| kostlan_sample(n, 1, &mut stream_rng(ref_master, offset + i)).map(|v| v[0]))
            .collect::<crate::error::Result<Vec<f64>>>()?)
    };
    let kost = kostlan_batch(0)?;
    let mut rep = empty_report("kostlan", cfg, &["source", "modulus"]);
    for (i, m) in direct.iter().enumerate() {
        rep.rows.push(Row { sample: i as u64, seed: stream_seed(cfg.seed, i as u64), values: vec![0.0, *m] });
    }
    for (i, m) in kost.iter().enumerate() {
        rep.rows.push(Row { sample: i as u64, seed: stream_seed(ref_master, i as u64), values: vec![1.0, *m] });
    }
    let (d, p) = ks_two_sample(&direct, &kost)?;
    rep.metadata.insert("ks_distance".into(), d);
    rep.criteria.push(Criterion::exact("two-sample KS p", p, Bound::AtLeast { value: cfg.params.p_min.unwrap_or(0.01) }));
    let batches = cfg.params.calibration_batches.unwrap_or(0);
    if batches > 0 {
        // each calibration pair uses fresh Kostlan batches further along the reference streams
        let mut cal = Vec::new();
        for b in 0..batches as u64 {
            let x = kostlan_batch((2 * b + 1) * samples as u64)?;
            let y = kostlan_batch((2 * b + 2) * samples as u64)?;
            cal.push(ks_two_sample(&x, &y)?.0);
        }
        let dcal = median(&cal)?;
        rep.metadata.insert("calibration_median_distance".into(), dcal);
        rep.criteria.push(Criterion::exact("KS distance / calibration", d / dcal, Bound::AtMost { value: 2.0 }));
    }
    Ok(rep.into())
}

fn rightmost_scan() -> HResult<Vec<(u64, f64)>> {
    let mut out = Vec::new();
    let mut n = 3u64;
    while n <= 1_000_000_000 {
        out.push((n, gamma_n_prime_value(n)?));
        n = (n as f64 * 1.25).ceil() as u64;
    }
    out.push((1_000_000_000, gamma_n_prime_value(1_000_000_000)?));
    Ok(out)
}

fn run_rightmost(cfg: &ExperimentConfig) -> HResult<Outcome> {
    if cfg.params.compare_gumbel == Some(true) {
        gamma_n_prime(cfg.n as u64)?;
        return Err(HarnessError::Config("Gumbel comparison for the rightmost eigenvalue is not implemented".into()));
    }
    let n = cfg.n;
    let mut rep = empty_report("rightmost", cfg, &["max_re_law", "max_re_ginibre"]);
    let scan = rightmost_scan()?;
    let worst = scan.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    rep.criteria.push(Criterion::exact("max gamma' over n <= 1e9", worst, Bound::AtMost { value: 0.0 }));
    let mut series: Vec<SeriesPoint> = scan.iter().map(|&(m, g)| SeriesPoint::new("gamma_prime", m as f64, g, g, g)).collect();
    if cfg.samples > 0 {
        let ref_master = cfg.seed ^ REFERENCE_TAG;
        let max_re = |x: faer::MatRef<'_, Complex64>| -> crate::error::Result<f64> {
            Ok(spectrum(x)?.iter().map(|s| s.re).fold(f64::NEG_INFINITY, f64::max))
        };
        let pairs = (0..cfg.samples as u64)
            .into_par_iter()
            .map(|i| {
                let a = max_re(sample_iid_rng(n, cfg.law, &mut stream_rng(cfg.seed, i)).as_ref())?;
                let b = max_re(sample_iid_rng(n, EntryLaw::ComplexGaussian, &mut stream_rng(ref_master, i)).as_ref())?;
                Ok((a, b))
            })
            .collect::<crate::error::Result<Vec<(f64, f64)>>>()?;
        for (i, &(a, b)) in pairs.iter().enumerate() {
            rep.rows.push(Row { sample: i as u64, seed: stream_seed(cfg.seed, i as u64), values: vec![a, b] });
        }
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (d, p) = ks_two_sample(&a, &b)?;
        rep.metadata.insert("ks_distance".into(), d);
        rep.criteria.push(Criterion::exact("max Re KS p", p, Bound::AtLeast { value: cfg.params.p_min.unwrap_or(1e-3) }));
    }
    let mut out = Outcome::from(rep);
    out.series.append(&mut series);
    Ok(out)
}

fn default_step() -> SmoothStep {
    SmoothStep { height: 1.0, start: 0.0, width: 0.02 }
}

fn run_ppp(cfg: &ExperimentConfig) -> HResult<Outcome> {
    let n = cfg.n;
    let step = cfg.params.step.unwrap_or_else(default_step);
    let g = |r: f64| step.eval(r);
    let params = RescaleParams::new(n as u64)?;
    let quad = QuadOptions::abs(1e-12);
    let exact = laplace_functional_radial(n as u64, &g, step.start, &step.breakpoints(), quad)?;
    let mut rep = empty_report("ppp", cfg, &["sum_g", "exp_minus_sum"]);
    rep.metadata.insert("exact".into(), exact);
    let mut series = vec![SeriesPoint::new("laplace_exact", n as f64, exact, exact, exact)];
    if cfg.samples > 0 {
        let sums = per_sample(cfg.samples, cfg.seed, |rng| {
            let sig = spectrum(sample_iid_rng(n, cfg.law, rng).as_ref())?;
            Ok(sig.iter().map(|s| g(params.to_rescaled(s.norm()))).sum::<f64>())
        })?;
        let vals: Vec<f64> = sums.iter().map(|s| (-s).exp()).collect();
        for (i, (s, v)) in sums.iter().zip(&vals).enumerate() {
            rep.rows.push(Row { sample: i as u64, seed: stream_seed(cfg.seed, i as u64), values: vec![*s, *v] });
        }
        let mean = crate::stats::mean(&vals)?;
        let se = crate::stats::std_error(&vals)?;
        rep.metadata.insert("mc_mean".into(), mean);
        rep.metadata.insert("mc_se".into(), se);
        rep.criteria.push(Criterion::exact("|MC - exact| / SE", (mean - exact).abs() / se, Bound::AtMost { value: 3.0 }));
        series.push(SeriesPoint::new("laplace_mc", n as f64, mean, mean - 3.0 * se, mean + 3.0 * se));
    }
    if let Some(big) = cfg.params.large_n {
        let v = laplace_functional_radial(big, &g, step.start, &step.breakpoints(), quad)?;
        let target = (-(1.0 - (-step.height).exp()) * (-step.start).exp()).exp();
        let smoothed = laplace_poisson_limit(&g, step.start, &step.breakpoints())?;
        rep.metadata.insert("large_n_value".into(), v);
        rep.metadata.insert("poisson_target".into(), target);
        rep.metadata.insert("poisson_target_smoothed".into(), smoothed);
        rep.criteria.push(Criterion::exact("large-n distance to Poisson limit", (v - target).abs(), Bound::AtMost { value: cfg.params.tolerance.unwrap_or(0.05) }));
        series.push(SeriesPoint::new("laplace_exact", big as f64, v, v, v));
    }
    let mut out = Outcome::from(rep);
    out.series.extend(series);
    Ok(out)
}

fn run_kernel(cfg: &ExperimentConfig) -> HResult<Outcome> {
    let n = cfg.n as u64;
    let sector = cfg.params.sector.unwrap_or(AnnulusSector::full(0.0));
    let sector = AnnulusSector::new(sector.t, sector.a, sector.b)?;
    let tr = trace_k(n, &sector)?;
    let hs = hs_norm_k(n, &sector)?;
    let (prob, bound) = gap_prob_fredholm(n, &sector)?;
    let ln = (n as f64).ln();
    let target = (-sector.t).exp() * sector.width() / (2.0 * std::f64::consts::PI);
    let env = 10.0 * ln.ln().powi(2) / ln;
    let mut rep = empty_report("kernel", cfg, &["trace", "hs_norm", "gap_probability", "error_bound"]);
    rep.rows.push(Row { sample: 0, seed: stream_seed(cfg.seed, 0), values: vec![tr, hs, prob, bound] });
    rep.criteria.push(Criterion::exact("|Tr K / target - 1|", (tr / target - 1.0).abs(), Bound::AtMost { value: env }));
    let full = sector.a == 0.0 && (sector.b - 2.0 * std::f64::consts::PI).abs() < 1e-15;
    if full {
        let exact = radius_cdf_exact(n, radius_from_rescaled(n, sector.t)?);
        rep.metadata.insert("exact_radius_cdf".into(), exact);
        rep.criteria.push(Criterion::exact("|exp(-Tr K) - exact| - bound", (prob - exact).abs() - bound, Bound::AtMost { value: 0.05 }));
    }
    let ratio = k_gamma_ratio(n)?;
    rep.criteria.push(Criterion::exact("|K_gamma ratio - 1|", (ratio - 1.0).abs(), Bound::AtMost { value: 10.0 * ln.ln() / ln }));
    rep.metadata.insert("trace".into(), tr);
    rep.metadata.insert("trace_target".into(), target);
    rep.metadata.insert("hs_norm".into(), hs);
    rep.metadata.insert("gap_probability".into(), prob);
    rep.metadata.insert("error_bound".into(), bound);
    rep.metadata.insert("k_gamma_ratio".into(), ratio);
    let mut out = Outcome::from(rep);
    out.series.push(SeriesPoint::new("trace", sector.t, tr, target * (1.0 - env), target * (1.0 + env)));
    Ok(out)
}

fn run_girko(cfg: &ExperimentConfig) -> HResult<Outcome> {
    let n = cfg.n;
    let bump = cfg.params.bump.unwrap_or(Bump { center: (0.5, 0.0), radius: 0.3, amplitude: 1.0 });
    let t = cfg.params.cutoff.unwrap_or(1e3);
    let coarse = GirkoQuad { grid: cfg.params.grid.unwrap_or(101), eta_nodes: cfg.params.eta_nodes.unwrap_or(401), eta_min: 1e-6 };
    let fine = GirkoQuad { grid: 2 * coarse.grid - 1, ..coarse };
    // samples run one after another; the z-grid inside each is parallel
    let mut res = Vec::new();
    for i in 0..cfg.samples as u64 {
        let x = sample_iid_rng(n, cfg.law, &mut stream_rng(cfg.seed, i));
        let a = laws::girko_verify(x.as_ref(), &bump, t, &coarse)?;
        let b = laws::girko_verify(x.as_ref(), &bump, t, &fine)?;
        res.push((a, b));
    }
    let mut rep = empty_report("girko", cfg, &["grid", "sum_f", "formula", "relative"]);
    for (i, (a, b)) in res.iter().enumerate() {
        let seed = stream_seed(cfg.seed, i as u64);
        rep.rows.push(Row { sample: i as u64, seed, values: vec![coarse.grid as f64, a.sum_f, a.formula, a.relative] });
        rep.rows.push(Row { sample: i as u64, seed, values: vec![fine.grid as f64, b.sum_f, b.formula, b.relative] });
    }
    if res.is_empty() {
        return Err(HarnessError::Config("girko needs samples > 0".into()));
    }
    let rc = median(&res.iter().map(|r| r.0.relative).collect::<Vec<_>>())?;
    let rf = median(&res.iter().map(|r| r.1.relative).collect::<Vec<_>>())?;
    rep.criteria.push(Criterion::exact("median relative residual", rc, Bound::AtMost { value: cfg.params.tolerance.unwrap_or(5e-2) }));
    rep.criteria.push(Criterion::exact("refined / coarse residual", if rc > 0.0 { rf / rc } else { 0.0 }, Bound::AtMost { value: 0.5 }));
    rep.metadata.insert("median_relative_fine".into(), rf);
    let mut out = Outcome::from(rep);
    out.series.push(SeriesPoint::new("residual", coarse.grid as f64, rc, rc, rc));
    out.series.push(SeriesPoint::new("residual", fine.grid as f64, rf, rf, rf));
    Ok(out)
}

fn run_flow(cfg: &ExperimentConfig) -> HResult<Outcome> {
    let n = cfg.n;
    let z = cfg.z();
    let eta0 = cfg.params.eta.unwrap_or(0.1);
    let t_end = cfg.params.flow_time.unwrap_or(0.05);
    let dt = cfg.params.dt.unwrap_or(1e-3);
    let traj = flow_integrate(z, eta0, t_end, dt)?;
    let s0 = traj[0];
    let mut worst = 0.0f64;
    let mut series = Vec::new();
    for s in &traj {
        let t = s.t;
        let want = (-t).exp() * s0.eta / s0.rho - std::f64::consts::PI * (1.0 - (-t).exp());
        worst = worst
            .max((s.z - (-0.5 * t).exp() * z).norm())
            .max((s.m - (0.5 * t).exp() * s0.m).norm())
            .max((s.eta_over_rho() - want).abs());
        series.push(SeriesPoint::new("eta_over_rho", t, s.eta_over_rho(), want, want));
    }
    let mut rep = empty_report("flow", cfg, &["lambda1_dbm", "lambda1_matrix"]);
    rep.criteria.push(Criterion::exact("closed-form deviation", worst, Bound::AtMost { value: 1e-8 }));
    if cfg.samples > 0 {
        let x0 = sample_iid_rng(n, cfg.law, &mut stream_rng(cfg.seed ^ REFERENCE_TAG, u64::MAX));
        let start = singular_values_z(x0.as_ref(), z)?;
        let pairs = per_sample(cfg.samples, cfg.seed, |rng| {
            let dbm = dbm_evolve(DbmState::new(start.clone(), ChaCha8Rng::from_rng(rng)), t_end, dt)?.lambda[0];
            let g = sample_iid_rng(n, EntryLaw::ComplexGaussian, rng);
            let xt = faer::Mat::from_fn(n, n, |i, j| x0[(i, j)] + t_end.sqrt() * g[(i, j)]);
            Ok((dbm, singular_values_z(xt.as_ref(), z)?[0]))
        })?;
        for (i, &(a, b)) in pairs.iter().enumerate() {
            rep.rows.push(Row { sample: i as u64, seed: stream_seed(cfg.seed, i as u64), values: vec![a, b] });
        }
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let diff = crate::stats::mean(&a)? - crate::stats::mean(&b)?;
        let se = (crate::stats::std_error(&a)?.powi(2) + crate::stats::std_error(&b)?.powi(2)).sqrt();
        rep.metadata.insert("mean_difference".into(), diff);
        rep.criteria.push(Criterion::exact("|DBM - matrix| / SE", diff.abs() / se, Bound::AtMost { value: 3.0 }));
    }
    let mut out = Outcome::from(rep);
    out.series.extend(series);
    Ok(out)
}

fn dispatch(cfg: &ExperimentConfig) -> HResult<Outcome> {
    let (n, nf, z, law, s, seed) = (cfg.n, cfg.nf(), cfg.z(), cfg.law, cfg.samples, cfg.seed);
    let p = &cfg.params;
    Ok(match cfg.experiment {
        Experiment::Gumbel => run_gumbel(cfg)?,
        Experiment::Kostlan => run_kostlan(cfg)?,
        Experiment::Rightmost => run_rightmost(cfg)?,
        Experiment::Ppp => run_ppp(cfg)?,
        Experiment::Kernel => run_kernel(cfg)?,
        Experiment::Girko => run_girko(cfg)?,
        Experiment::Flow => run_flow(cfg)?,
        Experiment::Locallaw => {
            let etas = p.etas.clone().unwrap_or_else(|| vec![nf.powf(-0.5), 10.0]);
            laws::check_single_law(n, z, &etas, law, s, seed)?.into()
        }
        Experiment::Isotropic => laws::check_isotropic(n, z, p.eta.unwrap_or(nf.powf(-0.5)), &IsoVectors::ALL, law, s, seed)?.into(),
        Experiment::Rigidity => {
            let mut rep = laws::check_rigidity(n, z, p.imax.unwrap_or(20), law, s, seed)?;
            if let Some(ns) = &p.ns {
                let (meds, fit) = laws::rigidity_scale_fit(ns, z, law, s, seed)?;
                rep.criteria.push(Criterion::new(
                    "lambda_1 scale exponent",
                    fit.slope,
                    (fit.slope - fit.slope_se, fit.slope + fit.slope_se),
                    Bound::Within { lo: -0.85, hi: -0.65 },
                ));
                let mut out = Outcome::from(rep);
                for (m, v) in ns.iter().zip(meds) {
                    out.series.push(SeriesPoint::new("lambda1_deviation", *m as f64, v, v, v));
                }
                return Ok(out);
            }
            rep.into()
        }
        Experiment::Flaws => laws::check_f_laws(n, z, p.eta.unwrap_or(nf.powf(-0.75 + 0.1)), law, s, seed)?.into(),
        Experiment::Tworesolvent => {
            let d = nf.powf(-0.5);
            let ds = p.distances.clone().unwrap_or_else(|| vec![0.0, 2.0 * d, 8.0 * d, 32.0 * d]);
            laws::check_two_resolvent(n, z, &ds, p.eta.unwrap_or(d), law, s, seed)?.into()
        }
        Experiment::Overlap => {
            let ms = p.distances.clone().unwrap_or_else(|| vec![1.0, 4.0, 16.0]);
            let mut rep = laws::check_overlap_decay(n, z, &ms, law, s, seed)?;
            let mut extra = Vec::new();
            if let Some(ns) = &p.ns {
                let (meds, fit) = laws::overlap_n_scaling(ns, z, p.distance.unwrap_or(0.3), law, s, seed)?;
                rep.criteria.push(Criterion::exact("overlap n exponent", fit.slope, Bound::Within { lo: -0.7, hi: -0.3 }));
                rep.metadata.insert("overlap_n_exponent_se".into(), fit.slope_se);
                for (m, v) in ns.iter().zip(meds) {
                    extra.push(SeriesPoint::new("overlap_vs_n", *m as f64, v, v, v));
                }
            }
            let mut out = Outcome::from(rep);
            out.series.extend(extra);
            out
        }
        Experiment::Svtail => {
            let delta = p.delta.unwrap_or(2.0 / nf.sqrt());
            laws::check_sv_tail(n, delta, p.e.unwrap_or(nf.powf(-0.75)), law, s, seed)?.into()
        }
        Experiment::Independence => {
            let z2 = p.z2.map(|[a, b]| Complex64::new(a, b)).unwrap_or_else(|| laws::rotate_by_distance(z, 8.0 / nf.sqrt()));
            laws::check_sv_independence(n, z, z2, law, s, seed)?.into()
        }
        Experiment::Counting => laws::check_counting(n, z, p.e.unwrap_or(nf.powf(-0.75)), law, s, seed)?.into(),
    })
}

/// Runs the experiment on a pool of `threads` workers (0 means rayon's default).
pub fn run(cfg: &ExperimentConfig, threads: usize) -> HResult<ExperimentRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let out = pool.install(|| dispatch(cfg))?;
    let rep = out.report;
    Ok(ExperimentRecord {
        version: VERSION.into(),
        experiment: cfg.experiment,
        config: cfg.clone(),
        pass: rep.pass(),
        criteria: rep.criteria,
        metadata: rep.metadata,
        series: out.series,
        columns: rep.columns,
        row_count: rep.rows.len(),
        rows: rep.rows,
    })
}

/// 17 significant digits, exact round trip.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn rows_csv(rec: &ExperimentRecord) -> String {
    let mut s = String::from("sample,seed");
    for c in &rec.columns {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for r in &rec.rows {
        write!(s, "{},{}", r.sample, r.seed).expect("string write");
        for v in &r.values {
            s.push(',');
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

pub fn summary_json(rec: &ExperimentRecord) -> String {
    serde_json::to_string_pretty(rec).expect("record serializes") + "\n"
}

/// Paths of the files written for an experiment.
pub fn output_paths(dir: &Path, exp: Experiment) -> (PathBuf, PathBuf, PathBuf) {
    let stem = exp.name();
    (dir.join(format!("{stem}_rows.csv")), dir.join(format!("{stem}_summary.json")), dir.join(format!("{stem}_timing.json")))
}

/// Runs and writes rows, summary and the timing sidecar into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, threads: usize, dir: &Path) -> HResult<ExperimentRecord> {
    let start = Instant::now();
    let rec = run(cfg, threads)?;
    let secs = start.elapsed().as_secs_f64();
    fs::create_dir_all(dir)?;
    let (rows, summary, timing) = output_paths(dir, cfg.experiment);
    fs::write(rows, rows_csv(&rec))?;
    fs::write(summary, summary_json(&rec))?;
    let t = serde_json::json!({ "wall_clock_seconds": secs, "threads": threads, "version": VERSION });
    fs::write(timing, serde_json::to_string_pretty(&t).expect("json") + "\n")?;
    Ok(rec)
}

/// Writes one plot CSV (x, y, y_lo, y_hi) per series of a summary file; returns the paths.
pub fn plot_summary(summary: &Path, dir: &Path) -> HResult<Vec<PathBuf>> {
    let text = fs::read_to_string(summary)?;
    let rec: ExperimentRecord = serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", summary.display())))?;
    let mut by_series: BTreeMap<&str, Vec<&SeriesPoint>> = BTreeMap::new();
    for p in &rec.series {
        by_series.entry(p.series.as_str()).or_default().push(p);
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (name, pts) in by_series {
        let path = dir.join(format!("{}_{name}.csv", rec.experiment.name()));
        let mut s = String::from("x,y,y_lo,y_hi\n");
        for p in pts {
            writeln!(s, "{},{},{},{}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.y_lo), fmt_f64(p.y_hi)).expect("string write");
        }
        fs::write(&path, s)?;
        paths.push(path);
    }
    Ok(paths)
}
