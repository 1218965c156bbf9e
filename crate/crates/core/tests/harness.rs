use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use rmtx_core::harness::*;
use rmtx_core::randmat::{sample_iid_rng, spectrum, stream_rng, stream_seed, EntryLaw};
use sha2::{Digest, Sha256};

const GUMBEL: &str = r#"{"experiment":"gumbel","n":64,"samples":100,"seed":17}"#;

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

fn cfg(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

fn rmtx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmtx"))
}

#[test]
fn gumbel_smoke_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run_to_dir(&cfg(GUMBEL), 1, dir.path()).unwrap();
    let (rows, summary, timing) = output_paths(dir.path(), Experiment::Gumbel);
    let csv = fs::read_to_string(rows).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 101);
    assert_eq!(lines[0], "sample,seed,modulus,pit,arg,upper_max,lower_max");
    let back: ExperimentRecord = serde_json::from_str(&fs::read_to_string(summary).unwrap()).unwrap();
    assert_eq!(back.row_count, 100);
    assert_eq!(back.criteria, rec.criteria);
    assert!(timing.exists());
}

#[test]
fn outputs_identical_across_thread_counts() {
    let c = cfg(r#"{"experiment":"locallaw","n":48,"samples":12,"seed":3,"params":{"etas":[0.3,10.0]}}"#);
    let (a, b, again) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_to_dir(&c, 1, a.path()).unwrap();
    run_to_dir(&c, 2, b.path()).unwrap();
    run_to_dir(&c, 1, again.path()).unwrap();
    let (ra, sa, _) = output_paths(a.path(), c.experiment);
    let (rb, sb, _) = output_paths(b.path(), c.experiment);
    let (rc, sc, _) = output_paths(again.path(), c.experiment);
    assert_eq!(digest(&ra), digest(&rb));
    assert_eq!(digest(&sa), digest(&sb));
    assert_eq!(digest(&ra), digest(&rc));
    assert_eq!(digest(&sa), digest(&sc));
}

#[test]
fn rows_replay_single_samples() {
    let c = cfg(GUMBEL);
    let rec = run(&c, 1).unwrap();
    for i in [0usize, 41, 99] {
        let row = &rec.rows[i];
        assert_eq!(row.sample, i as u64);
        assert_eq!(row.seed, stream_seed(c.seed, i as u64));
        let x = sample_iid_rng(c.n, EntryLaw::ComplexGaussian, &mut stream_rng(c.seed, i as u64));
        assert_eq!(spectrum(x.as_ref()).unwrap()[0].norm(), row.values[0]);
    }
}

#[test]
fn summary_recomputable_from_rows() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run_to_dir(&cfg(GUMBEL), 1, dir.path()).unwrap();
    let (rows, _, _) = output_paths(dir.path(), Experiment::Gumbel);
    let pit: Vec<f64> = fs::read_to_string(rows)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    let (_, p) = rmtx_core::stats::ks_one_sample(&pit, |u| u.clamp(0.0, 1.0)).unwrap();
    assert_eq!(p, rec.criteria[0].value);
}

#[test]
fn config_round_trip_with_parameters() {
    let c = cfg(r#"{"experiment":"ppp","n":512,"samples":10,"seed":9,"law":"complex_uniform","threads":3,
        "output":"out/dir","params":{"z":[1.0,0.5],"etas":[0.1,1.0],"step":{"height":1.0,"start":0.0,"width":0.02},
        "sector":{"t":0.5,"a":0.0,"b":3.0},"large_n":100000,"bump":{"center":[0.5,0.0],"radius":0.3,"amplitude":1.0}}}"#);
    assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(n in 1usize..5000, samples in 0usize..10_000, seed in any::<u64>(), eta in proptest::option::of(1e-6f64..10.0),
                         ns in proptest::option::of(proptest::collection::vec(3usize..100_000, 0..5))) {
        let mut c = cfg(r#"{"experiment":"rigidity","n":1}"#);
        c.n = n;
        c.samples = samples;
        c.seed = seed;
        c.params.eta = eta;
        c.params.ns = ns;
        prop_assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn float_format_is_exact(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

#[test]
fn unknown_keys_are_config_errors() {
    for bad in [
        r#"{"experiment":"gumbel","n":64,"sampels":10}"#,
        r#"{"experiment":"gumbel","n":64,"params":{"eta":0.1,"etaa":1}}"#,
        r#"{"experiment":"gumbel","n":64,"params":{"step":{"height":1,"start":0,"width":0.1,"x":1}}}"#,
        r#"{"experiment":"nonsense","n":64}"#,
    ] {
        let e = ExperimentConfig::from_json(bad).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{bad}");
    }
}

#[test]
fn rightmost_gumbel_comparison_refused() {
    let c = cfg(r#"{"experiment":"rightmost","n":512,"samples":1,"params":{"compare_gumbel":true}}"#);
    match run(&c, 1) {
        Err(HarnessError::Config(m)) => assert!(m.contains("non-positive scale"), "{m}"),
        other => panic!("expected refusal, got {other:?}"),
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    };
    let typo = write("typo.json", r#"{"experiment":"gumbel","n":64,"samples":5,"sed":1}"#);
    let st = rmtx().args(["gumbel", "--config"]).arg(&typo).output().unwrap().status;
    assert_eq!(st.code(), Some(2));

    let good = write("good.json", r#"{"experiment":"kernel","n":10000,"params":{"sector":{"t":0.0,"a":0.0,"b":6.283185307179586}}}"#);
    let st = rmtx().args(["gumbel", "--config"]).arg(&good).arg("--out").arg(dir.path()).output().unwrap().status;
    assert_eq!(st.code(), Some(2), "experiment must match the config");
    let st = rmtx().args(["kernel", "--config"]).arg(&good).arg("--out").arg(dir.path()).output().unwrap().status;
    assert_eq!(st.code(), Some(0));

    let strict = write("strict.json", r#"{"experiment":"gumbel","n":64,"params":{"ns":[1000,10000],"tolerance":1e-6}}"#);
    let st = rmtx().args(["gumbel", "--config"]).arg(&strict).arg("--out").arg(dir.path()).output().unwrap().status;
    assert_eq!(st.code(), Some(1));

    let missing = dir.path().join("absent.json");
    let st = rmtx().args(["gumbel", "--config"]).arg(&missing).output().unwrap().status;
    assert_eq!(st.code(), Some(2));
}

#[test]
fn cli_thread_env_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.json");
    fs::write(&conf, r#"{"experiment":"kostlan","n":16,"samples":40,"seed":1}"#).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let st = rmtx().args(["kostlan", "--seed", "5", "--config"]).arg(&conf).arg("--out").arg(&a).env("RMTX_THREADS", "1").output().unwrap().status;
    assert_eq!(st.code(), Some(0));
    let st = rmtx().args(["kostlan", "--seed", "5", "--threads", "2", "--config"]).arg(&conf).arg("--out").arg(&b).output().unwrap().status;
    assert_eq!(st.code(), Some(0));
    let (ra, _, _) = output_paths(&a, Experiment::Kostlan);
    let (rb, _, _) = output_paths(&b, Experiment::Kostlan);
    assert_eq!(digest(&ra), digest(&rb));
    let first = fs::read_to_string(&ra).unwrap();
    let seed0: u64 = first.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(seed0, stream_seed(5, 0));

    let st = rmtx().args(["kostlan", "--config"]).arg(&conf).arg("--out").arg(&a).env("RMTX_THREADS", "lots").output().unwrap().status;
    assert_eq!(st.code(), Some(2));
}

#[test]
fn plot_subcommand_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(r#"{"experiment":"gumbel","n":64,"params":{"ns":[1000,10000]}}"#);
    run_to_dir(&c, 1, dir.path()).unwrap();
    let (_, summary, _) = output_paths(dir.path(), Experiment::Gumbel);
    let out = dir.path().join("plots");
    let st = rmtx().arg("plot").arg(&summary).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(st.code(), Some(0));
    let csv = fs::read_to_string(out.join("gumbel_sup_distance.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,y,y_lo,y_hi");
    assert_eq!(lines.len(), 3);
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 1000.0);
    assert!(first[2] <= first[1] && first[1] <= first[3]);
}
