use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rmtx_core::harness::{self, Experiment, ExperimentConfig, HarnessError};

/// Run a numerical experiment from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "rmtx", version)]
struct RunArgs {
    experiment: Experiment,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to RMTX_THREADS, then the config, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Turn an experiment summary into plot CSVs with columns x, y, y_lo, y_hi.
#[derive(Parser, Debug)]
#[command(name = "rmtx plot")]
struct PlotArgs {
    summary: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn threads_from_env() -> Result<Option<usize>, HarnessError> {
    match std::env::var("RMTX_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| HarnessError::Config(format!("RMTX_THREADS={v:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

fn run(args: RunArgs) -> Result<bool, HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.experiment != args.experiment {
        return Err(HarnessError::Config(format!(
            "config is for '{}' but '{}' was requested",
            cfg.experiment.name(),
            args.experiment.name()
        )));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let threads = match args.threads {
        Some(t) => t,
        None => threads_from_env()?.or(cfg.threads).unwrap_or(0),
    };
    let dir = args.out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let rec = harness::run_to_dir(&cfg, threads, &dir)?;
    for c in &rec.criteria {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.label, harness::fmt_f64(c.value));
    }
    Ok(rec.pass)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let result = if argv.get(1).map(String::as_str) == Some("plot") {
        let args = PlotArgs::parse_from(argv.iter().skip(1));
        harness::plot_summary(&args.summary, &args.out).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
            true
        })
    } else {
        run(RunArgs::parse_from(&argv))
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rmtx: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
