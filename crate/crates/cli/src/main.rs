use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use stressgrid::config::{parse_config, DEFAULT_CORPUS_SEED};
use stressgrid::corpus::{ClassCatalog, Corpus};
use stressgrid::policy::PolicyKind;
use stressgrid::sweep::{run_sweep, threads_from_env, ExperimentSpec};
use stressgrid::{metrics, Error};

/// Runs gap × penetration × policy sweeps of the load-control simulator.
#[derive(Parser, Debug)]
#[command(name = "stressgrid", version)]
struct Args {
    /// Experiment config file.
    #[arg(long, required_unless_present = "write_corpus")]
    config: Option<PathBuf>,
    /// Output directory; overrides `experiment.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs per cell; overrides `experiment.runs`.
    #[arg(long)]
    runs: Option<usize>,
    /// Only this policy.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Only this gap, in percent.
    #[arg(long)]
    gap: Option<f64>,
    /// Only this penetration, in percent.
    #[arg(long)]
    ap: Option<f64>,
    /// Run a single cell: the first policy, gap and penetration left after
    /// overrides.
    #[arg(long)]
    single: bool,
    /// Check the config and exit without running.
    #[arg(long)]
    validate: bool,
    #[arg(long, short)]
    quiet: bool,
    /// Write the built-in appliance corpus to this directory and exit.
    #[arg(long, value_name = "DIR")]
    write_corpus: Option<PathBuf>,
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_io() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn apply_overrides(mut spec: ExperimentSpec, args: &Args) -> stressgrid::Result<ExperimentSpec> {
    if let Some(out) = &args.out {
        spec.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        spec.base.seed = seed;
    }
    if let Some(runs) = args.runs {
        spec.runs = runs;
    }
    if let Some(p) = args.policy {
        spec.policies = vec![p];
    }
    if let Some(g) = args.gap {
        spec.gaps = vec![g / 100.0];
    }
    if let Some(a) = args.ap {
        spec.aps = vec![a / 100.0];
    }
    if args.single {
        spec = spec.single(spec.policies[0], spec.gaps[0], spec.aps[0]);
    }
    spec.validate()?;
    Ok(spec)
}

fn run(args: &Args) -> stressgrid::Result<()> {
    if let Some(dir) = &args.write_corpus {
        Corpus::synthetic(DEFAULT_CORPUS_SEED).write(dir)?;
        if !args.quiet {
            println!("wrote corpus to {}", dir.display());
        }
        return Ok(());
    }
    let path = args.config.as_ref().expect("clap requires --config");
    let spec = apply_overrides(parse_config(path)?, args)?;
    if args.validate {
        if !args.quiet {
            println!(
                "config ok: {} policies × {} gaps × {} penetrations × {} runs = {} runs",
                spec.policies.len(),
                spec.gaps.len(),
                spec.aps.len(),
                spec.runs,
                spec.run_count()
            );
        }
        return Ok(());
    }

    let start = Instant::now();
    let catalog = ClassCatalog::fit(&spec.corpus.load()?, spec.bandwidth)?;
    let output = run_sweep(&spec, &catalog, threads_from_env())?;
    let cells = metrics::write_report(&output.logs, &output.references, &spec.out_dir)?;
    if !args.quiet {
        for c in &cells {
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), metrics::fmt_sig);
            println!(
                "{:<12} gap {:>4}% ap {:>4}%  L1 {:.3}  L5 {:.3}  sci {:>8}  ulw {:>10} W  utility {:.4}",
                c.policy.to_string(),
                c.gap_label,
                c.ap_label,
                c.fractions[0],
                c.fractions[4],
                fmt(c.sci()),
                fmt(c.metric_mean("ulw_total_w")),
                c.metric_mean("mean_utility").unwrap_or(0.0),
            );
        }
        println!(
            "{} runs written to {} in {:.1} s",
            output.logs.len(),
            spec.out_dir.display(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stressgrid: {e}");
            exit_code(&e)
        }
    }
}
