//! Command-line front end: parse a config, run the experiment, write the
//! report, map the outcome to an exit code.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use jumplab::experiment::{list_experiments, run, ExperimentConfig};
use jumplab::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "jumplab",
    version,
    about = "Run jump-process experiments from a TOML config"
)]
pub struct Args {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH", required_unless_present = "list")]
    pub config: Option<PathBuf>,

    /// Output directory; defaults to the config's `out`, then `out/<kind>`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the number of available cores.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,

    /// Print the experiment kinds and exit.
    #[arg(long)]
    pub list: bool,
}

fn config_error(err: &mut dyn Write, e: &Error) -> Option<i32> {
    match e {
        Error::Config { field, message } => {
            let _ = writeln!(err, "config error: field `{field}`: {message}");
            Some(EXIT_CONFIG)
        }
        Error::InvalidParameter { name, reason } => {
            let _ = writeln!(err, "config error: field `{name}`: {reason}");
            Some(EXIT_CONFIG)
        }
        _ => None,
    }
}

/// Runs with parsed arguments; returns the process exit code.
pub fn execute(args: &Args, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if args.list {
        let _ = write!(out, "{}", list_experiments());
        return EXIT_PASS;
    }
    if let Some(n) = args.threads {
        if n == 0 {
            let _ = writeln!(err, "config error: field `--threads`: must be at least 1");
            return EXIT_CONFIG;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            // already initialised in this process; keep the existing pool
            let _ = writeln!(err, "warning: {e}");
        }
    }
    let path = args.config.as_ref().expect("clap enforces --config");
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(
                err,
                "config error: field `--config`: cannot read {}: {e}",
                path.display()
            );
            return EXIT_CONFIG;
        }
    };
    let mut cfg = match ExperimentConfig::parse_unchecked(&text) {
        Ok(c) => c,
        Err(e) => return config_error(err, &e).unwrap_or(EXIT_CONFIG),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Err(e) = cfg.validate() {
        return config_error(err, &e).unwrap_or(EXIT_CONFIG);
    }
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.kind.name()));
    let outcome = match run(&cfg, &text, Some(&dir)) {
        Ok(o) => o,
        Err(e) => {
            if let Some(code) = config_error(err, &e) {
                return code;
            }
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAIL;
        }
    };
    for c in &outcome.report.checks {
        let _ = writeln!(out, "{}", c.summary_line());
    }
    if let Some(p) = &outcome.report_path {
        let _ = writeln!(out, "report: {}", p.display());
    }
    for a in &outcome.artifacts {
        let _ = writeln!(out, "artifact: {}", a.display());
    }
    if outcome.report.pass() {
        EXIT_PASS
    } else {
        let _ = writeln!(
            err,
            "failing checks: {}",
            outcome.report.failing().join(", ")
        );
        EXIT_FAIL
    }
}
