//! Command-line orchestration for groklab: run directories, training runs,
//! phase-boundary scans, energy-ascent surveys, verification suites and
//! Cayley tables.
//!
//! Exit codes: 0 success, 1 gating failure or runtime error, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

pub mod ascend;
pub mod config;
pub mod group;
pub mod output;
pub mod scan;
pub mod suites;
pub mod train;

use config::{ConfigErrors, ExperimentConfig, FULL_GRID_MS, FULL_GRID_SEEDS};

#[derive(Debug, Parser)]
#[command(name = "groklab", version, about = "Grokking experiments on finite-group arithmetic")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config, or the manifest.json of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one field, e.g. `--set model.width=512` or `--set group="cyclic 31"`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and write a run directory.
    Train(ConfigArgs),
    /// Train every (M, p, seed) cell and extract the phase boundary.
    Scan {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        workers: Option<usize>,
        /// M up to 127 with 20 seeds.
        #[arg(long)]
        full_grid: bool,
    },
    /// Random-start energy ascents with classification of the maxima.
    Ascend(ConfigArgs),
    /// Run a verification suite, or `all`.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Emit the canonical Cayley table of a recipe (`cyclic 7`, `dihedral 4`,
    /// `product 2,3`) or of a table file.
    Group {
        recipe: Vec<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(c: &ConfigArgs) -> Result<ExperimentConfig> {
    ExperimentConfig::load(c.config.as_deref(), &c.sets)
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.downcast_ref::<UsageError>().is_some()
        || e.chain().any(|c| c.is::<ConfigErrors>() || c.is::<suites::UnknownSuite>() || c.is::<serde_json::Error>())
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(c) => {
            let out = train::cmd_train(load(&c)?)?;
            let s = &out.summary;
            println!("{}", out.dir.display());
            eprintln!(
                "train acc {:.4}, test acc {:.4}, delay {} ({} epochs)",
                s.final_train_acc, s.final_test_acc, s.grokking_delay, s.epochs_run
            );
            Ok(0)
        }
        Command::Scan { cfg, workers, full_grid } => {
            let mut c = load(&cfg)?;
            if workers.is_some() {
                c.scan.workers = workers;
            }
            if full_grid {
                c.scan.ms = FULL_GRID_MS.to_vec();
                c.scan.seeds = (0..FULL_GRID_SEEDS).collect();
            }
            let out = scan::cmd_scan(c)?;
            println!("{}", out.dir.display());
            eprintln!("{}", serde_json::to_string_pretty(&out.fit["trend"])?);
            Ok(0)
        }
        Command::Ascend(c) => {
            let out = ascend::cmd_ascend(load(&c)?)?;
            println!("{}", out.dir.display());
            eprintln!("{}/{} converged, labels {:?}", out.summary.converged, out.summary.seeds, out.summary.histogram);
            Ok(0)
        }
        Command::Verify { suite, seed, report } => {
            let agg = suites::run(&suite, seed)?;
            for s in &agg.suites {
                if let Some(e) = &s.error {
                    eprintln!("FAIL {} (error: {e})", s.suite);
                }
                for r in &s.reports {
                    eprintln!("{}{}", r.summary(), if s.gating { "" } else { "\n  (not gating)" });
                }
            }
            let text = serde_json::to_string_pretty(&agg)?;
            match report {
                Some(p) => output::write_json(&p, &agg)?,
                None => println!("{text}"),
            }
            Ok(if agg.pass { 0 } else { 1 })
        }
        Command::Group { recipe, file, out } => {
            let joined = recipe.join(" ");
            let (g, rep) = group::cmd_group((!joined.is_empty()).then_some(joined.as_str()), file.as_deref())
                .map_err(|e| e.context(UsageError))?;
            let table = g.to_cayley_string();
            match out {
                Some(p) => std::fs::write(&p, table)?,
                None => std::io::stdout().write_all(table.as_bytes())?,
            }
            eprintln!("{}", rep.text());
            Ok(0)
        }
    }
}

/// Marks a failure as bad input rather than a failed run.
#[derive(Debug)]
struct UsageError;

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "bad input")
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage(&e) {
                2
            } else {
                1
            }
        }
    }
}
