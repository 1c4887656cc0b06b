use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use loopmem_cli::config::{RunConfig, CONFIG_ENV};
use loopmem_cli::pipeline::{self, Lifetime};
use loopmem_cli::Resolved;

#[derive(Parser)]
#[command(
    name = "loopmem",
    version,
    about = "Loop quantum memory simulation and tomography pipeline"
)]
struct Cli {
    /// TOML run configuration; defaults apply to anything left out
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Overrides experiment.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides output.dir
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to one per core)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one homodyne dataset per storage time and write a manifest
    Simulate,
    /// Reconstruct every dataset listed in a manifest
    Reconstruct {
        /// Defaults to <out>/manifest.tsv
        manifest: Option<PathBuf>,
    },
    /// Fit loss, lifetimes and the negativity curve to a summary table
    Fit {
        /// Defaults to <out>/summary.tsv
        summary: Option<PathBuf>,
    },
    /// Tabulate synchronization probability and rate against storage window
    Sync {
        /// Overrides source.max_trips
        #[arg(long)]
        max_trips: Option<u32>,
    },
    /// Fit and synchronization analysis in one summary
    Report {
        /// Defaults to <out>/summary.tsv
        summary: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<Resolved> {
    let mut raw = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        raw.experiment.seed = s;
    }
    if let Some(o) = &cli.out {
        raw.output.dir = o.clone();
    }
    raw.resolve().context("invalid configuration")
}

fn fmt_lifetime(t: &Lifetime) -> String {
    match t {
        Lifetime::Finite(s) => format!("{:.3} us", s * 1e6),
        Lifetime::Infinite => "infinite".into(),
    }
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let cfg = load_config(cli)?;
    let out = cfg.raw.output.dir.clone();
    let say = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    let default_in = |arg: &Option<PathBuf>, name: &str| -> PathBuf {
        arg.clone().unwrap_or_else(|| Path::new(&out).join(name))
    };

    match &cli.command {
        Command::Simulate => {
            let o = pipeline::simulate(&cfg, &out)?;
            say(format!(
                "wrote {} datasets and {}",
                o.datasets.len(),
                o.manifest.display()
            ));
            Ok(true)
        }
        Command::Reconstruct { manifest } => {
            let manifest = default_in(manifest, pipeline::MANIFEST_FILE);
            let o = pipeline::reconstruct(&cfg, &manifest, &out)?;
            for (path, e) in &o.failures {
                eprintln!("error: {}: {e:#}", path.display());
            }
            for n in &o.non_converged {
                eprintln!("warning: reconstruction at N = {n} did not converge");
            }
            say(format!(
                "reconstructed {} datasets ({} failed), summary in {}",
                o.reports.len(),
                o.failures.len(),
                o.summary.display()
            ));
            Ok(o.is_clean())
        }
        Command::Fit { summary } => {
            let summary = default_in(summary, pipeline::SUMMARY_FILE);
            let f = pipeline::fit(&cfg, &summary, &out)?;
            say(format!(
                "loss per trip {:.5} +- {:.5}, single-photon lifetime {}",
                f.loss.loss_per_trip,
                f.loss.std_error(),
                fmt_lifetime(&f.lifetime)
            ));
            match f.curve.zero_crossing {
                Some(z) => say(format!(
                    "negativity crosses zero at {:.2} +- {:.2} round trips",
                    z.round_trips, z.uncertainty
                )),
                None => say("negativity does not cross zero".into()),
            }
            Ok(true)
        }
        Command::Sync { max_trips } => {
            let n = max_trips.unwrap_or(cfg.raw.source.max_trips);
            pipeline::sync(&cfg, n, &out)?;
            let s = loopmem::sync_rate(&cfg.source, n);
            say(format!(
                "N = {n}: P = {:.4}, rate = {:.1} kHz, enhancement = {:.1}",
                s.probability,
                s.rate / 1e3,
                s.enhancement
            ));
            Ok(true)
        }
        Command::Report { summary } => {
            let summary = default_in(summary, pipeline::SUMMARY_FILE);
            let r = pipeline::report(&cfg, &summary, &out)?;
            if !cli.quiet {
                eprint!("{}", r.table.to_text());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
