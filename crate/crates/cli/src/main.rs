//! `crt-forge`: seeded experiments on recursively grafted random trees.
//!
//! Each run writes `<subcommand>.csv`, `<subcommand>.conf` (replayable with
//! `--config`), any extra JSON artifacts and `<subcommand>.manifest.json`
//! into the output directory.

mod config;
mod experiments;
mod output;

use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use thiserror::Error;

use config::{resolve, Cli, Invocation};
use output::{write_file, Manifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<crt_forge_core::Error> for CliError {
    fn from(e: crt_forge_core::Error) -> Self {
        match e {
            crt_forge_core::Error::Parameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn execute(inv: &Invocation) -> Result<(), CliError> {
    let cfg = &inv.config;
    experiments::preflight(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(inv.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let name = cfg.subcommand.name();
    eprintln!("crt-forge {name}: seed {} reps {} config {}", cfg.seed, cfg.reps, cfg.hash());
    let report = pool.install(|| experiments::run(cfg))?;
    let wall = clock.elapsed().as_secs_f64();

    let mut files = Vec::new();
    let csv = format!("{name}.csv");
    write_file(&inv.out, &csv, &report.table.to_csv()?)?;
    files.push(csv);
    let conf = format!("{name}.conf");
    write_file(&inv.out, &conf, &cfg.to_file())?;
    files.push(conf);
    for (suffix, body) in &report.extra {
        let f = format!("{name}.{suffix}");
        write_file(&inv.out, &f, body)?;
        files.push(f);
    }
    let manifest = Manifest {
        tool: "crt-forge",
        version: env!("CARGO_PKG_VERSION"),
        core_version: crt_forge_core::VERSION,
        config: cfg,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        workers: pool.current_num_threads(),
        started_unix_secs: started,
        wall_time_secs: wall,
        files,
        summary: report.summary,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    let path = write_file(&inv.out, &format!("{name}.manifest.json"), &json)?;
    eprintln!(
        "crt-forge {name}: {} rows in {wall:.2}s, manifest {}",
        report.table.len(),
        path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(cli.command, cli.knobs).and_then(|inv| execute(&inv));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crt-forge: {e}");
            ExitCode::from(e.code())
        }
    }
}
