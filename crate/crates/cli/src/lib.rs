//! Command-line front end for the dfsq simulator.
//!
//! Each subcommand reproduces one experiment: `params` the Hubbard coefficients,
//! `sweep-gradient` the superexchange couplings against B, `cluster` the echo protocol,
//! `otoc` the quench OTOCs, `benchmark` the full-model comparison and `site` the
//! single-site gradient, leakage and Raman calculations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use config::{parse_config, Format, RunConfig};
use error::{CliError, CliResult};
use output::Artifact;

#[derive(Debug, Parser)]
#[command(name = "dfsq", version, about = "Two-band Fermi-Hubbard DFS qubit simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration; the reference lattice is used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Hubbard coefficients from the lattice.
    Params,
    /// Superexchange couplings against the field gradient.
    SweepGradient,
    /// Cluster-state echo protocol.
    Cluster,
    /// OTOCs under a gradient quench.
    Otoc,
    /// Full Hubbard against spin-chain ⟨Σσx⟩.
    Benchmark,
    /// Single-site gradient rotation, band leakage and Raman transfer.
    Site,
}

impl Command {
    pub fn run(self, config: &RunConfig) -> CliResult<Vec<Artifact>> {
        match self {
            Self::Params => commands::cmd_params(config),
            Self::SweepGradient => commands::cmd_sweep_gradient(config),
            Self::Cluster => commands::cmd_cluster(config),
            Self::Otoc => commands::cmd_otoc(config),
            Self::Benchmark => commands::cmd_benchmark(config),
            Self::Site => commands::cmd_site(config),
        }
    }
}

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| CliError::Read {
                path: p.to_owned(),
                source,
            })?;
            parse_config(&text, &p.display().to_string())
        }
    }
}

/// Parse, run and write; returns the files written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(out) = &cli.out {
        config.output.dir = out.display().to_string();
    }
    if let Some(f) = cli.format {
        config.output.format = f;
    }
    let artifacts = cli.command.run(&config)?;
    let dir = PathBuf::from(&config.output.dir);
    fs::create_dir_all(&dir).map_err(|source| CliError::Write {
        path: dir.clone(),
        source,
    })?;
    let resolved = serde_json::to_value(&config).expect("configuration is serializable");
    let mut written = Vec::new();
    for a in &artifacts {
        written.extend(a.write(&dir, config.output.format, &resolved)?);
        for (k, v) in summary_lines(a) {
            println!("{}: {k} = {v}", a.stem);
        }
    }
    Ok(written)
}

/// Short terminal summary of an artifact.
fn summary_lines(a: &Artifact) -> Vec<(String, String)> {
    if let Some(serde_json::Value::Object(result)) = a.body.get("result") {
        if let Some(serde_json::Value::Object(summary)) = result.get("summary") {
            return summary.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
        }
    }
    if a.table.columns.first().map(String::as_str) == Some("quantity") {
        return a
            .table
            .rows
            .iter()
            .map(|row| {
                let values: Vec<String> = row[1..].iter().map(|c| c.render()).collect();
                (row[0].render(), values.join(" "))
            })
            .collect();
    }
    vec![("rows".into(), a.table.rows.len().to_string())]
}
