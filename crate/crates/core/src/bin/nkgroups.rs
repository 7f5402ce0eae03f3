use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nk_groups::experiment::{run_experiment, ExperimentSpec};
use nk_groups::landscape::{InterdependenceMatrix, Pattern};

/// Simulate adaptive groups on NK tasks over a factorial scenario grid.
#[derive(Debug, Parser)]
#[command(name = "nkgroups", version, args_conflicts_with_subcommands = true)]
struct Cli {
    /// Experiment config (flat `key = value` file). Defaults to the full grid.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, env = "NKGROUPS_OUT", default_value = "out")]
    out: PathBuf,

    /// Worker threads for replications.
    #[arg(long, env = "NKGROUPS_PARALLELISM")]
    parallelism: Option<usize>,

    /// Also write the per-period records.csv (large at full scale).
    #[arg(long)]
    emit_records: bool,

    /// Base seed, overrides the config file.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Tiny one-scenario grid; ignores --config.
    #[arg(long)]
    smoke: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print an interdependence matrix as an x/- grid.
    Matrix {
        pattern: String,
        k: usize,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let summary = serde_json::json!({ "status": "error", "kind": kind, "message": message });
    eprintln!("{summary}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(Command::Matrix { pattern, k, n, seed }) = &cli.command {
        let matrix = pattern
            .parse::<Pattern>()
            .and_then(|p| InterdependenceMatrix::build(p, *n, *k, *seed));
        return match matrix {
            Ok(m) => {
                print!("{}", m.render_grid());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e.kind(), &e.to_string()),
        };
    }

    let spec = if cli.smoke {
        Ok(ExperimentSpec::smoke())
    } else {
        match &cli.config {
            Some(path) => ExperimentSpec::load(path),
            None => Ok(ExperimentSpec::default()),
        }
    };
    let mut spec = match spec {
        Ok(s) => s,
        Err(e) => return fail(e.kind(), &e.to_string()),
    };
    if let Some(seed) = cli.seed {
        spec.base_seed = seed;
    }
    if let Some(p) = cli.parallelism {
        spec.parallelism = p.max(1);
    }
    spec.emit_records |= cli.emit_records;

    eprintln!(
        "running {} scenario(s) x {} replication(s) x {} period(s) -> {}",
        spec.scenario_count(),
        spec.replications,
        spec.horizon,
        cli.out.display()
    );
    match run_experiment(&spec, &cli.out) {
        Ok(report) => {
            let summary = serde_json::json!({
                "status": "ok",
                "scenarios": report.scenarios,
                "records": report.records,
                "cells": report.cells.len(),
                "wall_time_secs": report.wall_time_secs,
            });
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
