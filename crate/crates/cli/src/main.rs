//! `sketchlattice` command-line tool.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sketchlattice", version, about = "Lattice sketch encoder/decoder: training, healing and synthesis")]
pub struct Cli {
    /// Configuration file (flat `key = value`); command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Lattice grid: number of horizontal (and vertical) lines [default: 32].
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Lattice point drop probability (training corruption for `train`).
    #[arg(long, global = true, value_name = "FLOAT")]
    pub pmask: Option<f64>,
    /// Model checkpoint to read (or to resume from with `train --resume`).
    #[arg(long, global = true, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Threads for data preprocessing.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert QuickDraw JSON-lines into a canonical dataset with splits and PGM rasters.
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Sketches per category held out for testing [default: 50].
        #[arg(long)]
        test_per_category: Option<usize>,
    },
    /// Train a model on the training split of the given datasets.
    Train {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Continue from the optimizer state stored in --checkpoint.
        #[arg(long)]
        resume: bool,
        /// Total number of updates, including resumed ones.
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Regenerate sketches from (optionally corrupted) raster inputs.
    Heal {
        /// PGM rasters.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Sample sketches from z ~ N(0, I), or from an encoded input raster.
    Generate {
        #[arg(long, value_name = "PGM")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Turn an edge-map raster into a vector sketch.
    Img2sketch {
        /// Binary edge map (PGM).
        input: PathBuf,
    },
    /// Healing sweep and retrieval metrics on the test split.
    Eval {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Corruption levels to evaluate.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.3, 0.5])]
        pmasks: Vec<f64>,
    },
    /// Compare analytic gradients with central finite differences on a small model.
    AuditGrad {
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
    },
    /// Render a vector sketch (steps JSON or QuickDraw record) to SVG, optionally PGM.
    Render {
        input: PathBuf,
        #[arg(long)]
        pgm: bool,
    },
    /// Report parameter counts for the configured model.
    Params,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
