//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::commands::{self, *};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "scenesketch", version, about = "Scene sketch tools: formats, decoder pretraining, retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert between NDJSON sketches and stroke-5 files.
    Convert(ConvertArgs),
    /// RDP-simplify every stroke.
    Simplify(SimplifyArgs),
    /// Write one PGM raster per sketch.
    Rasterize(RasterizeArgs),
    /// Corpus statistics and the coarse-to-fine curve.
    Stats(StatsArgs),
    /// Generate a synthetic paired dataset.
    GenData(GenDataArgs),
    /// Train encoder and hierarchical decoder on raster-to-vector reconstruction.
    TrainPretext(TrainPretextArgs),
    /// Decode stroke-5 sequences from a pretext checkpoint.
    Sample(SampleArgs),
    /// Train the sketch-to-photo embedding with the triplet loss.
    TrainRetrieval(TrainRetrievalArgs),
    /// Recall@1 and recall@10 on a dataset.
    EvalRetrieval(EvalRetrievalArgs),
    /// Recall under early or late stroke masking.
    MaskEval(MaskEvalArgs),
}

pub fn dispatch(cmd: Command) -> Result<serde_json::Value> {
    match cmd {
        Command::Convert(a) => commands::convert(a),
        Command::Simplify(a) => commands::simplify(a),
        Command::Rasterize(a) => commands::rasterize_cmd(a),
        Command::Stats(a) => commands::stats(a),
        Command::GenData(a) => commands::gen_data(a),
        Command::TrainPretext(a) => commands::train_pretext_cmd(a),
        Command::Sample(a) => commands::sample(a),
        Command::TrainRetrieval(a) => commands::train_retrieval_cmd(a),
        Command::EvalRetrieval(a) => commands::eval_retrieval(a),
        Command::MaskEval(a) => commands::mask_eval(a),
    }
}

/// Runs the tool and returns the process exit code: 0 on success, 1 for
/// usage and validation errors, 2 for IO errors.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            // serde_json maps are sorted, so the line is stable.
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
