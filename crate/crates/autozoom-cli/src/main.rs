//! Command-line surface for the auto-zoom pipeline: synthetic clips,
//! tracking, zooming, toy training/evaluation, and FLOP benchmarks.
//!
//! Exit codes: 0 success, 1 I/O or environment failure, 2 validation or
//! domain error.

mod clip;
mod cmd_bench;
mod cmd_reason;
mod cmd_synth;
mod cmd_track;
mod cmd_zoom;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autozoom", version, about = "Auto-zoom target tracking pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detector on key frames and write a full track.
    Track(cmd_track::TrackArgs),
    /// Crop and scale a clip around its track.
    Zoom(cmd_zoom::ZoomArgs),
    /// Train or evaluate the temporal-reasoning model on the toy task.
    Reason(cmd_reason::ReasonArgs),
    /// Measure reasoning FLOPs across a (T, L) sweep.
    Bench(cmd_bench::BenchArgs),
    /// Generate a synthetic clip with ground truth and detections.
    Synth(cmd_synth::SynthArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Track(args) => cmd_track::run(args),
        Command::Zoom(args) => cmd_zoom::run(args),
        Command::Reason(args) => cmd_reason::run(args),
        Command::Bench(args) => cmd_bench::run(args),
        Command::Synth(args) => cmd_synth::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
