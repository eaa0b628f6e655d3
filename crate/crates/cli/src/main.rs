use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use antrack::commands::{cmd_evaluate, cmd_simulate, cmd_track, EvaluateArgs, SimulateArgs, TrackArgs};
use antrack::CliError;

/// Online multi-object tracking for ant-colony videos.
#[derive(Debug, Parser)]
#[command(name = "antrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Link detections into trajectories.
    Track {
        /// Detection file (frame,id,left,top,width,height,conf,-1,-1,-1).
        #[arg(long)]
        detections: PathBuf,
        /// Embedding file (frame,det_index,e0..e127). Without it the tracker
        /// falls back to motion gating and IoU.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// key=value tracker settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one setting, e.g. --set max_age=40.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Ignore embeddings even if given.
        #[arg(long)]
        no_appearance: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score trajectories against ground truth.
    Evaluate {
        /// Ground-truth file; repeat together with --hyp for several sequences.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, required = true)]
        hyp: Vec<PathBuf>,
        #[arg(long = "iou", default_value_t = antrack_core::metrics::DEFAULT_MATCH_IOU)]
        iou_threshold: f64,
        /// Weight per-sequence means by frame count.
        #[arg(long)]
        weight_by_frames: bool,
        /// Write key=value results here ("-" for stdout, replacing the text table).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic colony: gt.txt, det.txt and embeddings.txt.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Track { detections, embeddings, config, overrides, no_appearance, out } => {
            let summary = cmd_track(&TrackArgs { detections, embeddings, config, overrides, no_appearance, out })?;
            log::info!("tracked {} frames, wrote {} rows", summary.frames, summary.rows);
        }
        Command::Evaluate { gt, hyp, iou_threshold, weight_by_frames, report } => {
            let result = cmd_evaluate(&EvaluateArgs { gt, hyp, iou_threshold, weight_by_frames })?;
            match report {
                Some(path) if path.as_os_str() == "-" => print!("{}", result.key_values()),
                Some(path) => {
                    print!("{}", result.text());
                    std::fs::write(&path, result.key_values()).map_err(|source| CliError::Io { path, source })?;
                }
                None => print!("{}", result.text()),
            }
        }
        Command::Simulate { config, overrides, seed, out_dir } => {
            let summary = cmd_simulate(&SimulateArgs { config, overrides, seed, out_dir })?;
            log::info!(
                "simulated {} frames: {} ground-truth rows, {} detections",
                summary.frames,
                summary.gt_rows,
                summary.detection_rows
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
