use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icevos::commands::{
    cmd_ablate, cmd_evaluate, cmd_inspect, cmd_segment, AblateArgs, Dumps, EvaluateArgs, InputDirs, SegmentArgs,
};
use icevos::Error;

#[derive(Parser)]
#[command(name = "icevos", version, about = "Unsupervised video foreground segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Directory of RGB frames (PNG or PPM), read in filename order.
    #[arg(long)]
    frames: PathBuf,
    /// Directory of Middlebury .flo files, one per frame.
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Directory with one NNNNN/ subdirectory of proposal masks per frame.
    #[arg(long)]
    proposals: Option<PathBuf>,
    /// Directory holding rgb/NNNNN.png and c/NNNNN.png saliency maps.
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// JSON run configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Inputs {
    fn dirs(&self) -> InputDirs {
        InputDirs {
            frames: self.frames.clone(),
            flow: self.flow.clone(),
            proposals: self.proposals.clone(),
            saliency: self.saliency.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment a frame sequence and write per-frame masks.
    Segment {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Use the separate-encoding baseline instead of ICE.
        #[arg(long)]
        se_mode: bool,
        #[arg(long)]
        dump_ice: bool,
        #[arg(long)]
        dump_trimap: bool,
        #[arg(long)]
        dump_superpixels: bool,
        #[arg(long)]
        dump_ids: bool,
        /// Write frames with the foreground outlined in green.
        #[arg(long)]
        overlay: bool,
    },
    /// Score masks against ground truth.
    Evaluate {
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report path (default: report.json next to the mask directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-frame errors as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run ICE and the separate-encoding baseline and score both.
    Ablate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        csv: bool,
    },
    /// Print the resolved configuration and strategies for some inputs.
    Inspect {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        se_mode: bool,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, Error> {
    match cli.command {
        Command::Segment {
            inputs,
            out,
            threads,
            se_mode,
            dump_ice,
            dump_trimap,
            dump_superpixels,
            dump_ids,
            overlay,
        } => {
            let args = SegmentArgs {
                inputs: inputs.dirs(),
                out,
                config: inputs.config.clone(),
                threads,
                se_mode,
                dumps: Dumps {
                    ice: dump_ice,
                    trimap: dump_trimap,
                    superpixels: dump_superpixels,
                    overlay,
                    ids: dump_ids,
                },
            };
            let (manifest, trace) = cmd_segment(&args)?;
            Ok(serde_json::json!({
                "frames": manifest.frames,
                "out": args.out,
                "episodes": manifest.episodes.len(),
                "initial_energy": trace.initial_energy,
                "final_energy": trace.final_energy,
            }))
        }
        Command::Evaluate { masks, gt, out, csv } => {
            let report = cmd_evaluate(&EvaluateArgs { masks, gt, out, csv })?;
            Ok(serde_json::to_value(report.per_video)?)
        }
        Command::Ablate {
            inputs,
            gt,
            out,
            threads,
            csv,
        } => {
            let report = cmd_ablate(&AblateArgs {
                inputs: inputs.dirs(),
                gt,
                out,
                config: inputs.config.clone(),
                threads,
                csv,
            })?;
            Ok(serde_json::json!({
                "ice": report.ice.per_video,
                "se": report.se.per_video,
            }))
        }
        Command::Inspect { inputs, se_mode } => {
            let info = cmd_inspect(&inputs.dirs(), inputs.config.as_deref(), se_mode)?;
            Ok(serde_json::to_value(info)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = serde_json::json!({"error": e.kind(), "message": e.to_string()});
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
