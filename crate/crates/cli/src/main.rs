//! `pushframe` — simulate and reconstruct pushframe captures.
//!
//! Exit codes: 0 success, 1 validation error, 2 IO/format error,
//! 3 internal error.

mod commands;
mod config;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use pushframe::error::Error;

#[derive(Parser)]
#[command(name = "pushframe", version, about = "Pushframe camera simulator and reconstructor")]
struct Cli {
    /// Worker threads for simulation and reconstruction (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mask pattern file
    Pattern {
        /// Hadamard order (power of two)
        #[arg(long)]
        n: usize,
        /// Scramble seed; omit for the identity column order
        #[arg(long)]
        seed: Option<u64>,
        /// Longest allowed same-value run per display row (default: order-dependent)
        #[arg(long)]
        max_run: Option<usize>,
        /// Display pixels per mask cell
        #[arg(long, default_value_t = pushframe::pattern::DEFAULT_SCALE)]
        scale: u32,
        /// Output pattern file
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a capture into a measurement stream
    Simulate {
        /// Experiment config file (defaults apply when omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override config values, e.g. --set optics.blur_sigma=0.5
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Pattern file from `pattern`
        #[arg(long)]
        pattern: PathBuf,
        /// Scene source (synthetic spec or image path); overrides the config
        #[arg(long)]
        scene: Option<String>,
        /// Output stream CSV
        #[arg(long)]
        out: PathBuf,
        /// Also write the rendered frame stack to this directory
        #[arg(long, value_name = "DIR")]
        keep_frames: Option<PathBuf>,
    },
    /// Measure white-calibration weights (and the white frame)
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        pattern: PathBuf,
        /// Channels to calibrate
        #[arg(long, default_value_t = 1)]
        channels: usize,
        /// Output calibration file
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an image from a measurement stream
    Reconstruct {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        /// Calibration file (flatfield and 2d modes)
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Kept-frames directory (2d mode)
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Correction path: naive | debiased | flatfield | 2d
        #[arg(long, default_value = "debiased")]
        mode: String,
        /// Use the fast transform route
        #[arg(long)]
        fast: bool,
        /// Undo a capture shear of this many rows per scene column
        #[arg(long)]
        shear: Option<f64>,
        /// Ground-truth scene for a quality report
        #[arg(long)]
        truth: Option<String>,
        /// Output image (16-bit netpbm + .meta sidecar)
        #[arg(long)]
        out: PathBuf,
        /// Also dump the exact floating-point image here
        #[arg(long)]
        raw: Option<PathBuf>,
        /// Write the quality report CSV here (needs --truth)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the pipeline across values of one config key
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Config key to vary, e.g. optics.step_error
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long)]
        values: String,
        /// Output report CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the bundled identity-vs-scrambled demonstration
    Demo {
        /// Hadamard order
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let code = match std::panic::catch_unwind(run) {
        Ok(code) => code,
        Err(_) => {
            eprintln!("internal error: unexpected panic");
            3
        }
    };
    std::process::exit(code);
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err)
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) =>
        {
            print!("{err}");
            return 0;
        }
        Err(err) => {
            eprint!("{err}");
            return 1;
        }
    };

    if let Some(threads) = cli.threads {
        // Ignore failure: the global pool can only be set once (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io(_) | Error::Format { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(command: Command) -> pushframe::Result<()> {
    match command {
        Command::Pattern { n, seed, max_run, scale, out } => {
            commands::cmd_pattern(n, seed, max_run, scale, &out)
        }
        Command::Simulate { config, overrides, pattern, scene, out, keep_frames } => {
            commands::cmd_simulate(
                config.as_deref(),
                &overrides,
                &pattern,
                scene.as_deref(),
                &out,
                keep_frames.as_deref(),
            )
        }
        Command::Calibrate { config, overrides, pattern, channels, out } => {
            commands::cmd_calibrate(config.as_deref(), &overrides, &pattern, channels, &out)
        }
        Command::Reconstruct {
            stream,
            pattern,
            calib,
            frames,
            mode,
            fast,
            shear,
            truth,
            out,
            raw,
            report,
        } => commands::cmd_reconstruct(&commands::ReconstructArgs {
            stream: &stream,
            pattern: &pattern,
            calib: calib.as_deref(),
            frames: frames.as_deref(),
            mode: &mode,
            fast,
            shear,
            truth: truth.as_deref(),
            out: &out,
            raw: raw.as_deref(),
            report: report.as_deref(),
        }),
        Command::Sweep { config, overrides, param, values, out } => {
            commands::cmd_sweep(config.as_deref(), &overrides, &param, &values, &out)
        }
        Command::Demo { n, out } => commands::cmd_demo(n, &out),
    }
}
