use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qmimo_cli::{parse_config, run_sweep, SweepOptions};

#[derive(Parser)]
#[command(name = "qmimo", version, about = "Beamforming and ADC bit allocation experiments for quantized MIMO links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every point of a TOML experiment config.
    Run {
        config: PathBuf,
        /// Directory for CSV/JSON output, overriding the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Channel realizations per point.
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the designed quantizers to quantizers.json.
        #[arg(long)]
        dump_quantizers: bool,
        /// Compare against exhaustive bit-allocation search on small instances.
        #[arg(long)]
        oracle: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run { config, output_dir, channels, seed, dump_quantizers, oracle } = Cli::parse().command;

    let mut cfg = match parse_config(&config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = output_dir {
        cfg.output.dir = dir;
    }
    if let Some(n) = channels {
        cfg.channels = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    match run_sweep(&cfg, SweepOptions { oracle, dump_quantizers }) {
        Ok(summary) => {
            log::info!("wrote {} and {}", summary.csv_path.display(), summary.json_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
