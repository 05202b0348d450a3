use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twistbench::config::Scenario;
use twistbench::units::{parse_quantity, Dim};
use twistbench::{decode_image, parse_config, run_scenario, BenchError};

#[derive(Parser)]
#[command(name = "twistbench", version, about = "OAM single-photon characterization bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Overrides [run] output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Decode the OAM charge of a tilted-lens image.
    Decode {
        image: PathBuf,
        /// Pixel pitch, e.g. `30um` or `3e-5`. Defaults to the image's sidecar.
        #[arg(long, value_parser = pitch)]
        pitch: Option<f64>,
    },
}

fn pitch(s: &str) -> Result<f64, String> {
    let p = parse_quantity(s, Dim::Length)?;
    if p > 0.0 {
        Ok(p)
    } else {
        Err("pitch must be positive".into())
    }
}

fn decode(image: &std::path::Path, pitch: Option<f64>) -> Result<(), BenchError> {
    let d = decode_image(image, pitch)?;
    println!("{}", d.summary());
    if d.analysis.is_confident() {
        Ok(())
    } else {
        Err(BenchError::LowConfidence(format!("confidence {:.2} below 0.5", d.analysis.confidence)))
    }
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Decode { image, pitch } => decode(&image, pitch),
        Command::Run { config, output_dir } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| BenchError::Usage(format!("{}: {e}", config.display())))?;
            let mut cfg = parse_config(&text)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if cfg.scenario == Scenario::Decode {
                // relative image paths are taken from the config's directory
                let base = config.parent().unwrap_or(std::path::Path::new("."));
                let image = base.join(cfg.decode_image.as_deref().expect("validated"));
                cfg.decode_image = Some(image);
            }
            let (manifest, stdout) = run_scenario(&cfg)?;
            if !stdout.is_empty() {
                println!("{stdout}");
            }
            eprintln!(
                "{}: {} files in {} ({:.1} s)",
                manifest.scenario,
                manifest.files.len(),
                cfg.output_dir.display(),
                manifest.wall_clock_seconds
            );
            if stdout.contains("low-confidence") {
                return Err(BenchError::LowConfidence("decoded image is ambiguous".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("TWISTBENCH_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
