use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use coprime_fcm::spectrum::estimates_json;
use coprime_fcm::{make_scenario, run, Config, Error, Preset, RunOptions};
use serde_json::json;

#[derive(Parser)]
#[command(name = "coprime-fcm", version, about = "DOA estimation of coherent sources on coprime arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and estimate its DOAs.
    Run {
        /// Scenario configuration (JSON).
        #[arg(value_name = "CONFIG", required_unless_present = "config", conflicts_with = "config")]
        path: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for spectrum.csv, estimates.json and meta.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured grid size.
        #[arg(long)]
        grid_points: Option<usize>,
        /// fcm, fcm-smoothed or baseline.
        #[arg(long, default_value = "fcm-smoothed")]
        method: String,
        /// ab, ac, bc or abc.
        #[arg(long, default_value = "ab")]
        arrays: String,
        /// Sum the null-spectra of the selected pairs.
        #[arg(long)]
        combine: bool,
    },
    /// Write a preset scenario configuration.
    MakeScenario {
        /// sim1 or sim2.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::VanishingGroup { .. })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

struct RunArgs {
    config_path: PathBuf,
    out_dir: PathBuf,
    seed: Option<u64>,
    grid_points: Option<usize>,
    method: String,
    arrays: String,
    combine: bool,
}

/// Returns the exit code for a failed stage.
fn run_command(args: RunArgs) -> Result<(), (u8, Error)> {
    let cfg_err = |e: Error| (1u8, e);
    let mut config = Config::from_path(&args.config_path).map_err(|e| match e {
        Error::Io(msg) => (1, Error::Config(msg)),
        other => (1, other),
    })?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(n) = args.grid_points {
        config.estimation.grid_points = n;
    }
    let opts = RunOptions {
        method: args.method.parse().map_err(cfg_err)?,
        arrays: args.arrays.parse().map_err(cfg_err)?,
        combine: args.combine,
    };
    let prepared = config.prepare().map_err(cfg_err)?;
    for w in &prepared.warnings {
        eprintln!("warning: {w}");
    }

    let start = Instant::now();
    let out = run(&prepared, &opts).map_err(|e| (if is_config_error(&e) { 1 } else { 2 }, e))?;
    let wall = start.elapsed().as_secs_f64();

    let io = |e: Error| (2u8, e);
    fs::create_dir_all(&args.out_dir).map_err(|e| io(Error::Io(format!("{}: {e}", args.out_dir.display()))))?;
    let csv_path = args.out_dir.join("spectrum.csv");
    let file = File::create(&csv_path).map_err(|e| io(Error::Io(format!("{}: {e}", csv_path.display()))))?;
    out.spectrum.write_csv(BufWriter::new(file)).map_err(io)?;
    write_file(&args.out_dir.join("estimates.json"), &estimates_json(&out.estimates)).map_err(io)?;

    let meta = json!({
        "seed": config.run.seed,
        "config": config,
        "options": opts,
        "num_signals": prepared.scenario.num_signals(),
        "pairs": out.pairs,
        "noise_variance": out.noise_variance,
        "snr_definition": "per-sensor: total signal power at a sensor over complex noise variance",
        "warnings": prepared.warnings,
        "wall_time_s": wall,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let meta = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write_file(&args.out_dir.join("meta.json"), &meta).map_err(io)?;

    // A closed stdout (e.g. piped into head) is not a failure of the run.
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{} estimates written to {}", out.estimates.len(), args.out_dir.display());
    for e in &out.estimates {
        let _ = writeln!(stdout, "  {:+.4}π  {:.1} dB", e.theta.pi_units(), 10.0 * e.pseudo_height.log10());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            path,
            config,
            out_dir,
            seed,
            grid_points,
            method,
            arrays,
            combine,
        } => run_command(RunArgs {
            config_path: path.or(config).expect("clap requires a config"),
            out_dir,
            seed,
            grid_points,
            method,
            arrays,
            combine,
        }),
        Command::MakeScenario { preset, out, seed } => preset
            .parse::<Preset>()
            .map_err(|e| (1, e))
            .and_then(|p| write_file(&out, &make_scenario(p, seed).to_json()).map_err(|e| (2, e))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use coprime_fcm::{Method, PairSelection};

    #[test]
    fn selections_parse() {
        assert_eq!("abc".parse::<PairSelection>().unwrap(), PairSelection::Abc);
        assert_eq!("baseline".parse::<Method>().unwrap(), Method::Baseline);
        assert!("xyz".parse::<PairSelection>().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
