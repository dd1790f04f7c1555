use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hazbias::cli::{self, exit, CliError, FitOptions};
use hazbias::model::ModifierDistribution;

#[derive(Parser)]
#[command(
    name = "hazbias",
    version,
    about = "Hazard-difference selection bias: closed forms, simulation and Aalen fits"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form B(t) and reference line g(t) = t E[U1].
    CurvesClosed {
        config: PathBuf,
        /// Output file; defaults to [output] path, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo B(t) for each copula setting.
    SimulateCopula {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Survival table per setting and world.
        #[arg(long)]
        survival: Option<PathBuf>,
        /// Exit with status 5 if any series was truncated.
        #[arg(long)]
        strict: bool,
    },
    /// Aalen additive hazard fit of a trial data file.
    Fit {
        data: PathBuf,
        /// Column with stratum labels.
        #[arg(long)]
        strata: Option<String>,
        /// Modifier law for the expected curve, e.g. `bhn:0.5,-0.1,0.5,0.4`.
        #[arg(long)]
        overlay: Option<ModifierDistribution>,
        #[arg(long, conflicts_with = "out_dir")]
        out: Option<PathBuf>,
        /// One `<stratum>.csv` per stratum in this directory.
        #[arg(long, requires = "strata")]
        out_dir: Option<PathBuf>,
        /// Exit with status 5 if estimation stopped at a singular design.
        #[arg(long)]
        strict: bool,
    },
    /// Simulated randomized trial in the fit input format.
    Generate { config: PathBuf, out: PathBuf },
}

fn warn_truncated<L: std::fmt::Display>(label: L, t: f64) {
    eprintln!("warning: {label} truncated at t = {t}");
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::CurvesClosed { config, out } => {
            let cfg = cli::load_config(&config)?;
            let table = cli::cmd_curves_closed(&cfg, &config)?;
            let path = out.or(cfg.output.path.clone());
            cli::emit(path.as_deref(), table.to_csv_string()?.as_bytes())
        }
        Command::SimulateCopula {
            config,
            out,
            survival,
            strict,
        } => {
            let cfg = cli::load_config(&config)?;
            let result = cli::cmd_simulate_copula(&cfg, &config)?;
            let path = out.or(cfg.output.path.clone());
            cli::emit(path.as_deref(), result.integrated.to_csv_string()?.as_bytes())?;
            if let Some(p) = survival {
                cli::emit(Some(&p), result.survival.to_csv_string()?.as_bytes())?;
            }
            for (label, t) in &result.truncations {
                warn_truncated(label, *t);
            }
            if strict && !result.truncations.is_empty() {
                return Err(CliError::Truncated(format!("{} series", result.truncations.len())));
            }
            Ok(())
        }
        Command::Fit {
            data,
            strata,
            overlay,
            out,
            out_dir,
            strict,
        } => {
            let output = cli::cmd_fit(&data, &FitOptions { strata, overlay })?;
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
                        path: dir.clone(),
                        source,
                    })?;
                    for (label, table) in &output.tables {
                        let name = format!("{}.csv", label.as_deref().unwrap_or("fit"));
                        cli::emit(Some(&dir.join(name)), table.to_csv_string()?.as_bytes())?;
                    }
                }
                None => cli::emit(out.as_deref(), output.combined()?.to_csv_string()?.as_bytes())?,
            }
            for (label, t) in &output.truncations {
                warn_truncated(label.as_deref().unwrap_or("fit"), *t);
            }
            if strict && !output.truncations.is_empty() {
                return Err(CliError::Truncated("singular design".into()));
            }
            Ok(())
        }
        Command::Generate { config, out } => {
            let cfg = cli::load_config(&config)?;
            let records = cli::cmd_generate(&cfg, &config)?;
            let mut buf = Vec::new();
            cli::write_trial_data(&mut buf, &records).map_err(|source| CliError::Data {
                path: out.clone(),
                source,
            })?;
            cli::emit(Some(Path::new(&out)), &buf)
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
