use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use boson_kinetics::config::{parse_config, parse_sweep, RunConfig};
use boson_kinetics::run::{self, SPECTRUM_CSV};
use boson_kinetics::verify::run_checks;
use boson_kinetics::Error;

#[derive(Parser)]
#[command(name = "boson-kinetics", version, about = "Boson scattering kinetics with a driven-cavity reservoir")]
struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides outputs.directory in the config).
    #[arg(long, global = true, env = "BOSON_KINETICS_OUT")]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate to the steady state and compare with the perturbative prediction.
    Steady,
    /// Write the distribution at each of evolution.snapshot_taus.
    Snapshots {
        /// Snapshot times, replacing evolution.snapshot_taus.
        #[arg(long = "tau", value_delimiter = ',')]
        taus: Vec<f64>,
    },
    /// Evaluate comparison metrics over a one- or two-parameter grid.
    Sweep {
        /// JSON sweep specification.
        #[arg(long)]
        sweep: PathBuf,
    },
    /// Dump S(omega) and the effective inverse temperature on a grid.
    Spectrum {
        #[arg(long, default_value_t = 4.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 801)]
        points: usize,
    },
    /// Run the internal consistency checks for the configured reservoir.
    Verify,
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Convergence { .. }
        | Error::Stiffness { .. }
        | Error::Conservation { .. }
        | Error::Positivity { .. } => EXIT_CONVERGENCE,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        _ => EXIT_FAILED,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

fn execute(cli: Cli) -> Result<bool, Error> {
    let mut cfg = load_config(cli.config.as_deref())?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.outputs.directory.clone());
    match cli.command {
        Command::Steady => {
            let report = run::run_single(&cfg, &out)?;
            let c = &report.comparison;
            println!("steady state written to {}", out.display());
            println!("N_drift      {:.3e}", report.n_drift);
            println!("residual     {:.3e}", report.steady_state.residual);
            println!("KL(p||p_def) {:.6e}", c.kl_vs_perturbative);
            println!("KL(p||p_BE)  {:.6e}", c.kl_vs_be);
            println!("R            {:.6e}", c.ratio_r);
            println!("delta_n      {:.6e}  (n_GS - n_high; n_high - n_GS = {:.6e})", c.delta_n, -c.delta_n);
            if !c.excluded_modes.is_empty() {
                println!("warning: {} modes with non-positive deformed occupation excluded from KL", c.excluded_modes.len());
            }
        }
        Command::Snapshots { taus } => {
            if !taus.is_empty() {
                cfg.evolution.snapshot_taus = taus;
                cfg.validate()?;
            }
            for path in run::run_snapshots(&cfg, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Sweep { sweep } => {
            let text = std::fs::read_to_string(&sweep)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", sweep.display())))?;
            let spec = parse_sweep(&text)?;
            let rows = match cli.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                    .install(|| run::run_sweep(&cfg, &spec, &out))?,
                None => run::run_sweep(&cfg, &spec, &out)?,
            };
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} cells written to {} ({failed} failed)", rows.len(), out.join(run::SWEEP_CSV).display());
        }
        Command::Spectrum { omega_max, points } => {
            std::fs::create_dir_all(&out)?;
            let path = out.join(SPECTRUM_CSV);
            run::write_spectrum_csv(&path, &cfg.reservoir.params(), omega_max, points)?;
            println!("{}", path.display());
        }
        Command::Verify => {
            let checks = run_checks(&cfg)?;
            for c in &checks {
                println!("{}", c.line());
            }
            return Ok(checks.iter().all(|c| c.passed != Some(false)));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
