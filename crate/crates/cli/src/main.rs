use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qcr_core::config::RunConfig;
use qcr_core::sweep::{fit_manifest, fit_table, run_sweep, synthesize_traces, SweepKind};
use qcr_core::{selftest, Error};

#[derive(Parser)]
#[command(name = "qcr", version, about = "Quantum-circuit refrigerator coupling, Lamb shift and trace fitting")]
struct Cli {
    /// TOML configuration; omitted keys take reference-device defaults.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output.directory`.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Overrides `output.threads` (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `synthesis.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// γ_T,p, effective temperature and transition rates over the bias/power grid.
    SweepDamping,
    /// Dynamic, damping and static frequency shifts over the bias/power grid.
    SweepLamb,
    /// |Γ| over probe frequency for every bias/power point.
    Landscape,
    /// Effective mode temperature over the bias/power grid.
    SweepTemperature,
    /// Bath-induced pole shift over the Matsubara temperature grid.
    Matsubara,
    /// Synthetic reflection traces with a batch manifest.
    Synthesize,
    /// Fits every trace listed in a manifest.
    Fit {
        manifest: PathBuf,
        /// Result table; defaults to fits.csv next to the manifest.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Runs the analytic-oracle checks.
    Selftest,
    /// Prints the default configuration.
    PrintDefaultConfig,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 1,
        Error::Io(_) => 3,
        _ => 2,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.output {
        cfg.output.directory = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.output.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.synthesis.seed = Some(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let kind = match cli.command {
        Command::SweepDamping => Some(SweepKind::Damping),
        Command::SweepLamb => Some(SweepKind::Lamb),
        Command::Landscape => Some(SweepKind::Landscape),
        Command::SweepTemperature => Some(SweepKind::Temperature),
        Command::Matsubara => Some(SweepKind::Matsubara),
        _ => None,
    };
    if let Some(kind) = kind {
        let cfg = load(cli)?;
        let out = run_sweep(&cfg, kind)?;
        println!("{}: {} rows, {} failed", out.table.display(), out.rows, out.failed);
        println!("manifest: {}", out.manifest.display());
        return Ok(if out.rows > 0 && out.failed == out.rows { 2 } else { 0 });
    }
    match &cli.command {
        Command::Synthesize => {
            let cfg = load(cli)?;
            let out = synthesize_traces(&cfg)?;
            println!("{} traces, {} failed points", out.traces, out.failed);
            println!("manifest: {}", out.manifest.display());
            Ok(if out.traces == 0 { 2 } else { 0 })
        }
        Command::Fit { manifest, table } => {
            if let Some(t) = cli.threads {
                rayon_threads(t)?;
            }
            let results = fit_manifest(manifest)?;
            let t = fit_table(&results);
            let path = table
                .clone()
                .unwrap_or_else(|| manifest.parent().unwrap_or(std::path::Path::new(".")).join("fits.csv"));
            t.write(&path, b',')?;
            println!("{}: {} fits, {} failed", path.display(), t.rows.len(), t.failed_rows());
            Ok(if !t.rows.is_empty() && t.failed_rows() == t.rows.len() { 2 } else { 0 })
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { 2 })
        }
        Command::PrintDefaultConfig => {
            print!("{}", RunConfig::default().to_toml_string());
            Ok(0)
        }
        _ => unreachable!(),
    }
}

fn rayon_threads(n: usize) -> Result<(), Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
