//! `crossfield`: resonances and wavefunction vortices of an impurity in
//! crossed magnetic and electric fields.

mod config;
mod output;
mod svg;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{LoadError, RunConfig};
use crate::output::{Manifest, OutputDir};
use crate::tasks::{Failure, Run};

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "CROSSFIELD_THREADS";

#[derive(Parser, Debug)]
#[command(name = "crossfield", version, about = "Impurity resonances and vortices in crossed fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run config, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; also read from CROSSFIELD_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Refine resonance roots from seeds.
    Resonance,
    /// Continue the resonance pole over a field range; optional stabilization search.
    Sweep,
    /// Wavefunction slice along a horizontal line.
    Wavefunction,
    /// Vortex table, circulation audit and vortex paths.
    Vortices,
    /// Principal phase map and its discontinuity lines.
    PhaseMap,
    /// Probability velocity samples.
    Quiver,
    /// All of the above with the configured parameters.
    ReproducePaper,
    /// Print the fully resolved default config.
    DefaultConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Resonance => "resonance",
            Command::Sweep => "sweep",
            Command::Wavefunction => "wavefunction",
            Command::Vortices => "vortices",
            Command::PhaseMap => "phase-map",
            Command::Quiver => "quiver",
            Command::ReproducePaper => "reproduce-paper",
            Command::DefaultConfig => "default-config",
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(n) = flag {
        return if n == 0 { Err(Failure::Config("--threads must be positive".into())) } else { Ok(Some(n)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.command == Command::DefaultConfig {
        print!("{}", RunConfig::default().to_toml());
        return Ok(());
    }
    let (cfg, _) = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            LoadError::Io(m) => Failure::Io(m),
            LoadError::Config(c) => Failure::Config(c.message),
        })?,
        None => (RunConfig::default(), String::new()),
    };
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let out = OutputDir::create(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let mut run = Run::new(&cfg, out, cli.verbose);
    match cli.command {
        Command::Resonance => run.resonance()?,
        Command::Sweep => {
            run.sweep()?;
        }
        Command::Wavefunction => run.wavefunction()?,
        Command::Vortices => {
            run.vortices()?;
        }
        Command::PhaseMap => run.phase_map()?,
        Command::Quiver => run.quiver()?,
        Command::ReproducePaper => run.reproduce()?,
        Command::DefaultConfig => unreachable!("handled above"),
    }
    let mut echo = cfg.clone();
    echo.output = Some(dir.clone());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().to_string(),
        threads: rayon::current_num_threads(),
        config: serde_json::to_value(&echo).expect("config serializes"),
        config_toml: echo.to_toml(),
        tasks: std::mem::take(&mut run.tasks),
        baselines: std::mem::take(&mut run.baselines),
        files: Vec::new(),
    };
    for b in &manifest.baselines {
        if cli.verbose || !b.pass {
            eprintln!(
                "[crossfield] {} {}: computed {} reference {} (tol {})",
                if b.pass { "match" } else { "MISMATCH" },
                b.quantity,
                b.computed,
                b.reference,
                b.tolerance
            );
        }
    }
    let path = run.out.finish(manifest)?;
    if cli.verbose {
        eprintln!("[crossfield] wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("crossfield: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
