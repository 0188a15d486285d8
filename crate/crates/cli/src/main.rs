use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sheetlab_cli::commands;
use sheetlab_cli::config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "sheetlab",
    version,
    about = "Brownian sheet kernel approximations and stochastic Poisson experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 3 when any verdict fails.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct GridFlags {
    #[arg(long)]
    d: Option<usize>,
    /// Grid cells per axis.
    #[arg(long)]
    cells: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample one driver and write its primitive on the grid.
    Simulate {
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run a convergence diagnostic (fdd, variance, moment, tightness).
    ConvergenceReport {
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        experiment: Option<String>,
        /// Comma-separated scales.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Replicates per scale.
        #[arg(long = "M")]
        replicates: Option<usize>,
    },
    /// Tabulate the truncated Green series, optionally against walk-on-spheres.
    GreenTable {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        walks: Option<usize>,
    },
    /// Solve the mild Poisson equation for one sampled driver.
    PoissonSolve {
        #[command(flatten)]
        grid: GridFlags,
        /// Nonlinearity: zero | constant:c | linear:l | tanh:s
        #[arg(long = "F")]
        nonlinearity: Option<String>,
        #[arg(long)]
        g: Option<f64>,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// contraction | relaxed
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Compare solution laws under kernel drivers with the sheet-driven solution.
    SpdeCompare {
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        family: Option<String>,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long = "M")]
        replicates: Option<usize>,
        #[arg(long = "F")]
        nonlinearity: Option<String>,
        #[arg(long)]
        g: Option<f64>,
        #[arg(long)]
        kmax: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::ConvergenceReport { .. } => "convergence-report",
            Command::GreenTable { .. } => "green-table",
            Command::PoissonSolve { .. } => "poisson-solve",
            Command::SpdeCompare { .. } => "spde-compare",
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_grid(cfg: &mut RunConfig, g: GridFlags) {
    set(&mut cfg.grid.d, g.d);
    set(&mut cfg.grid.cells, g.cells);
}

fn resolve(cli: Cli) -> Result<(String, RunConfig), ConfigError> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.common.seed);
    set(&mut cfg.output, cli.common.out);
    cfg.strict |= cli.common.strict;
    if cli.common.workers.is_some() {
        cfg.workers = cli.common.workers;
    }
    let name = cli.command.name().to_string();
    match cli.command {
        Command::Simulate { grid, family, n } => {
            apply_grid(&mut cfg, grid);
            set(&mut cfg.noise.family, family);
            set(&mut cfg.noise.n, n);
        }
        Command::ConvergenceReport {
            grid,
            family,
            experiment,
            n,
            replicates,
        } => {
            apply_grid(&mut cfg, grid);
            set(&mut cfg.diag.family, family);
            set(&mut cfg.diag.experiment, experiment);
            set(&mut cfg.diag.n_list, n);
            set(&mut cfg.diag.replicates, replicates);
        }
        Command::GreenTable { d, kmax, walks } => {
            set(&mut cfg.grid.d, d);
            if kmax.is_some() {
                cfg.green.kmax = kmax;
            }
            set(&mut cfg.green.walks, walks);
        }
        Command::PoissonSolve {
            grid,
            nonlinearity,
            g,
            family,
            n,
            method,
            kmax,
        } => {
            apply_grid(&mut cfg, grid);
            set(&mut cfg.solver.nonlinearity, nonlinearity);
            set(&mut cfg.solver.g, g);
            set(&mut cfg.noise.family, family);
            set(&mut cfg.noise.n, n);
            set(&mut cfg.solver.method, method);
            if kmax.is_some() {
                cfg.green.kmax = kmax;
            }
        }
        Command::SpdeCompare {
            grid,
            family,
            n,
            replicates,
            nonlinearity,
            g,
            kmax,
        } => {
            apply_grid(&mut cfg, grid);
            set(&mut cfg.study.family, family);
            set(&mut cfg.study.n_list, n);
            set(&mut cfg.study.replicates, replicates);
            set(&mut cfg.solver.nonlinearity, nonlinearity);
            set(&mut cfg.solver.g, g);
            if kmax.is_some() {
                cfg.green.kmax = kmax;
            }
        }
    }
    Ok((name, cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, cfg) = match resolve(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(w) = cfg.workers {
        if w == 0 {
            eprintln!("config error: field `workers`: must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
        {
            eprintln!("error: cannot start {w} workers: {e}");
            return ExitCode::from(4);
        }
    }
    match commands::run(&name, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}
