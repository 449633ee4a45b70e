//! `complexmarket`: solve, sweep and simulate random complex-market economies.
//!
//! Exit status: 0 on success, 2 for invalid input, 3 when any point failed
//! numerically (data for the other points is still written), 1 for I/O errors.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::{CommandError, Failure};
use complexmarket::economy::ModelConfig;
use config::{parse_values, FileConfig, Format, ModeKind, RunConfig, SelectionKind, Values};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Clone)]
struct ValueList(Vec<f64>);

fn value_list(s: &str) -> Result<ValueList, String> {
    parse_values(s).map(ValueList)
}

#[derive(Parser, Debug)]
#[command(name = "complexmarket", version, about = "Equilibria of large random complex-market economies")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML or JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Gauss-Hermite order for saddle-point averages (≥ 16) [default: 64]
    #[arg(long, global = true)]
    quadrature_order: Option<usize>,
    /// Largest accepted residual of a reported solution [default: 1e-9]
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, env = "COMPLEXMARKET_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of states Ω for finite economies.
    #[arg(long, global = true)]
    omega: Option<usize>,
    #[arg(long, global = true)]
    crra_exponent: Option<f64>,
    /// Commodity prices are 1 ± price_spread.
    #[arg(long, global = true)]
    price_spread: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct Grid {
    /// Assets per state: value, comma list, or start:stop:step.
    #[arg(long, value_parser = value_list, allow_hyphen_values = true)]
    n: Option<ValueList>,
    /// Risk premium: value, comma list, or start:stop:step.
    #[arg(long, value_parser = value_list, allow_hyphen_values = true)]
    epsilon: Option<ValueList>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Saddle-point solution and consumption density at each (n, ε).
    Solve {
        #[command(flatten)]
        grid: Grid,
        #[arg(long)]
        density_points: Option<usize>,
    },
    /// Saddle-point curves over n, one file per ε.
    Sweep {
        #[command(flatten)]
        grid: Grid,
    },
    /// Critical n on the arbitrage boundary for each ε < 0.
    Boundary {
        #[arg(long, value_parser = value_list, allow_hyphen_values = true)]
        epsilon: Option<ValueList>,
    },
    /// Endogenous premium ε = γ(1 − φ)/2 along n, one file per bank risk aversion γ.
    Trajectory {
        #[arg(long, value_parser = value_list)]
        gamma: Option<ValueList>,
        /// Explicit ascending n grid; by default a grid is built from --dn and --phi-targets.
        #[arg(long, value_parser = value_list)]
        n: Option<ValueList>,
        #[arg(long)]
        dn: Option<f64>,
        #[arg(long, value_parser = value_list)]
        phi_targets: Option<ValueList>,
    },
    /// Monte Carlo ensemble of finite economies.
    Simulate {
        #[command(flatten)]
        grid: Grid,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        /// Also write the first sampled economy of each point as JSON.
        #[arg(long)]
        dump_economy: bool,
    },
    /// Interbank hedging ensemble.
    Hedge {
        #[command(flatten)]
        grid: Grid,
        #[arg(long)]
        samples: Option<usize>,
        /// Bank risk aversion.
        #[arg(long, value_parser = value_list)]
        gamma: Option<ValueList>,
        #[arg(long, value_enum)]
        selection: Option<SelectionKind>,
        /// Completeness of a random traded subset.
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<ModeKind>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Sweep { .. } => "sweep",
            Command::Boundary { .. } => "boundary",
            Command::Trajectory { .. } => "trajectory",
            Command::Simulate { .. } => "simulate",
            Command::Hedge { .. } => "hedge",
        }
    }
}

/// Flag, else file, else default.
fn pick_values(flag: Option<&ValueList>, file: Option<&Values>, default: &str) -> Result<Vec<f64>, String> {
    match (flag, file) {
        (Some(v), _) => Ok(v.0.clone()),
        (None, Some(v)) => v.resolve(),
        (None, None) if default.is_empty() => Ok(Vec::new()),
        (None, None) => parse_values(default),
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let g = &cli.global;
    let file = match &g.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let fm = &file.model;
    let (n_default, eps_default, gamma_default, samples_default) = match &cli.command {
        Command::Solve { .. } => ("0.5", "0.05", "0.1", 100),
        Command::Sweep { .. } => ("0.1:4.0:0.05", "0.01,0.05,0.1", "0.1", 100),
        Command::Boundary { .. } => ("1", "-0.2:-0.005:0.005", "0.1", 100),
        Command::Trajectory { .. } => ("", "0.05", "0.05,0.1", 100),
        Command::Simulate { .. } => ("0.5", "0.05", "0.1", 100),
        Command::Hedge { .. } => ("1.0", "0.05", "0.1", 50),
    };
    let none = Grid::default();
    let (grid, traj_n) = match &cli.command {
        Command::Solve { grid, .. } | Command::Sweep { grid } | Command::Simulate { grid, .. } | Command::Hedge { grid, .. } => {
            (grid, None)
        }
        Command::Boundary { .. } => (&none, None),
        Command::Trajectory { n, .. } => (&none, n.as_ref()),
    };
    let boundary_eps = match &cli.command {
        Command::Boundary { epsilon } => epsilon.as_ref(),
        _ => grid.epsilon.as_ref(),
    };
    let n_values = pick_values(grid.n.as_ref().or(traj_n), fm.n_ratio.as_ref(), n_default)?;
    let epsilon_values = pick_values(boundary_eps, fm.epsilon.as_ref(), eps_default)?;
    if epsilon_values.is_empty() {
        return Err("need at least one ε value".into());
    }
    if matches!(cli.command, Command::Trajectory { .. }) && n_values.windows(2).any(|w| w[1] < w[0]) {
        return Err("trajectory n values must be ascending".into());
    }
    let defaults = ModelConfig::default();
    let model = ModelConfig {
        n_ratio: n_values.first().copied().unwrap_or(defaults.n_ratio),
        epsilon: epsilon_values[0],
        omega_count: g.omega.or(fm.omega_count).unwrap_or(defaults.omega_count),
        crra_exponent: g.crra_exponent.or(fm.crra_exponent).unwrap_or(defaults.crra_exponent),
        price_spread: g.price_spread.or(fm.price_spread).unwrap_or(defaults.price_spread),
        seed: g.seed.or(fm.seed).unwrap_or(defaults.seed),
    };
    let (samples, bins, dp, gamma, dn, targets, selection, phi, mode) = match &cli.command {
        Command::Solve { density_points, .. } => (None, None, *density_points, None, None, None, None, None, None),
        Command::Trajectory { gamma, dn, phi_targets, .. } => {
            (None, None, None, gamma.as_ref(), *dn, phi_targets.as_ref(), None, None, None)
        }
        Command::Simulate { samples, bins, .. } => (*samples, *bins, None, None, None, None, None, None, None),
        Command::Hedge { samples, gamma, selection, phi, mode, .. } => {
            (*samples, None, None, gamma.as_ref(), None, None, *selection, *phi, *mode)
        }
        _ => (None, None, None, None, None, None, None, None, None),
    };
    let cfg = RunConfig {
        command: cli.command.name().to_string(),
        model,
        n_values,
        epsilon_values,
        output_dir: g.out.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from("out")),
        format: g.format.or(file.format).unwrap_or_default(),
        quadrature_order: g.quadrature_order.or(file.quadrature_order).unwrap_or(64),
        tolerance: g.tolerance.or(file.tolerance).unwrap_or(1e-9),
        threads: g.threads.unwrap_or(0),
        samples: samples.or(file.samples).unwrap_or(samples_default),
        bins: bins.or(file.bins).unwrap_or(100),
        gamma_values: pick_values(gamma, file.gamma.as_ref(), gamma_default)?,
        dn: dn.or(file.dn).unwrap_or(0.05),
        phi_targets: pick_values(targets, file.phi_targets.as_ref(), "0.9,0.925,0.95,0.97,0.98,0.99,0.995")?,
        selection: selection.or(file.selection).unwrap_or_default(),
        phi: phi.or(file.phi),
        mode: mode.or(file.mode).unwrap_or_default(),
        density_points: dp.or(file.density_points).unwrap_or(401),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": "usage", "message": message }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(m) => return usage_error(&m),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
        return usage_error(&format!("cannot start thread pool: {e}"));
    }
    let start = Instant::now();
    let mut w = output::Writer::new(&cfg.output_dir, cfg.format);
    let result = match &cli.command {
        Command::Solve { .. } => commands::solve(&cfg, &mut w),
        Command::Sweep { .. } => commands::sweep(&cfg, &mut w),
        Command::Boundary { .. } => commands::boundary(&cfg, &mut w),
        Command::Trajectory { .. } => commands::trajectory(&cfg, &mut w),
        Command::Simulate { dump_economy, .. } => commands::simulate(&cfg, &mut w, *dump_economy),
        Command::Hedge { .. } => commands::hedge(&cfg, &mut w),
    };
    let failures: Vec<Failure> = match result {
        Ok(f) => f,
        Err(CommandError::Usage(m)) => return usage_error(&m),
        Err(CommandError::Io(e)) => {
            eprintln!("{}", json!({ "error": "io", "message": e.to_string() }));
            return ExitCode::from(1);
        }
    };
    let status = if failures.is_empty() { "ok" } else { "numerical_failure" };
    if !failures.is_empty() {
        w.json("error.json", &json!({ "error": "numerical", "failures": failures }));
    }
    let mut files = w.names();
    files.push("metadata.json".into());
    let meta = output::metadata(&cfg, &files, start.elapsed().as_secs_f64(), status);
    w.json("metadata.json", &meta);
    if let Err(e) = w.flush() {
        eprintln!("{}", json!({ "error": "io", "message": e.to_string() }));
        return ExitCode::from(1);
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{}", json!({ "error": "numerical", "failures": failures.len(), "first": failures[0] }));
        ExitCode::from(3)
    }
}
