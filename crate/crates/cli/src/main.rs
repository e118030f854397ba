use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmflou_cli::commands::{self, Axis};
use gmflou_cli::config::{ProcessKind, RunConfig};
use gmflou_cli::{CliError, EXIT_OK, EXIT_VERIFICATION_FAILED};

/// Simulation and moment verification for fractional Lévy processes, their
/// Ornstein-Uhlenbeck extensions and the Gamma-mixed limit process.
#[derive(Parser)]
#[command(name = "gmflou", version, about)]
struct Cli {
    /// TOML configuration file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo replicas.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Grid points per unit time.
    #[arg(long = "grid-n", global = true)]
    grid_n: Option<u32>,
    /// Time horizon T.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores); results are independent of this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sample paths and export them as CSV.
    Simulate {
        #[arg(long, value_enum, default_value = "z")]
        process: ProcessKind,
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        /// One or more mixing rates (one output file per value).
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        /// Aggregate size.
        #[arg(long)]
        m: Option<usize>,
        /// One or more memory parameters (one output file per value).
        #[arg(long = "d-list", value_delimiter = ',')]
        d_list: Option<Vec<f64>>,
        /// Also write a two-column (t, value) file per variant.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Run the closed-form verification battery and emit a JSON report.
    Verify {
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Coupled convergence studies (aggregation size, both alpha limits, mesh).
    Converge {
        /// Axes to run (default: all).
        #[arg(long, value_enum, value_delimiter = ',')]
        axis: Option<Vec<Axis>>,
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Characteristic function: analytic vs empirical table.
    Cf {
        /// Probe frequencies at the single probe time.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5")]
        thetas: Vec<f64>,
        /// Single probe time.
        #[arg(long, default_value_t = 1.0)]
        time: f64,
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Skip the two-time row.
        #[arg(long)]
        single_time_only: bool,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(replicas) = cli.replicas {
        cfg.replicas = replicas;
    }
    if let Some(n) = cli.grid_n {
        cfg.grid.n = n;
    }
    if let Some(t) = cli.horizon {
        cfg.grid.horizon_t = t;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(k) = cli.threads {
        cfg.threads = k;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = resolve_config(&cli)?;
    if cfg.threads > 0 {
        // results are replica-indexed and independently seeded, so the pool
        // size cannot change any output
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Simulate {
            process,
            d,
            h,
            alpha,
            lambda,
            m,
            d_list,
            gnuplot,
        } => {
            if let Some(d) = d {
                cfg.d = d;
            }
            if let Some(h) = h {
                cfg.h = h;
            }
            if let Some(alpha) = alpha {
                cfg.alpha = alpha;
            }
            if lambda.is_some() {
                cfg.lambda = lambda;
            }
            if let Some(m) = m {
                cfg.m = m;
            }
            if d_list.is_some() {
                cfg.d_list = d_list;
            }
            let files = commands::cmd_simulate(&cfg, process, gnuplot)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(EXIT_OK)
        }
        Command::Verify {
            d,
            h,
            alpha,
            lambda,
            m,
        } => {
            if let Some(d) = d {
                cfg.d = d;
            }
            if let Some(h) = h {
                cfg.h = h;
            }
            if let Some(alpha) = alpha {
                cfg.alpha = vec![alpha];
            }
            if lambda.is_some() {
                cfg.lambda = lambda;
            }
            if let Some(m) = m {
                cfg.m = m;
            }
            let (reports, pass) = commands::cmd_verify(&cfg)?;
            for r in &reports {
                println!("{}", r.line());
            }
            println!(
                "verify: {}/{} checks passed",
                reports.iter().filter(|r| r.pass).count(),
                reports.len()
            );
            Ok(if pass { EXIT_OK } else { EXIT_VERIFICATION_FAILED })
        }
        Command::Converge { axis, d, h, alpha } => {
            if let Some(d) = d {
                cfg.d = d;
            }
            if let Some(h) = h {
                cfg.h = h;
            }
            if let Some(alpha) = alpha {
                cfg.alpha = vec![alpha];
            }
            let axes = axis.unwrap_or_else(|| vec![Axis::M, Axis::AlphaUp, Axis::AlphaDown, Axis::N]);
            let (outputs, pass) = commands::cmd_converge(&cfg, &axes)?;
            for o in &outputs {
                println!(
                    "{:?}: residuals {:?} monotone={}",
                    o.axis, o.table.residuals, o.table.monotone
                );
            }
            Ok(if pass { EXIT_OK } else { EXIT_VERIFICATION_FAILED })
        }
        Command::Cf {
            thetas,
            time,
            d,
            h,
            alpha,
            single_time_only,
        } => {
            if let Some(d) = d {
                cfg.d = d;
            }
            if let Some(h) = h {
                cfg.h = h;
            }
            if let Some(alpha) = alpha {
                cfg.alpha = vec![alpha];
            }
            let multi = if single_time_only {
                None
            } else {
                Some((vec![0.3, 0.3], vec![0.5, 1.0]))
            };
            let (rows, pass) = commands::cmd_cf(&cfg, &thetas, time, multi)?;
            for r in &rows {
                println!(
                    "{} thetas={:?} times={:?} analytic=({:.6},{:.6}) empirical=({:.6},{:.6}) se=({:.1e},{:.1e})",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.thetas,
                    r.times,
                    r.analytic_re,
                    r.analytic_im,
                    r.empirical_re,
                    r.empirical_im,
                    r.stderr_re,
                    r.stderr_im
                );
            }
            Ok(if pass { EXIT_OK } else { EXIT_VERIFICATION_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
