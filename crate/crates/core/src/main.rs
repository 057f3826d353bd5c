use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pmaflow::cli::{parse_config, run, write_failure, Command, RunConfig};
use pmaflow::counterexamples::{p6, BumpParams};

#[derive(Parser)]
#[command(name = "pmaflow", version, about = "Parabolic Monge-Ampere and Gauss curvature flow laboratory")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in problem (when no config file is given).
    #[arg(long)]
    problem: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    h: Option<f64>,
    #[arg(long = "T", allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// March a problem to its horizon and write diagnostics and snapshots.
    Solve(RunArgs),
    /// Solve and check the a priori estimates.
    Verify(RunArgs),
    /// Solve and evaluate the dual equation residual.
    Legendre(RunArgs),
    /// Convexity-loss experiments (`ce_1d`, `ce_radial`).
    Counterexample(RunArgs),
    /// L∞ errors and observed orders over a list of grid spacings.
    Convergence(RunArgs),
    /// Evaluate the bump closed forms at one point.
    Bump {
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long = "A", default_value_t = 1.0)]
        a: f64,
        #[arg(long = "B", default_value_t = 1.0)]
        b: f64,
    },
}

fn load(command: Command, args: &RunArgs) -> pmaflow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut cfg = parse_config(&text)?;
            cfg.command = command;
            cfg
        }
        None => {
            let problem = args.problem.clone().ok_or_else(|| pmaflow::Error::Range {
                key: "problem".into(),
                msg: "pass --config or --problem".into(),
            })?;
            RunConfig::minimal(command, &problem)
        }
    };
    if let Some(p) = &args.problem {
        cfg.problem = Some(p.clone());
        cfg.inline = None;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(h) = args.h {
        cfg.h = h;
    }
    if let Some(t) = args.horizon {
        cfg.horizon = Some(t);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set_threads() {
    if let Some(n) = std::env::var("PMAFLOW_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    set_threads();
    let (command, run_args) = match &args.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Legendre(a) => (Command::Legendre, a),
        Cmd::Counterexample(a) => (Command::Counterexample, a),
        Cmd::Convergence(a) => (Command::Convergence, a),
        Cmd::Bump { x, t, a, b } => {
            return match BumpParams::new(*a, *b) {
                Ok(w) => {
                    println!("w={:.16e}", w.w(*x, *t));
                    println!("w_t={:.16e}", w.w_t(*x, *t));
                    println!("w_x={:.16e}", w.w_x(*x, *t));
                    println!("w_xx={:.16e}", w.w_xx(*x, *t));
                    println!("rho={:.16e}", w.rho(*x, *t));
                    println!("p6={:.16e}", p6(*x, *b));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
    };
    let cfg = match load(command, run_args) {
        Ok(c) => c,
        Err(e) => {
            println!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more asserted checks failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Ok(p) = write_failure(&cfg, &e) {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::from(2)
        }
    }
}
