use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use moqn_core::problems::PROBLEM_IDS;
use moqn_core::{check_gradients, descriptors, get_problem, Method};
use moqn_bench::{default_jobs, emit_front, run_experiment, sidecar_path, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "bench", about = "Multiobjective quasi-Newton benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every method on every problem and write per-run and aggregate files.
    Run(RunArgs),
    /// Write the converged final objective vectors of one problem/method pair.
    Front(FrontArgs),
    /// Print the problem registry.
    ListProblems {
        /// Emit JSON instead of a text table.
        #[arg(long)]
        json: bool,
    },
    /// Compare analytic gradients against finite differences.
    CheckGradients {
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 200)]
    starts: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Comma-separated problem ids (default: all).
    #[arg(long, value_delimiter = ',')]
    problems: Vec<String>,
    /// Comma-separated methods: mfqnmo, mqnmo, qnmo, sd (default: all).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FrontArgs {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output CSV (default: front_<problem>_<method>.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn base_config(args: &SolverArgs) -> ExperimentConfig {
    ExperimentConfig {
        starts: args.starts,
        seed: args.seed,
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        jobs: args.jobs.unwrap_or_else(default_jobs),
        ..ExperimentConfig::default()
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = base_config(&args.solver);
    if !args.problems.is_empty() {
        config.problems = args.problems;
    }
    if !args.methods.is_empty() {
        config.methods = args.methods;
    }
    config.out_dir = args.out;
    let rows = run_experiment(&config).context("benchmark run failed")?;
    println!("{:<8} {:<7} {:>10} {:>12} {:>10} {:>5}", "problem", "method", "mean_iter", "mean_time_ms", "mean_feval", "nf");
    for r in &rows {
        println!(
            "{:<8} {:<7} {:>10.2} {:>12.3} {:>10.2} {:>5}",
            r.problem, r.method, r.mean_iter, r.mean_time_ms, r.mean_feval, r.nf
        );
    }
    println!("wrote {}", config.out_dir.display());
    Ok(())
}

fn front(args: FrontArgs) -> Result<()> {
    let config = base_config(&args.solver);
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("front_{}_{}.csv", args.problem, args.method)));
    let s = emit_front(&args.problem, args.method, config.starts, config.seed, &config, &out)
        .context("front generation failed")?;
    println!(
        "{} {}: {} converged, {} failed; wrote {} and {}",
        s.problem,
        s.method,
        s.converged,
        s.failures,
        out.display(),
        sidecar_path(&out).display()
    );
    Ok(())
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn list_problems(json: bool) -> Result<()> {
    let all = descriptors();
    if json {
        return emit(&(serde_json::to_string_pretty(&all)? + "\n"));
    }
    let mut text = format!("{:<8} {:>3} {:>2} {:<6} {:<12} {:<22} note\n", "id", "n", "m", "convex", "source", "box");
    for d in &all {
        let uniform = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
        let region = if uniform(&d.box_low) && uniform(&d.box_high) {
            format!("[{}, {}]^{}", d.box_low[0], d.box_high[0], d.n)
        } else {
            format!("{:?} x {:?}", d.box_low, d.box_high)
        };
        let _ = writeln!(
            text,
            "{:<8} {:>3} {:>2} {:<6} {:<12} {:<22} {}",
            d.id,
            d.n,
            d.m,
            if d.convex { "yes" } else { "no" },
            d.source,
            region,
            d.note.unwrap_or("")
        );
    }
    emit(&text)
}

fn gradients(samples: usize, seed: u64) -> Result<bool> {
    let mut ok = true;
    for id in PROBLEM_IDS {
        let p = get_problem(id)?;
        match check_gradients(&p, samples, seed) {
            Ok(r) => println!("{id:<8} ok   max relative error {:.3e}", r.worst()),
            Err(e) => {
                ok = false;
                println!("{id:<8} FAIL {e}");
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Front(a) => front(a),
        Command::ListProblems { json } => list_problems(json),
        Command::CheckGradients { samples, seed } => gradients(samples, seed).and_then(|ok| {
            if ok {
                Ok(())
            } else {
                bail!("gradient check failed")
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
