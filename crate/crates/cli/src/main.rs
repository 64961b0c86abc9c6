use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pirls::instances::{
    generate_knn_graph_instance, generate_random_matrix_instance, read_instance, write_instance, KnnGraphParams,
};
use pirls::sweep::{run_sweep_csv, threads_from_env, InstanceKind, SweepAxis, SweepSpec};
use pirls::{p_irls, verify_first_order, Instance, ProblemInstance, RngSeed, SolveResult, SolverConfig};
use serde::{Deserialize, Serialize};

const EXIT_USAGE: u8 = 1;
const EXIT_ITERATION_LIMIT: u8 = 2;
const EXIT_VERIFY_FAILED: u8 = 3;

/// ℓp-norm regression and p-Laplacian minimization by IRLS.
#[derive(Parser)]
#[command(name = "pirls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file.
    Solve(SolveArgs),
    /// Write a seeded random instance file.
    #[command(subcommand)]
    Generate(GenerateKind),
    /// Solve seeded instances along one parameter axis and write a CSV.
    Sweep(SweepArgs),
    /// Check first-order optimality of a solution file.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Override the norm exponent stored in the instance.
    #[arg(long)]
    p: Option<f64>,
    /// Relative accuracy ε.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Per-iteration CSV: iter,objective,i,alpha,halved.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Print the full result as JSON instead of a summary.
    #[arg(long)]
    json: bool,
    /// Write {"x","objective","iterations"} for `verify`.
    #[arg(long)]
    solution_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenerateKind {
    /// Dense matrix with entries uniform on [0, 1).
    Matrix {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        out: PathBuf,
    },
    /// k-nearest-neighbour graph on random points with a few labels.
    Graph {
        #[arg(long)]
        vertices: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        labels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Size,
    P,
    Epsilon,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Matrix,
    Graph,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: AxisArg,
    #[arg(long, value_enum, default_value = "matrix")]
    kind: KindArg,
    /// Comma-separated, strictly increasing axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 400)]
    rows: usize,
    #[arg(long, default_value_t = 300)]
    cols: usize,
    #[arg(long, default_value_t = 400)]
    vertices: usize,
    #[arg(long, default_value_t = 8.0)]
    p: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    solution: PathBuf,
    /// Tolerance on the relative projected gradient.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Tolerance on the relative constraint violation.
    #[arg(long, default_value_t = 1e-8)]
    feas_tol: f64,
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    x: Vec<f64>,
    objective: f64,
    iterations: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve(args) => solve(args),
        Command::Generate(kind) => generate(kind),
        Command::Sweep(args) => sweep(args),
        Command::Verify(args) => verify(args),
    }
}

fn load_problem(path: &Path, p: Option<f64>) -> Result<ProblemInstance> {
    let instance = read_instance(path).with_context(|| format!("reading {}", path.display()))?;
    let problem = instance.to_problem()?;
    Ok(match p {
        Some(p) => problem.with_p(p)?,
        None => problem,
    })
}

fn write_trace(path: &Path, result: &SolveResult) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(out, "iter,objective,i,alpha,halved")?;
    for t in &result.trace {
        writeln!(out, "{},{},{},{},{}", t.iteration, t.objective, t.i, t.alpha, u8::from(t.halved))?;
    }
    out.flush()?;
    Ok(())
}

fn solve(args: SolveArgs) -> Result<u8> {
    let problem = load_problem(&args.instance, args.p)?;
    let config = SolverConfig {
        max_iterations: args.max_iters,
        ..SolverConfig::with_epsilon(args.eps)
    };
    let result = p_irls(&problem, &config)?;
    if let Some(path) = &args.trace_out {
        write_trace(path, &result)?;
    }
    if let Some(path) = &args.solution_out {
        let file = SolutionFile {
            x: result.x.clone(),
            objective: result.objective,
            iterations: result.iterations,
        };
        std::fs::write(path, serde_json::to_string(&file)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if args.json {
        println!("{}", serde_json::to_string(&result)?);
    } else {
        println!("objective: {}", result.objective);
        println!("iterations: {}", result.iterations);
        println!("halvings: {}", result.halvings);
        println!("converged: {}", result.converged);
    }
    if !result.converged {
        eprintln!("iteration limit reached before convergence");
        return Ok(EXIT_ITERATION_LIMIT);
    }
    Ok(0)
}

fn generate(kind: GenerateKind) -> Result<u8> {
    let (instance, out) = match kind {
        GenerateKind::Matrix { rows, cols, p, seed, out } => (
            Instance::Matrix(generate_random_matrix_instance(rows, cols, p, RngSeed(seed))?),
            out,
        ),
        GenerateKind::Graph {
            vertices,
            p,
            dim,
            k,
            labels,
            seed,
            out,
        } => {
            let params = KnnGraphParams {
                n_vertices: vertices,
                dim,
                k,
                n_labels: labels,
                p,
            };
            (Instance::Graph(generate_knn_graph_instance(params, RngSeed(seed))?), out)
        }
    };
    write_instance(&instance, &out).with_context(|| format!("writing {}", out.display()))?;
    Ok(0)
}

fn sweep(args: SweepArgs) -> Result<u8> {
    let spec = SweepSpec {
        axis: match args.axis {
            AxisArg::Size => SweepAxis::Size,
            AxisArg::P => SweepAxis::P,
            AxisArg::Epsilon => SweepAxis::Epsilon,
        },
        kind: match args.kind {
            KindArg::Matrix => InstanceKind::Matrix,
            KindArg::Graph => InstanceKind::Graph,
        },
        values: args.values,
        rows: args.rows,
        cols: args.cols,
        vertices: args.vertices,
        p: args.p,
        epsilon: args.eps,
        repetitions: args.reps,
        seed_base: args.seed_base,
    };
    spec.validate()?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut out = BufWriter::new(file);
    let aggregates = run_sweep_csv(&spec, threads_from_env(), &mut out)?;
    for agg in aggregates {
        println!(
            "{}: iterations {:.2} ± {:.2}, {} ok, {} failed",
            agg.axis_value, agg.iterations.0, agg.iterations.1, agg.successes, agg.failures
        );
    }
    Ok(0)
}

fn verify(args: VerifyArgs) -> Result<u8> {
    let problem = load_problem(&args.instance, args.p)?;
    let text = std::fs::read_to_string(&args.solution)
        .with_context(|| format!("reading {}", args.solution.display()))?;
    let solution: SolutionFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.solution.display()))?;
    if solution.x.len() != problem.cols() {
        bail!(
            "solution has {} entries but the instance has {} unknowns",
            solution.x.len(),
            problem.cols()
        );
    }
    let cert = verify_first_order(&problem, &solution.x, args.tol, args.feas_tol);
    println!("projected_gradient_norm: {:e}", cert.projected_gradient_norm);
    println!("constraint_violation: {:e}", cert.constraint_violation);
    println!("objective: {}", cert.objective);
    println!("passed: {}", cert.passed);
    Ok(if cert.passed { 0 } else { EXIT_VERIFY_FAILED })
}
