use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ctrlscore::centrality::{rank_report_with_traces, ReportRun};
use ctrlscore::netsys::uniqueness_certificate;
use ctrlscore::optimizer::{solve, CONVERGENCE_HEADER};
use ctrlscore::oracle::{verification_suite, Check};
use ctrlscore::{
    BasisMode, BasisOptions, CentralityReport, GramianBasis, Horizon, Measure, NetworkSystem, ObjectiveKind,
    OptimizerConfig, ScoreConfig, StopReason,
};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_MAX_ITERS: u8 = 2;
const EXIT_UNCERTIFIED: u8 = 3;

#[derive(Parser)]
#[command(name = "ctrlscore", version, about = "Controllability scores (VCS/AECS) for linear network systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute VCS and/or AECS
    Score(ScoreArgs),
    /// Compute the VCE/ACE baseline centralities
    Baselines(BaselineArgs),
    /// Print the uniqueness certificate for a system and horizon
    Check(CheckArgs),
    /// Time VCS on seeded random stable systems
    Bench(BenchArgs),
    /// Cross-check the analytic paths against brute-force oracles
    OracleVerify(OracleArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Edge list (`src dst weight`, 1-indexed) or matrix JSON (`.json`)
    #[arg(long, conflicts_with = "random")]
    input: Option<PathBuf>,
    /// Use a seeded random network on this many nodes instead of --input
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    /// Diagonal of the random network (default −n, which makes it stable)
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat the edge list as an undirected graph and use A = −L
    #[arg(long)]
    laplacian: bool,
    /// Mirror every edge of a plain edge list
    #[arg(long)]
    undirected: bool,
    /// `inf` or a positive horizon T
    #[arg(long, default_value = "inf")]
    horizon: String,
    /// Score observability (run on Aᵀ)
    #[arg(long)]
    dual: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Vcs,
    Aecs,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Explicit,
    Adjoint,
}

impl From<ModeArg> for BasisMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Auto => BasisMode::Auto,
            ModeArg::Explicit => BasisMode::Explicit,
            ModeArg::Adjoint => BasisMode::Adjoint,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Report file (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    out: OutputArgs,
    #[arg(long, value_enum, default_value_t = Objective::Vcs)]
    objective: Objective,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha0: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Start each line search from the previous step size
    #[arg(long)]
    warm_start: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    basis_mode: ModeArg,
    /// Per-iteration JSON lines
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Convergence curve CSV (objective value per iteration)
    #[arg(long)]
    convergence: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    out: OutputArgs,
    /// Comma-separated subset of vce,ace
    #[arg(long, default_value = "vce,ace")]
    measures: String,
    #[arg(long, default_value_t = 1e-10)]
    rank_tol: f64,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated system sizes
    #[arg(long, default_value = "200,400,1000", value_delimiter = ',', value_parser = parse_size)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Adjoint)]
    basis_mode: ModeArg,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// CSV destination (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Override every per-check tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated subset of gradient,quadrature,projection,grid
    #[arg(long)]
    checks: Option<String>,
}

fn parse_size(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("sizes must be positive".to_string()),
        Ok(n) => Ok(n),
        Err(e) => Err(format!("bad size '{s}': {e}")),
    }
}

fn load_system(args: &InputArgs) -> Result<NetworkSystem<f64>> {
    if let Some(n) = args.random {
        let shift = args.shift.unwrap_or(-(n as f64));
        return Ok(NetworkSystem::generate_random_network(n, args.density, args.seed, shift)?);
    }
    let Some(path) = &args.input else {
        bail!("one of --input or --random is required");
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let sys = if args.laplacian {
        if is_json {
            bail!("--laplacian expects an edge list");
        }
        NetworkSystem::load_laplacian_edge_list(&text)
    } else if is_json {
        NetworkSystem::load_matrix_json(&text)
    } else {
        NetworkSystem::load_edge_list(&text, !args.undirected)
    };
    sys.with_context(|| format!("cannot load {}", path.display()))
}

fn parse_horizon(s: &str) -> Result<Horizon<f64>> {
    let h: Horizon<f64> = s.parse().with_context(|| format!("bad horizon '{s}'"))?;
    h.validate()?;
    Ok(h)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_report(report: &CentralityReport, out: &OutputArgs) -> Result<()> {
    let mut w = open_output(out.output.as_deref())?;
    match out.format {
        Format::Json => writeln!(w, "{}", report.to_json()?)?,
        Format::Csv => report.write_csv(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

/// Top-10 per measure, to stdout when the report went to a file and to stderr otherwise.
fn print_rankings(report: &CentralityReport, to_stdout: bool) -> Result<()> {
    let mut w: Box<dyn Write> = if to_stdout { Box::new(io::stdout().lock()) } else { Box::new(io::stderr().lock()) };
    for (m, order) in &report.rankings {
        writeln!(w, "{m} top {}:", order.len().min(10))?;
        for (rank, &i) in order.iter().take(10).enumerate() {
            writeln!(w, "  {:>2}. node {:<8} {:.6}", rank + 1, report.node_labels[i], report.measures[m][i])?;
        }
    }
    Ok(())
}

fn report_exit(report: &CentralityReport) -> u8 {
    for (m, err) in &report.diagnostics.errors {
        eprintln!("error: {m}: {err}");
    }
    if !report.is_complete() {
        EXIT_ERROR
    } else if report.diagnostics.scores.values().any(|d| d.stop_reason == StopReason::MaxIters) {
        EXIT_MAX_ITERS
    } else {
        EXIT_OK
    }
}

fn cmd_score(args: ScoreArgs) -> Result<u8> {
    let sys = load_system(&args.input)?;
    let horizon = parse_horizon(&args.input.horizon)?;
    let optimizer = OptimizerConfig {
        epsilon: args.eps,
        sigma: args.sigma,
        rho: args.rho,
        alpha0: args.alpha0,
        max_iters: args.max_iters,
        warm_start: args.warm_start,
        record_every: 0,
        ..Default::default()
    };
    optimizer.validate()?;
    let cfg = ScoreConfig {
        optimizer,
        basis: BasisOptions { mode: args.basis_mode.into(), ..Default::default() },
        dual: args.input.dual,
        ..Default::default()
    };
    let measures: &[Measure] = match args.objective {
        Objective::Vcs => &[Measure::Vcs],
        Objective::Aecs => &[Measure::Aecs],
        Objective::Both => &[Measure::Vcs, Measure::Aecs],
    };
    let ReportRun { report, traces } = rank_report_with_traces(&sys, measures, horizon, &cfg)?;
    write_report(&report, &args.out)?;
    let labelled = traces.len() > 1;
    if let Some(path) = &args.trace {
        let mut w = open_output(Some(path))?;
        for (m, t) in &traces {
            t.write_json_lines(&mut w, labelled.then_some(m.name()))?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.convergence {
        let mut w = csv::Writer::from_writer(open_output(Some(path))?);
        if labelled {
            w.write_record(std::iter::once("measure").chain(CONVERGENCE_HEADER))?;
        } else {
            w.write_record(CONVERGENCE_HEADER)?;
        }
        for (m, t) in &traces {
            t.write_convergence_rows(&mut w, labelled.then_some(m.name()))?;
        }
        w.flush()?;
    }
    print_rankings(&report, args.out.output.is_some())?;
    Ok(report_exit(&report))
}

fn cmd_baselines(args: BaselineArgs) -> Result<u8> {
    let measures = args
        .measures
        .split(',')
        .map(|s| {
            let m: Measure = s.parse()?;
            if m.objective().is_some() {
                bail!("'{m}' is a score; use `ctrlscore score`");
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let sys = load_system(&args.input)?;
    let horizon = parse_horizon(&args.input.horizon)?;
    if !(args.rank_tol >= 0.0) {
        bail!("--rank-tol must be nonnegative");
    }
    let cfg = ScoreConfig { rank_tol: args.rank_tol, dual: args.input.dual, ..Default::default() };
    let report = rank_report_with_traces(&sys, &measures, horizon, &cfg)?.report;
    write_report(&report, &args.out)?;
    print_rankings(&report, args.out.output.is_some())?;
    Ok(report_exit(&report))
}

fn cmd_check(args: CheckArgs) -> Result<u8> {
    let sys = load_system(&args.input)?;
    let sys = if args.input.dual { sys.transposed() } else { sys };
    let horizon = parse_horizon(&args.input.horizon)?;
    let cert = uniqueness_certificate(&sys, horizon)?;
    println!("{}", serde_json::to_string_pretty(&cert)?);
    Ok(if cert.verdict.is_certified() { EXIT_OK } else { EXIT_UNCERTIFIED })
}

fn cmd_bench(args: BenchArgs) -> Result<u8> {
    let mut w = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    w.write_record(["n", "basis_seconds", "optimize_seconds", "iterations", "seconds_per_iteration", "stop_reason"])?;
    let opts = BasisOptions { mode: args.basis_mode.into(), ..Default::default() };
    let cfg = OptimizerConfig { epsilon: args.eps, record_every: 0, ..Default::default() };
    for &n in &args.sizes {
        let sys = NetworkSystem::generate_random_network(n, args.density, args.seed, -(n as f64))?;
        let t0 = Instant::now();
        let basis = GramianBasis::build(&sys, Horizon::Infinite, opts)?;
        let t_basis = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let out = solve(ObjectiveKind::Volumetric, &basis, &cfg)?;
        let t_opt = t1.elapsed().as_secs_f64();
        let iters = out.trace.iterations();
        w.write_record([
            n.to_string(),
            format!("{t_basis:.6}"),
            format!("{t_opt:.6}"),
            iters.to_string(),
            format!("{:.6}", t_opt / iters.max(1) as f64),
            format!("{:?}", out.trace.stop_reason),
        ])?;
        w.flush()?;
    }
    Ok(EXIT_OK)
}

fn cmd_oracle_verify(args: OracleArgs) -> Result<u8> {
    let checks = match &args.checks {
        None => Check::ALL.to_vec(),
        Some(list) => list.split(',').map(str::parse).collect::<std::result::Result<Vec<Check>, _>>()?,
    };
    if let Some(t) = args.tol {
        if !(t >= 0.0) {
            bail!("--tol must be nonnegative");
        }
    }
    let results = verification_suite(args.seed, &checks, args.tol)?;
    println!("{:<12} {:>9} {:>12} {:>12}  status", "check", "instances", "max_error", "tolerance");
    for r in &results {
        println!(
            "{:<12} {:>9} {:>12.3e} {:>12.3e}  {}",
            r.check.name(),
            r.instances,
            r.max_error,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_ERROR })
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CTRLSCORE_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("CTRLSCORE_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    let run = configure_threads().and_then(|()| match cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Baselines(a) => cmd_baselines(a),
        Command::Check(a) => cmd_check(a),
        Command::Bench(a) => cmd_bench(a),
        Command::OracleVerify(a) => cmd_oracle_verify(a),
    });
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
