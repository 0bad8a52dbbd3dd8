use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use wasmct_core::engine::{explore, EngineConfig};
use wasmct_core::report::{AnalysisReport, Format};
use wasmct_core::solver::{SolverConfig, CONFIG_ENV};
use wasmct_core::wat::{self, ModuleAst};

const EXIT_USAGE: u8 = 3;

/// Checks that WebAssembly-text functions run in constant time with respect
/// to their secret inputs.
#[derive(Debug, Parser)]
#[command(name = "wasmct", version)]
struct Cli {
    /// WAT files forming the module; later files add to the first.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Entry function, overriding the `symb_exec` directive. Without a
    /// directive for it, every parameter is public.
    #[arg(long)]
    entry: Option<String>,

    #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u32).range(1..))]
    unroll_limit: u32,

    /// Summarize loops with generated relational invariants.
    #[arg(long)]
    invariants: bool,

    /// Treat a `select` on a secret condition as a violation.
    #[arg(long)]
    select_unsafe: bool,

    /// Queries with more expressions than this go to the solver portfolio.
    #[arg(long, default_value_t = 1500, value_parser = clap::value_parser!(u64).range(1..))]
    portfolio_threshold: u64,

    /// Overall time budget in seconds.
    #[arg(long, default_value_t = 5400.0, value_parser = positive_seconds)]
    timeout: f64,

    /// Stop after this many explored paths.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    path_limit: Option<u64>,

    /// Solver backends, one `name: argv...` per line.
    #[arg(long, env = CONFIG_ENV)]
    solver_config: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,

    /// Print solver and engine statistics.
    #[arg(long)]
    stats: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

fn positive_seconds(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v > 0.0 && v < 1e9 {
        Ok(v)
    } else {
        Err("must be a positive number of seconds".into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let outcome = std::panic::catch_unwind(|| {
        run(&cli).map(|report| (report.render(cli.format.into(), cli.stats), report.exit_code()))
    });
    match outcome {
        Ok(Ok((text, code))) => {
            print!("{text}");
            ExitCode::from(code as u8)
        }
        Ok(Err(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Text => Format::Text,
            OutputFormat::Json => Format::Json,
        }
    }
}

fn run(cli: &Cli) -> Result<AnalysisReport, String> {
    let mut sources = Vec::with_capacity(cli.inputs.len());
    for p in &cli.inputs {
        let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        sources.push(text);
    }
    let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
    let names: Vec<String> = cli.inputs.iter().map(|p| p.display().to_string()).collect();
    let mut ast = wat::parse_sources(&refs).map_err(|e| format!("{}: {e}", names.join(", ")))?;
    if let Some(name) = &cli.entry {
        select_entry(&mut ast, name).map_err(|e| e.to_string())?;
    }

    let solver = match &cli.solver_config {
        Some(path) => SolverConfig::load(path).map_err(|e| format!("solver config {}: {e}", path.display()))?,
        None => SolverConfig::default(),
    };
    let cfg = EngineConfig {
        unroll_limit: cli.unroll_limit,
        path_limit: cli.path_limit.unwrap_or(EngineConfig::default().path_limit),
        time_budget: Duration::from_secs_f64(cli.timeout),
        select_unsafe: cli.select_unsafe,
        invariants_enabled: cli.invariants,
        portfolio_threshold: usize::try_from(cli.portfolio_threshold).unwrap_or(usize::MAX),
        ..EngineConfig::default()
    };
    let ex = explore(&ast, &cfg, solver).map_err(|e| e.to_string())?;
    Ok(AnalysisReport::build(&ast, names, &cfg, ex))
}

fn select_entry(ast: &mut ModuleAst, name: &str) -> Result<(), wat::FrontendError> {
    if ast.entry.as_ref().is_some_and(|e| e.function == name) {
        return Ok(());
    }
    ast.entry = Some(wat::default_entry(ast, name)?);
    Ok(())
}
