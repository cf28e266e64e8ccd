use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use helson_cli::artifacts::{to_json, write_text};
use helson_cli::commands::{self, parse_grid, parse_points};
use helson_cli::config::{parse_count, RunConfig};
use helson_cli::CliError;
use helson_core::continuation::{DEFAULT_NODES, DEFAULT_RADIUS};
use helson_core::primes::AuditConfig;
use num_complex::Complex64;

#[derive(Parser)]
#[command(name = "helson", version, about = "Forge and verify Helson zeta-functions with prescribed zeros and poles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct chi and write the run artifacts.
    Forge(ForgeArgs),
    /// Recompute a run's ledger and report growth and stage bounds.
    Verify {
        dir: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Evaluate the continued zeta'/zeta at points or on a grid (CSV).
    Eval {
        dir: PathBuf,
        /// File of `re,im` lines.
        #[arg(long, conflicts_with = "grid")]
        points: Option<PathBuf>,
        /// `re_min,re_max,im_min,im_max,n_re,n_im`.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, short = 'j', default_value_t = 3)]
        depth: usize,
        /// Truncation point; defaults to the frontier.
        #[arg(long = "x")]
        x: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Contour-integrate zeta'/zeta around each prescribed point (CSV).
    Probe {
        dir: PathBuf,
        #[arg(long, short = 'j', default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
        /// Extra centre `re,im`; repeatable.
        #[arg(long = "at", value_parser = parse_centre, allow_hyphen_values = true)]
        at: Vec<Complex64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail when a rounded residue differs from the prescribed order.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Count primes in the intervals [x_k, x_k + x_k^theta).
    AuditPrimes {
        #[arg(long, value_parser = parse_count)]
        xmax: u64,
        #[arg(long, default_value_t = 7.0 / 12.0)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 100.0)]
        min_x: f64,
        /// Write the per-interval table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ForgeArgs {
    /// key = value run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    xmax: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    /// `inverse-log` or a positive constant.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    bootstrap_min_x: Option<f64>,
    #[arg(long)]
    stage_limit: Option<usize>,
    #[arg(long)]
    stall_limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_centre(s: &str) -> Result<Complex64, String> {
    match parse_points(s).map_err(|e| e.to_string())?.as_slice() {
        [z] => Ok(*z),
        _ => Err(format!("expected 're,im', got '{s}'")),
    }
}

fn forge_config(args: ForgeArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let here = Path::new(".");
    let mut set = |key: &str, value: Option<String>| -> Result<(), CliError> {
        if let Some(v) = value {
            cfg.set(key, &v, here).map_err(|m| CliError::Validation(format!("--{key}: {m}")))?;
        }
        Ok(())
    };
    set("theta", args.theta.map(|v| v.to_string()))?;
    set("x_max", args.xmax.map(|v| v.to_string()))?;
    set("eps", args.eps.map(|v| v.to_string()))?;
    set("budget", args.budget)?;
    set("bootstrap_min_x", args.bootstrap_min_x.map(|v| v.to_string()))?;
    set("stage_limit", args.stage_limit.map(|v| v.to_string()))?;
    set("stall_limit", args.stall_limit.map(|v| v.to_string()))?;
    set("seed", args.seed.map(|v| v.to_string()))?;
    set("threads", args.threads.map(|v| v.to_string()))?;
    if let Some(p) = args.spec {
        cfg.spec = Some(p);
    }
    if let Some(p) = args.out {
        cfg.out = p;
    }
    Ok(cfg)
}

fn threads(flag: Option<usize>) -> Result<usize, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(n) = flag {
        cfg.threads = n;
    }
    cfg.effective_threads()
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Forge(args) => {
            let cfg = forge_config(args)?;
            let s = commands::cmd_forge(&cfg)?;
            println!("forged {} primes up to x = {:.3} into {}", s.primes, s.x_built, s.out.display());
            for (j, c) in s.constants.iter().enumerate() {
                println!("  C_{} = {:.6}", j + 1, c);
            }
            if s.warnings > 0 {
                println!("  {} warnings recorded in the report", s.warnings);
            }
            Ok(())
        }
        Command::Verify { dir, json } => {
            let report = commands::cmd_verify(&dir)?;
            print!("{}", report.to_text());
            if let Some(path) = json {
                write_text(&path, &to_json(&report))?;
            }
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Corrupt("verification failed".into()))
            }
        }
        Command::Eval { dir, points, grid, depth, x, out, threads: t } => {
            let pts = match (points, grid) {
                (Some(p), None) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| CliError::Validation(format!("cannot read points {}: {e}", p.display())))?;
                    parse_points(&text)?
                }
                (None, Some(g)) => parse_grid(&g)?,
                _ => return Err(CliError::Validation("give exactly one of --points or --grid".into())),
            };
            let results = commands::cmd_eval(&dir, &pts, depth, x, threads(t)?)?;
            emit(out.as_deref(), &commands::results_csv(&results))
        }
        Command::Probe { dir, depth, radius, nodes, at, out, strict, threads: t } => {
            let rows = commands::cmd_probe(&dir, depth, radius, nodes, &at, threads(t)?)?;
            emit(out.as_deref(), &commands::probe_csv(&rows))?;
            if strict && rows.iter().any(|r| !r.matches) {
                return Err(CliError::Runtime("a probe residue differs from the prescribed order".into()));
            }
            Ok(())
        }
        Command::AuditPrimes { xmax, theta, c, min_x, out } => {
            let config = AuditConfig { c, min_x, ..AuditConfig::default() };
            let report = commands::cmd_audit_primes(theta, xmax, &config)?;
            println!(
                "{} intervals, min count ratio {:.4}, max deficit {:.4}, {} flagged",
                report.rows.len(),
                report.min_ratio,
                report.max_deficit,
                report.flagged.len()
            );
            if let Some(path) = out {
                write_text(&path, &report.to_csv())?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
