use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use memkit_core::index::{analyze, AnalysisOptions};
use memkit_core::linalg::{Vector, DEFAULT_RANK_TOL};
use memkit_core::report::{self, Format};
use memkit_core::sim::{simulate, SimError};
use memkit_core::topology::degeneracy_report;
use memkit_core::{assemble, parse_netlist, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Classify,
    Topology,
    Index,
    Sim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Human,
    Machine,
}

/// Analysis and simulation of first-order memristive circuits.
#[derive(Debug, Parser)]
#[command(name = "memkit", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// One or more netlist files.
    #[arg(required = true)]
    netlists: Vec<PathBuf>,
    /// Evaluation point for `index`: one `label value` pair per line.
    #[arg(long)]
    point: Option<PathBuf>,
    /// Cross-check the tractability index against the Kronecker oracle.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    tstop: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1e-10)]
    newton_tol: f64,
    /// CSV destination for `sim`; a directory when several netlists are given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Human)]
    format: OutputFormat,
    /// Worker threads for multi-netlist runs (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

const REFUSED: u8 = 1;
const INPUT: u8 = 2;

struct Outcome {
    code: u8,
    stdout: String,
    stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome {
            code: 0,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: u8, msg: impl std::fmt::Display) -> Self {
        Outcome {
            code,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        }
    }
}

fn read_point(path: &Path, labels: &[String]) -> Result<Vector, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut z = Vector::zeros(labels.len());
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (label, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| format!("{}:{}: expected `label value`", path.display(), n + 1))?;
        let k = labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| format!("{}:{}: unknown variable {label}", path.display(), n + 1))?;
        z[k] = value.trim().parse().map_err(|_| {
            format!(
                "{}:{}: bad number {:?}",
                path.display(),
                n + 1,
                value.trim()
            )
        })?;
    }
    Ok(z)
}

fn csv_path(args: &Args, netlist: &Path) -> Option<PathBuf> {
    let out = args.out.as_ref()?;
    if args.netlists.len() == 1 {
        return Some(out.clone());
    }
    let stem = netlist
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    Some(out.join(format!("{stem}.csv")))
}

fn run_one(args: &Args, path: &Path) -> Outcome {
    let format = match args.format {
        OutputFormat::Human => Format::Human,
        OutputFormat::Machine => Format::Machine,
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return Outcome::fail(INPUT, format!("{}: {e}", path.display())),
    };
    let circuit = match parse_netlist(&text) {
        Ok(c) => c,
        Err(e) => return Outcome::fail(INPUT, format!("{}: {e}", path.display())),
    };
    match args.command {
        Command::Classify => Outcome::ok(report::classification(&circuit, format)),
        Command::Topology => match degeneracy_report(&circuit) {
            Ok(r) => Outcome::ok(report::degeneracy(&r, format)),
            Err(e) => Outcome::fail(REFUSED, e),
        },
        Command::Index => {
            let dae = assemble(&circuit);
            let point = match &args.point {
                Some(p) => match read_point(p, &dae.layout().labels) {
                    Ok(z) => Some(z),
                    Err(e) => return Outcome::fail(INPUT, e),
                },
                None => None,
            };
            let options = AnalysisOptions {
                rank_tol: args.rank_tol,
                oracle: args.oracle,
                ..Default::default()
            };
            match analyze(&dae, point, &options) {
                Ok(r) => Outcome::ok(report::index(&r, format)),
                Err(e) => Outcome::fail(REFUSED, e),
            }
        }
        Command::Sim => {
            let dae = assemble(&circuit);
            let config = SolverConfig {
                h: args.dt,
                newton_tol: args.newton_tol,
                rank_tol: args.rank_tol,
                ..Default::default()
            };
            let trace = match simulate(&dae, &dae.initial_dynamic(), 0.0, args.tstop, &config) {
                Ok(t) => t,
                Err(e @ SimError::Config(_)) => return Outcome::fail(INPUT, e),
                Err(e) => return Outcome::fail(REFUSED, format!("{}: {e}", path.display())),
            };
            match csv_path(args, path) {
                Some(out) => match std::fs::write(&out, trace.to_csv()) {
                    Ok(()) => {
                        let (t, z) = trace.last().expect("trace has the initial point");
                        let mut msg = format!(
                            "wrote {} rows to {} (t = {t})\n",
                            trace.len(),
                            out.display()
                        );
                        if format == Format::Machine {
                            msg.clear();
                            let _ = writeln!(msg, "sim.rows={}", trace.len());
                            let _ = writeln!(msg, "sim.out={}", out.display());
                            for (l, x) in trace.labels.iter().zip(z.iter()) {
                                let _ = writeln!(msg, "sim.final.{l}={x:.16e}");
                            }
                        }
                        Outcome::ok(msg)
                    }
                    Err(e) => Outcome::fail(INPUT, format!("{}: {e}", out.display())),
                },
                None => Outcome::ok(trace.to_csv()),
            }
        }
    }
}

fn run_all(args: &Args) -> Vec<Outcome> {
    let work = |p: &PathBuf| run_one(args, p);
    #[cfg(feature = "parallel")]
    {
        if args.netlists.len() > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(args.jobs)
                .build()
                .expect("thread pool");
            return pool.install(|| args.netlists.par_iter().map(work).collect());
        }
    }
    args.netlists.iter().map(work).collect()
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.command == Command::Sim && args.netlists.len() > 1 {
        if let Some(dir) = &args.out {
            if !dir.is_dir() {
                eprintln!(
                    "error: --out must be an existing directory when simulating several netlists"
                );
                return ExitCode::from(INPUT);
            }
        }
    }
    let outcomes = run_all(&args);
    let many = outcomes.len() > 1;
    let mut code = 0;
    for (path, o) in args.netlists.iter().zip(&outcomes) {
        if many {
            println!("== {} ==", path.display());
        }
        print!("{}", o.stdout);
        eprint!("{}", o.stderr);
        code = code.max(o.code);
    }
    ExitCode::from(code)
}
