use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use saddle::error::{io_err, Error, Result};
use saddle::export::export_system;
use saddle::report::{
    checks_markdown, rows_markdown, table_markdown, write_checks_csv, write_history_csv,
    write_rows_csv,
};
use saddle::run::{run_single_report, run_table, MemoryGate, SolveParams, TableConfig};
use saddle::suites::{run_suite, Status, Suite, SuiteConfig};
use saddle_core::assembly::{memory_estimate, ProblemKind};
use saddle_core::krylov::MinresConfig;

#[derive(Parser)]
#[command(
    name = "saddle",
    version,
    about = "Space-time optimal control saddle-point solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every (p, level, alpha) combination and emit one row each.
    Run(GridArgs),
    /// Iteration table: rows are levels, columns are alphas.
    Table(GridArgs),
    /// Run verification suites; exit status 1 if any check fails.
    Verify(VerifyArgs),
    /// Write the system and preconditioner blocks as Matrix Market files.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "wave")]
    problem: ProblemKind,
    #[arg(long, default_value_t = MinresConfig::default().rel_tol)]
    tol: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = MinresConfig::default().max_iter)]
    max_iter: usize,
    #[arg(long, default_value_t = 8.0)]
    max_memory_gb: f64,
    /// Admit levels 4 and above.
    #[arg(long)]
    allow_large: bool,
}

impl Common {
    fn gate(&self) -> MemoryGate {
        MemoryGate {
            cap_gb: self.max_memory_gb,
            allow_large: self.allow_large,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "degree", visible_alias = "degrees", value_delimiter = ',', num_args = 1.., default_value = "2")]
    degrees: Vec<usize>,
    #[arg(long = "level", visible_alias = "levels", value_delimiter = ',', num_args = 1.., default_value = "2")]
    levels: Vec<u32>,
    #[arg(
        long = "alpha",
        visible_alias = "alphas",
        value_delimiter = ',',
        num_args = 1..,
        default_value = "1,1e-3,1e-6,1e-9",
        allow_negative_numbers = true
    )]
    alphas: Vec<f64>,
    /// Concurrent table cells (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write one residual-history CSV per solve into this directory (run only).
    #[arg(long)]
    history_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "markdown")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    #[arg(long, default_value_t = 2)]
    level: u32,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long)]
    export_dir: PathBuf,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn table_config(g: &GridArgs) -> TableConfig {
    TableConfig {
        problem: g.common.problem,
        degrees: g.degrees.clone(),
        levels: g.levels.clone(),
        alphas: g.alphas.clone(),
        tol: g.common.tol,
        seed: g.common.seed,
        max_iter: g.common.max_iter,
        workers: g
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Prints memory estimates for large levels before any work starts.
fn announce_large(cfg: &TableConfig) -> Result<()> {
    for cell in cfg.cells() {
        if cell.level >= saddle::run::LARGE_LEVEL && cell.alpha == cfg.alphas[0] {
            let gb = memory_estimate(&cell.spec())? as f64 / 1e9;
            eprintln!(
                "p={} level={}: estimated memory {gb:.2} GB",
                cell.degree, cell.level
            );
        }
    }
    Ok(())
}

fn grid(g: &GridArgs, pivot: bool) -> Result<bool> {
    let cfg = table_config(g);
    cfg.validate()?;
    announce_large(&cfg)?;
    let gate = g.common.gate();
    let rows = if pivot {
        run_table(&cfg, &gate)?
    } else {
        let mut rows = Vec::new();
        for cell in cfg.cells() {
            let (row, report) = run_single_report(&cell, &gate)?;
            if let Some(dir) = &g.history_dir {
                std::fs::create_dir_all(dir).map_err(io_err(dir))?;
                let path = dir.join(format!(
                    "history_{}_p{}_l{}_a{:e}.csv",
                    cell.problem, cell.degree, cell.level, cell.alpha
                ));
                let file = File::create(&path).map_err(io_err(&path))?;
                write_history_csv(BufWriter::new(file), &report)?;
            }
            rows.push(row);
        }
        rows
    };
    let mut out = open_output(g.output.as_deref())?;
    match (g.format, pivot) {
        (Format::Csv, _) => write_rows_csv(&mut out, &rows)?,
        (Format::Markdown, true) => {
            write!(out, "{}", table_markdown(&rows)).map_err(io_err("stdout"))?
        }
        (Format::Markdown, false) => {
            write!(out, "{}", rows_markdown(&rows)).map_err(io_err("stdout"))?
        }
    }
    out.flush().map_err(io_err("output"))?;
    for r in rows.iter().filter(|r| !r.ok()) {
        eprintln!(
            "cell p={} level={} alpha={:e} did not converge{}",
            r.p,
            r.level,
            r.alpha,
            r.error
                .as_deref()
                .map(|e| format!(": {e}"))
                .unwrap_or_default()
        );
    }
    Ok(rows.iter().all(|r| r.ok()))
}

fn verify(v: &VerifyArgs) -> Result<bool> {
    let cfg = SuiteConfig {
        seed: v.seed,
        ..SuiteConfig::default()
    };
    let checks = run_suite(v.suite, &cfg)?;
    for c in &checks {
        eprintln!("{c}");
    }
    let mut out = open_output(v.output.as_deref())?;
    match v.format {
        Format::Csv => write_checks_csv(&mut out, &checks)?,
        Format::Markdown => {
            write!(out, "{}", checks_markdown(&checks)).map_err(io_err("stdout"))?
        }
    }
    out.flush().map_err(io_err("output"))?;
    Ok(!checks.iter().any(|c| c.status == Status::Fail))
}

fn export(e: &ExportArgs) -> Result<bool> {
    let mut params = SolveParams::new(e.common.problem, e.degree, e.level, e.alpha);
    params.tol = e.common.tol;
    params.seed = e.common.seed;
    params.max_iter = e.common.max_iter;
    let m = export_system(&params, &e.common.gate(), &e.export_dir)?;
    println!(
        "wrote {} and {} preconditioner blocks ({} DoFs) to {}",
        m.system_file,
        m.preconditioner.len(),
        m.dofs,
        e.export_dir.display()
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(g) => grid(g, false),
        Command::Table(g) => grid(g, true),
        Command::Verify(v) => verify(v),
        Command::Export(e) => export(e),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let code = if matches!(e, Error::Core(saddle_core::Error::Domain(_))) {
                2
            } else {
                e.exit_code()
            };
            ExitCode::from(code as u8)
        }
    }
}
