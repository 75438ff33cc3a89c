//! Single solves and iteration tables.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use saddle_core::assembly::{
    assemble_system, memory_estimate, DiscreteSystem, ProblemData, ProblemKind, ProblemSpec,
};
use saddle_core::krylov::{minres, random_start, MinresConfig, MinresReport};
use saddle_core::precond::BlockDiagPreconditioner;
use serde::Serialize;

use crate::error::{Error, Result};

/// Levels from here on need an explicit opt-in.
pub const LARGE_LEVEL: u32 = 4;

/// Parameters of one MINRES solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveParams {
    pub problem: ProblemKind,
    pub degree: usize,
    pub level: u32,
    pub alpha: f64,
    pub tol: f64,
    pub seed: u64,
    pub max_iter: usize,
}

impl SolveParams {
    pub fn new(problem: ProblemKind, degree: usize, level: u32, alpha: f64) -> Self {
        let d = MinresConfig::default();
        Self {
            problem,
            degree,
            level,
            alpha,
            tol: d.rel_tol,
            seed: d.seed,
            max_iter: d.max_iter,
        }
    }

    pub fn spec(&self) -> ProblemSpec {
        let mut spec = ProblemSpec::new(self.problem, self.degree, self.level, self.alpha);
        spec.seed = self.seed;
        spec
    }

    fn minres_config(&self) -> MinresConfig {
        MinresConfig {
            rel_tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            ..MinresConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!(
                "tol must lie in (0, 1), got {}",
                self.tol
            )));
        }
        self.spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.minres_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Refuses problems whose estimated footprint exceeds the cap, and large
/// levels unless they were asked for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryGate {
    pub cap_gb: f64,
    pub allow_large: bool,
}

impl Default for MemoryGate {
    fn default() -> Self {
        Self {
            cap_gb: 8.0,
            allow_large: false,
        }
    }
}

impl MemoryGate {
    /// Returns the estimate in GB when the problem is admitted.
    pub fn check(&self, spec: &ProblemSpec) -> Result<f64> {
        let estimate_gb = memory_estimate(spec)? as f64 / 1e9;
        if spec.level >= LARGE_LEVEL && !self.allow_large {
            return Err(Error::Config(format!(
                "level {} needs --allow-large (estimated memory {estimate_gb:.2} GB)",
                spec.level
            )));
        }
        if estimate_gb > self.cap_gb {
            return Err(Error::Memory {
                estimate_gb,
                cap_gb: self.cap_gb,
            });
        }
        Ok(estimate_gb)
    }
}

/// One CSV row. Failed cells keep their parameters and leave the results empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub problem: String,
    pub p: usize,
    pub level: u32,
    pub alpha: f64,
    pub dofs: usize,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub final_relres: Option<f64>,
    /// Wall time of the MINRES solve.
    pub runtime_ms: Option<f64>,
    #[serde(skip)]
    pub error: Option<String>,
}

impl RunRow {
    fn failed(params: &SolveParams, dofs: usize, error: String) -> Self {
        Self {
            problem: params.problem.name().into(),
            p: params.degree,
            level: params.level,
            alpha: params.alpha,
            dofs,
            iterations: None,
            converged: false,
            final_relres: None,
            runtime_ms: None,
            error: Some(error),
        }
    }

    fn solved(params: &SolveParams, dofs: usize, report: &MinresReport) -> Self {
        Self {
            problem: params.problem.name().into(),
            p: params.degree,
            level: params.level,
            alpha: params.alpha,
            dofs,
            iterations: Some(report.iterations),
            converged: report.converged,
            final_relres: Some(report.final_true_relres),
            runtime_ms: report.runtime_ms,
            error: None,
        }
    }

    /// Solved and converged.
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.converged
    }
}

/// MINRES on an assembled system, timed.
pub fn solve(
    sys: &DiscreteSystem,
    pre: &BlockDiagPreconditioner,
    params: &SolveParams,
) -> Result<(Vec<f64>, MinresReport)> {
    let cfg = params.minres_config();
    let x0 = random_start(sys.dim(), params.seed);
    let start = Instant::now();
    if pre.dim() != sys.dim() {
        return Err(Error::Config(format!(
            "preconditioner of dimension {} for a system of dimension {}",
            pre.dim(),
            sys.dim()
        )));
    }
    let (x, mut report) = minres(
        |x, y| sys.matrix.matvec(x, y),
        |r, z| pre.apply_inverse_into(r, z).expect("dimension checked"),
        &sys.rhs,
        &x0,
        &cfg,
    )?;
    report.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    Ok((x, report))
}

/// Builds spaces, system and preconditioner and runs MINRES once.
pub fn run_single(params: &SolveParams, gate: &MemoryGate) -> Result<RunRow> {
    Ok(run_single_report(params, gate)?.0)
}

/// [`run_single`] that also returns the full MINRES report.
pub fn run_single_report(
    params: &SolveParams,
    gate: &MemoryGate,
) -> Result<(RunRow, MinresReport)> {
    params.validate()?;
    let spec = params.spec();
    gate.check(&spec)?;
    let sys = assemble_system(&spec, &ProblemData::homogeneous())?;
    let pre = BlockDiagPreconditioner::build(&sys)?;
    let (_, report) = solve(&sys, &pre, params)?;
    Ok((RunRow::solved(params, sys.dim(), &report), report))
}

/// Grid of a table run; cells are ordered by degree, level, then `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableConfig {
    pub problem: ProblemKind,
    pub degrees: Vec<usize>,
    pub levels: Vec<u32>,
    pub alphas: Vec<f64>,
    pub tol: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub workers: usize,
}

impl TableConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("degrees", self.degrees.is_empty()),
            ("levels", self.levels.is_empty()),
            ("alphas", self.alphas.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("the list of {name} is empty")));
            }
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        for cell in self.cells() {
            cell.validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<SolveParams> {
        let mut out = Vec::new();
        for &degree in &self.degrees {
            for &level in &self.levels {
                for &alpha in &self.alphas {
                    out.push(SolveParams {
                        problem: self.problem,
                        degree,
                        level,
                        alpha,
                        tol: self.tol,
                        seed: self.seed,
                        max_iter: self.max_iter,
                    });
                }
            }
        }
        out
    }
}

type Prepared = std::result::Result<Arc<(DiscreteSystem, BlockDiagPreconditioner)>, String>;

/// Runs every cell of the grid. Each `(p, ℓ)` is assembled once; cells run
/// concurrently on at most `workers` threads and failures are recorded per
/// cell. The rows come back in grid order.
pub fn run_table(cfg: &TableConfig, gate: &MemoryGate) -> Result<Vec<RunRow>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let groups: Vec<(usize, u32)> = cfg
        .degrees
        .iter()
        .flat_map(|&p| cfg.levels.iter().map(move |&l| (p, l)))
        .collect();
    let cells = cfg.cells();
    pool.install(|| {
        let prepared: Vec<(usize, Prepared)> = groups
            .par_iter()
            .map(|&(p, l)| {
                let spec = cells
                    .iter()
                    .find(|c| c.degree == p && c.level == l)
                    .expect("grid cell")
                    .spec();
                let dofs = saddle_core::assembly::dof_count(&spec).unwrap_or(0);
                let built = gate
                    .check(&spec)
                    .and_then(|_| {
                        let sys = assemble_system(&spec, &ProblemData::homogeneous())?;
                        let pre = BlockDiagPreconditioner::build(&sys)?;
                        Ok(Arc::new((sys, pre)))
                    })
                    .map_err(|e| e.to_string());
                (dofs, built)
            })
            .collect();
        let rows = cells
            .par_iter()
            .enumerate()
            .map(|(i, params)| {
                let (dofs, built) = &prepared[i / cfg.alphas.len()];
                let outcome = match built {
                    Ok(base) => solve_cell(base, params),
                    Err(e) => Err(e.clone()),
                };
                match outcome {
                    Ok(report) => RunRow::solved(params, *dofs, &report),
                    Err(e) => RunRow::failed(params, *dofs, e),
                }
            })
            .collect();
        Ok(rows)
    })
}

fn solve_cell(
    base: &(DiscreteSystem, BlockDiagPreconditioner),
    params: &SolveParams,
) -> std::result::Result<MinresReport, String> {
    let run = || -> Result<MinresReport> {
        let sys = base.0.with_alpha(params.alpha)?;
        let pre = base.1.with_alpha(&sys.blocks, params.alpha)?;
        Ok(solve(&sys, &pre, params)?.1)
    };
    run().map_err(|e| e.to_string())
}
