//! CSV and Markdown output. CSV carries full precision; Markdown rounds.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use saddle_core::krylov::MinresReport;

use crate::error::Result;
use crate::run::RunRow;
use crate::suites::{Check, Status};

pub fn write_rows_csv<W: Write>(w: W, rows: &[RunRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Compact `α` label: `1`, `1e-3`, ...
pub fn alpha_label(alpha: f64) -> String {
    if alpha == 1.0 {
        "1".into()
    } else {
        format!("{alpha:e}")
    }
}

fn iterations_cell(row: &RunRow) -> String {
    match (row.iterations, &row.error) {
        (_, Some(_)) => "failed".into(),
        (Some(it), None) if row.converged => it.to_string(),
        (Some(it), None) => format!("{it}*"),
        (None, None) => "-".into(),
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.prec$e}"))
}

pub fn rows_markdown(rows: &[RunRow]) -> String {
    let mut s = String::new();
    s.push_str("| problem | p | level | alpha | dofs | iterations | converged | final_relres | runtime_ms |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let runtime = r
            .runtime_ms
            .map_or_else(|| "-".into(), |t| format!("{t:.1}"));
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.problem,
            r.p,
            r.level,
            alpha_label(r.alpha),
            r.dofs,
            iterations_cell(r),
            r.converged,
            opt(r.final_relres, 2),
            runtime
        );
    }
    s
}

/// One table per degree: rows `ℓ`, a DoFs column, one column per `α`.
/// Non-converged counts carry a `*`.
pub fn table_markdown(rows: &[RunRow]) -> String {
    let mut s = String::new();
    let degrees: BTreeSet<usize> = rows.iter().map(|r| r.p).collect();
    let mut alphas: Vec<f64> = Vec::new();
    for r in rows {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    for p in degrees {
        let mine: Vec<&RunRow> = rows.iter().filter(|r| r.p == p).collect();
        let problem = mine.first().map_or("", |r| r.problem.as_str());
        let _ = writeln!(s, "Iteration numbers, {problem}, p = {p}\n");
        s.push_str("| ℓ \\ α | DoFs |");
        for a in &alphas {
            let _ = write!(s, " {} |", alpha_label(*a));
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---|".repeat(alphas.len()));
        s.push('\n');
        let levels: BTreeSet<u32> = mine.iter().map(|r| r.level).collect();
        for l in levels {
            let cells: Vec<&&RunRow> = mine.iter().filter(|r| r.level == l).collect();
            let _ = write!(s, "| {l} | {} |", cells.first().map_or(0, |r| r.dofs));
            for a in &alphas {
                let cell = cells
                    .iter()
                    .find(|r| r.alpha == *a)
                    .map_or_else(|| "-".into(), |r| iterations_cell(r));
                let _ = write!(s, " {cell} |");
            }
            s.push('\n');
        }
        s.push('\n');
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        let _ = writeln!(
            s,
            "failed: p={} level={} alpha={}: {}",
            r.p,
            r.level,
            alpha_label(r.alpha),
            r.error.as_deref().unwrap_or("")
        );
    }
    s
}

/// `iteration,estimate,true_residual`; the estimate is relative to its
/// initial value and the true residual is only filled in where it was computed.
pub fn write_history_csv<W: Write>(w: W, report: &MinresReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", "estimate", "true_residual"])?;
    let r0 = report.residual_history.first().copied().unwrap_or(1.0);
    for (i, r) in report.residual_history.iter().enumerate() {
        let est = if r0 > 0.0 { r / r0 } else { *r };
        let t = report
            .true_residual_history
            .iter()
            .find(|(k, _)| *k == i)
            .map(|(_, v)| v.to_string())
            .unwrap_or_default();
        out.write_record([i.to_string(), est.to_string(), t])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_checks_csv<W: Write>(w: W, checks: &[Check]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["suite", "check", "status", "detail"])?;
    for c in checks {
        out.write_record([
            c.suite,
            c.name.as_str(),
            c.status.label(),
            c.detail.as_str(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn checks_markdown(checks: &[Check]) -> String {
    let mut s = String::from("| suite | check | status | detail |\n|---|---|---|---|\n");
    for c in checks {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            c.suite,
            c.name,
            c.status.label(),
            c.detail
        );
    }
    let fails = checks.iter().filter(|c| c.status == Status::Fail).count();
    let _ = writeln!(s, "\n{} checks, {fails} failed", checks.len());
    s
}
