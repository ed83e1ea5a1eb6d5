//! Report files: `summary.json`, `field.csv` and `convergence.csv`.
//!
//! Numbers in the CSV files are written with 17 significant digits and no
//! timing information is recorded anywhere, so identical configs give
//! byte-identical output.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use hessquot::grid::{gradient_at_node, hessian_at_node, ScalarField};
use hessquot::solver::SolveReport;
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::RunResult;

/// Overrides `output.dir` when set.
pub const REPORT_DIR_VAR: &str = "HESSQUOT_REPORT_DIR";

pub fn report_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var(REPORT_DIR_VAR) {
        Ok(d) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from(&cfg.output.dir),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub eps: Option<f64>,
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub interior_residual: f64,
    pub boundary_residual: f64,
    pub sup_u: f64,
    pub sup_du: f64,
    pub sup_d2u: f64,
    pub min_margin: f64,
    pub message: Option<String>,
}

impl From<&SolveReport> for StageSummary {
    fn from(r: &SolveReport) -> Self {
        let status = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self {
            eps: r.eps,
            status,
            converged: r.converged,
            iterations: r.iterations,
            interior_residual: r.interior_residual,
            boundary_residual: r.boundary_residual,
            sup_u: r.sup_u,
            sup_du: r.sup_du,
            sup_d2u: r.sup_d2u,
            min_margin: r.min_margin,
            message: r.message.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mode: String,
    pub converged: bool,
    pub node_count: usize,
    /// Accepted Newton steps over all stages.
    pub iterations: usize,
    /// Last attempted stage (the only one for a plain solve).
    pub last: Option<StageSummary>,
    /// One row per `ε` stage, in schedule order; empty for a plain solve.
    pub stages: Vec<StageSummary>,
    pub error: Option<String>,
    pub config: RunConfig,
}

pub fn summary(result: &RunResult, cfg: &RunConfig) -> Summary {
    let rows: Vec<StageSummary> = result.reports.iter().map(StageSummary::from).collect();
    Summary {
        mode: if result.sweep { "sweep" } else { "solve" }.into(),
        converged: result.converged(),
        node_count: result.node_count,
        iterations: result.reports.iter().map(|r| r.iterations).sum(),
        last: rows.last().cloned(),
        stages: if result.sweep { rows } else { Vec::new() },
        error: result.error.clone(),
        config: cfg.clone(),
    }
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

/// Columns `x1,x2[,x3],u,|Du|,maxabs_D2u`, one row per node.
pub fn field_csv(u: &ScalarField) -> String {
    let dom = u.domain();
    let dim = dom.dim();
    let mut out = String::new();
    for a in 1..=dim {
        let _ = write!(out, "x{a},");
    }
    out.push_str("u,|Du|,maxabs_D2u\n");
    for node in 0..dom.node_count() {
        for x in dom.coords(node) {
            num(&mut out, x);
            out.push(',');
        }
        num(&mut out, u.values()[node]);
        out.push(',');
        let g = gradient_at_node(u, node).map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt());
        num(&mut out, g.unwrap_or(f64::NAN));
        out.push(',');
        let h = hessian_at_node(u, node).map(|m| m.max_abs());
        num(&mut out, h.unwrap_or(f64::NAN));
        out.push('\n');
    }
    out
}

/// `iteration,residual,step`, prefixed by `stage,eps` for sweeps. Row 0 is
/// the starting iterate, with step 0.
pub fn convergence_csv(result: &RunResult) -> String {
    let mut out = String::new();
    if result.sweep {
        out.push_str("stage,eps,");
    }
    out.push_str("iteration,residual,step\n");
    for (s, r) in result.reports.iter().enumerate() {
        for (i, res) in r.residual_history.iter().enumerate() {
            if result.sweep {
                let _ = write!(out, "{s},");
                num(&mut out, r.eps.unwrap_or(0.0));
                out.push(',');
            }
            let _ = write!(out, "{i},");
            num(&mut out, *res);
            out.push(',');
            let step = if i == 0 { 0.0 } else { r.step_lengths.get(i - 1).copied().unwrap_or(f64::NAN) };
            num(&mut out, step);
            out.push('\n');
        }
    }
    out
}

/// Writes the report files into `dir`, creating it if needed, and returns
/// the paths written.
pub fn emit_report(result: &RunResult, cfg: &RunConfig, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary(result, cfg)).map_err(io::Error::other)?;
    fs::write(&path, json + "\n")?;
    written.push(path);
    if cfg.output.convergence_table {
        let path = dir.join("convergence.csv");
        fs::write(&path, convergence_csv(result))?;
        written.push(path);
    }
    if cfg.output.field_dump {
        if let Some(u) = &result.field {
            let path = dir.join("field.csv");
            fs::write(&path, field_csv(u))?;
            written.push(path);
        }
    }
    Ok(written)
}
