//! Solves, sweeps and subsolution checks driven by a [`RunConfig`].

use hessquot::grid::ScalarField;
use hessquot::solver::{newton_solve, regularized_sweep, subsolution_check, SolveReport, SubsolutionReport, initial_guess};

use crate::config::{build, ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;

/// Result of a solve or sweep. `reports` has one entry per stage (a single
/// entry without `eps` for a plain solve).
#[derive(Debug, Clone)]
pub struct RunResult {
    pub sweep: bool,
    pub reports: Vec<SolveReport>,
    /// Final iterate of a plain solve, or the last converged sweep stage.
    pub field: Option<ScalarField>,
    pub node_count: usize,
    /// Set when the solver rejected its input instead of producing a report.
    pub error: Option<String>,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.error.is_none() && !self.reports.is_empty() && self.reports.iter().all(|r| r.converged)
    }

    pub fn exit_code(&self) -> u8 {
        if self.converged() {
            EXIT_OK
        } else {
            EXIT_SOLVER
        }
    }
}

/// Builds the problem and runs a single Newton solve, or the `ε`-sweep when
/// `sweep` is set or the config asks for regularization.
pub fn run_solve(cfg: &RunConfig, sweep: bool) -> Result<RunResult, ConfigError> {
    let built = build(cfg)?;
    let mut problem = built.problem;
    if let Some(sub) = built.subsolution {
        problem = problem
            .with_subsolution(sub)
            .map_err(|e| ConfigError::Validation {
                field: "problem.subsolution".into(),
                reason: e.to_string(),
            })?;
    }
    let node_count = problem.domain.node_count();
    let sweep = sweep || cfg.problem.regularize;
    let mut out = RunResult {
        sweep,
        reports: Vec::new(),
        field: None,
        node_count,
        error: None,
    };
    if sweep {
        match regularized_sweep(&problem, &cfg.solver) {
            Ok(s) => {
                out.reports = s.reports;
                out.field = s.solution;
            }
            Err(e) => out.error = Some(e.to_string()),
        }
    } else {
        let u0 = initial_guess(&problem, &cfg.solver);
        match newton_solve(&problem, &u0, &cfg.solver) {
            Ok((u, report)) => {
                out.reports.push(report);
                out.field = Some(u);
            }
            Err(e) => out.error = Some(e.to_string()),
        }
    }
    Ok(out)
}

/// Runs the subsolution check on the config's `ū`.
pub fn run_subsolution_check(cfg: &RunConfig) -> Result<Result<SubsolutionReport, String>, ConfigError> {
    let built = build(cfg)?;
    let sub = built.subsolution.ok_or_else(|| ConfigError::Validation {
        field: "problem.subsolution".into(),
        reason: "check-subsolution needs a subsolution expression".into(),
    })?;
    Ok(subsolution_check(&sub, &built.problem, &cfg.solver).map_err(|e| e.to_string()))
}
