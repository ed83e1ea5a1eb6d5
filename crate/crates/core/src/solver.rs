//! Damped Newton on the discrete system, the `ε`-regularization sweep, the
//! quadratic initial guess, and runtime checks of the subsolution and
//! comparison structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    assemble_linearization, hessian_at_node, residual, sup_gradient, sup_hessian, ProblemSpec, Residual,
    ScalarField,
};
use crate::hessop::{normalized_value, transform, SymMatrix};
use crate::symcone::cone_report;

/// How far inside the cone an iterate must stay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum AdmissibilityMargin {
    /// `σ_i(η) > m` for every `i ≤ k`.
    Absolute(f64),
    /// `σ_i(η) > c·(1 + max|η|)` for every `i ≤ k`.
    Relative(f64),
}

impl AdmissibilityMargin {
    fn threshold(&self, eta: &[f64]) -> f64 {
        match *self {
            AdmissibilityMargin::Absolute(m) => m,
            AdmissibilityMargin::Relative(c) => c * (1.0 + eta.iter().fold(0.0_f64, |a, e| a.max(e.abs()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_r: f64,
    pub tol_b: f64,
    pub max_iterations: usize,
    pub shrink: f64,
    pub max_halvings: usize,
    pub eps0: f64,
    pub eps_shrink: f64,
    pub eps_final: f64,
    pub margin: AdmissibilityMargin,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_r: 1e-9,
            tol_b: 1e-9,
            max_iterations: 50,
            shrink: 0.5,
            max_halvings: 30,
            eps0: 1e-2,
            eps_shrink: 0.1,
            eps_final: 1e-6,
            margin: AdmissibilityMargin::Absolute(0.0),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.tol_r > 0.0) || !(self.tol_b > 0.0) {
            return bad("tol_r and tol_b must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.eps0 > 0.0) || !(self.eps_final > 0.0) || self.eps_final > self.eps0 {
            return bad("need 0 < eps_final <= eps0");
        }
        if !(self.eps_shrink > 0.0 && self.eps_shrink < 1.0) {
            return bad("eps_shrink must lie in (0, 1)");
        }
        match self.margin {
            AdmissibilityMargin::Absolute(m) | AdmissibilityMargin::Relative(m) if !(m >= 0.0) || !m.is_finite() => {
                bad("admissibility margin must be finite and non-negative")
            }
            _ => Ok(()),
        }
    }

    /// `ε₀, ε₀·s, ε₀·s², …` down to `eps_final` (inclusive up to rounding).
    pub fn eps_schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut j = 0;
        loop {
            let e = self.eps0 * self.eps_shrink.powi(j);
            if e < self.eps_final * (1.0 - 1e-9) {
                break;
            }
            out.push(e);
            j += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    LineSearchFailed,
    LinearSolveFailed,
    BudgetExhausted,
    Stagnated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub converged: bool,
    /// Accepted Newton steps.
    pub iterations: usize,
    /// Combined residual sup-norm, starting with the initial iterate.
    pub residual_history: Vec<f64>,
    pub step_lengths: Vec<f64>,
    /// Minimum admissibility margin of each accepted iterate, initial included.
    pub margin_history: Vec<f64>,
    pub interior_residual: f64,
    pub boundary_residual: f64,
    pub sup_u: f64,
    pub sup_du: f64,
    pub sup_d2u: f64,
    /// `min` over interior nodes of `min_i σ_i(η)`.
    pub min_margin: f64,
    /// Regularization parameter of the stage, for sweeps.
    pub eps: Option<f64>,
    pub message: Option<String>,
}

/// Admissibility of every interior node; `Err` names the first offending node.
pub fn admissibility(u: &ScalarField, p: &ProblemSpec, margin: AdmissibilityMargin) -> Result<f64> {
    let mut min_margin = f64::INFINITY;
    for &node in u.domain().interior_nodes() {
        let hess = hessian_at_node(u, node)?;
        let eta = transform(hess.eigenvalues().values(), &p.op);
        let report = cone_report(&eta, p.op.k());
        let threshold = margin.threshold(&eta);
        if !report.member || report.margins.iter().any(|&m| !(m > threshold)) {
            return Err(Error::NotAdmissible {
                node,
                margins: report.margins,
            });
        }
        min_margin = min_margin.min(report.min_margin());
    }
    Ok(min_margin)
}

/// Result of a line search.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub alpha: f64,
    pub field: ScalarField,
    pub residual: Residual,
    pub min_margin: f64,
    /// The accepted step changed the residual by less than rounding; the
    /// Newton loop stops on it.
    pub stagnated: bool,
}

fn stalls(old: f64, new: f64) -> bool {
    old - new < 1e-14 * old.max(1.0)
}

/// Tries `α = 1, s, s², …` and accepts the first trial that is admissible
/// and strictly lowers the combined residual sup-norm. A zero correction is
/// reported as stagnation with `α = 1`.
pub fn damped_step(
    u: &ScalarField,
    delta: &[f64],
    p: &ProblemSpec,
    cfg: &SolverConfig,
    current: f64,
) -> Result<StepOutcome> {
    if delta.iter().all(|&d| d == 0.0) {
        let residual = residual(u, p)?;
        return Ok(StepOutcome {
            alpha: 1.0,
            field: u.clone(),
            residual,
            min_margin: admissibility(u, p, cfg.margin)?,
            stagnated: true,
        });
    }
    let mut alpha = 1.0;
    let mut flat: Option<StepOutcome> = None;
    for _ in 0..=cfg.max_halvings {
        let trial = u.axpy(alpha, delta);
        if let Ok(min_margin) = admissibility(&trial, p, cfg.margin) {
            let res = residual(&trial, p)?;
            let new = res.combined_sup();
            if new < current {
                let stagnated = stalls(current, new);
                return Ok(StepOutcome {
                    alpha,
                    field: trial,
                    residual: res,
                    min_margin,
                    stagnated,
                });
            }
            if flat.is_none() && new.is_finite() && (new - current).abs() <= 1e-14 * current.max(1.0) {
                flat = Some(StepOutcome {
                    alpha,
                    field: trial,
                    residual: res,
                    min_margin,
                    stagnated: true,
                });
            }
        }
        alpha *= cfg.shrink;
    }
    flat.ok_or_else(|| {
        Error::LineSearch(format!(
            "no admissible decreasing step after {} halvings",
            cfg.max_halvings
        ))
    })
}

fn finish(
    u: &ScalarField,
    status: SolveStatus,
    res: &Residual,
    min_margin: f64,
    history: (Vec<f64>, Vec<f64>, Vec<f64>),
    message: Option<String>,
) -> SolveReport {
    let (residual_history, step_lengths, margin_history) = history;
    SolveReport {
        status,
        converged: status == SolveStatus::Converged,
        iterations: step_lengths.len(),
        residual_history,
        step_lengths,
        margin_history,
        interior_residual: res.interior_sup,
        boundary_residual: res.boundary_sup,
        sup_u: u.sup_norm(),
        sup_du: sup_gradient(u),
        sup_d2u: sup_hessian(u),
        min_margin,
        eps: None,
        message,
    }
}

/// Damped Newton from an admissible `u0`.
///
/// `Err` only for invalid input (bad configuration, inadmissible `u0`);
/// solver failures come back as a report with the matching status.
pub fn newton_solve(p: &ProblemSpec, u0: &ScalarField, cfg: &SolverConfig) -> Result<(ScalarField, SolveReport)> {
    cfg.validate()?;
    if u0.values().len() != p.domain.node_count() {
        return Err(Error::InvalidProblem("initial guess does not match the grid".into()));
    }
    let mut margin = admissibility(u0, p, cfg.margin)?;
    let mut u = u0.clone();
    let mut res = residual(&u, p)?;
    let mut residuals = vec![res.combined_sup()];
    let mut steps = Vec::new();
    let mut margins = vec![margin];
    let converged =
        |r: &Residual, m: f64| r.interior_sup <= cfg.tol_r && r.boundary_sup <= cfg.tol_b && m > 0.0;

    loop {
        if converged(&res, margin) {
            let report = finish(&u, SolveStatus::Converged, &res, margin, (residuals, steps, margins), None);
            return Ok((u, report));
        }
        if steps.len() >= cfg.max_iterations {
            let msg = format!("{} Newton steps without convergence", cfg.max_iterations);
            let report = finish(&u, SolveStatus::BudgetExhausted, &res, margin, (residuals, steps, margins), Some(msg));
            return Ok((u, report));
        }
        let delta = match assemble_linearization(&u, p).and_then(|sys| sys.solve()) {
            Ok(d) => d,
            Err(e) => {
                let report = finish(
                    &u,
                    SolveStatus::LinearSolveFailed,
                    &res,
                    margin,
                    (residuals, steps, margins),
                    Some(e.to_string()),
                );
                return Ok((u, report));
            }
        };
        match damped_step(&u, &delta, p, cfg, res.combined_sup()) {
            Ok(step) => {
                let stagnated = step.stagnated;
                // A flat trial stops the loop but is not taken as an iterate.
                if step.residual.combined_sup() < res.combined_sup() {
                    u = step.field;
                    res = step.residual;
                    margin = step.min_margin;
                    residuals.push(res.combined_sup());
                    steps.push(step.alpha);
                    margins.push(margin);
                }
                if stagnated && !converged(&res, margin) {
                    let msg = format!("residual stalled at {:e}", res.combined_sup());
                    let report = finish(&u, SolveStatus::Stagnated, &res, margin, (residuals, steps, margins), Some(msg));
                    return Ok((u, report));
                }
            }
            Err(e) => {
                let report = finish(
                    &u,
                    SolveStatus::LineSearchFailed,
                    &res,
                    margin,
                    (residuals, steps, margins),
                    Some(e.to_string()),
                );
                return Ok((u, report));
            }
        }
    }
}

/// Outcome of a regularization sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// One report per attempted stage, in schedule order.
    pub reports: Vec<SolveReport>,
    /// Solution of the last converged stage.
    pub solution: Option<ScalarField>,
    pub completed: bool,
}

/// Solves with `f̃ + ε` for each `ε` of the schedule, warm-starting every
/// stage from the previous solution. A failed stage ends the sweep.
pub fn regularized_sweep(p: &ProblemSpec, cfg: &SolverConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let schedule = cfg.eps_schedule();
    let mut reports = Vec::new();
    let mut current = initial_guess(&p.regularized(schedule[0]), cfg);
    let mut solution = None;
    for eps in schedule {
        let stage = p.regularized(eps);
        let (u, mut report) = newton_solve(&stage, &current, cfg)?;
        report.eps = Some(eps);
        let ok = report.converged;
        reports.push(report);
        if !ok {
            return Ok(SweepOutcome {
                reports,
                solution,
                completed: false,
            });
        }
        solution = Some(u.clone());
        current = u;
    }
    Ok(SweepOutcome {
        reports,
        solution,
        completed: true,
    })
}

/// The supplied subsolution, or `u0 = a|x − x_c|²/2 + b` with `x_c` the box
/// centre. `a` makes `F̃(D²u0) = max f̃ + ε₀` (the discrete Hessian of a
/// quadratic is exact) and `b` is the largest offset, found by bisection,
/// for which every boundary row satisfies `β·Du0 ≥ φ(x, u0)`.
pub fn initial_guess(p: &ProblemSpec, cfg: &SolverConfig) -> ScalarField {
    if let Some(sub) = &p.subsolution {
        return sub.clone();
    }
    let dom = p.domain.clone();
    let lower = dom.lower().to_vec();
    let upper = dom.upper();
    let centre: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
    let unit = normalized_value(&SymMatrix::identity(p.op.n()), &p.op).expect("identity is admissible");
    let quad = |a: f64, b: f64| {
        let c = centre.clone();
        ScalarField::from_fn(dom.clone(), move |x| {
            a * 0.5 * x.iter().zip(&c).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum::<f64>() + b
        })
    };
    let curvature = |u: &ScalarField| {
        let top = dom
            .interior_nodes()
            .iter()
            .map(|&node| (p.data.rhs)(&dom.coords(node), u.values()[node]))
            .fold(f64::NEG_INFINITY, f64::max);
        if top > 0.0 {
            (top + cfg.eps0) / unit
        } else {
            1.0
        }
    };
    let min_boundary = |u: &ScalarField| {
        crate::grid::boundary_residual(u, p)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    };

    let mut a = curvature(&quad(1.0, 0.0));
    let mut b = 0.0;
    for _ in 0..3 {
        // The boundary residual decreases in b because φ_z ≥ γ₀ > 0.
        let g = |b: f64| min_boundary(&quad(a, b));
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut guard = 0;
        while !(g(lo) >= 0.0) && guard < 60 {
            lo *= 2.0;
            guard += 1;
        }
        guard = 0;
        while g(hi) >= 0.0 && guard < 60 {
            hi *= 2.0;
            guard += 1;
        }
        if g(lo) >= 0.0 && g(hi) < 0.0 {
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if g(mid) >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            b = lo;
        }
        let next = curvature(&quad(a, b));
        if next <= a {
            break;
        }
        a = next;
    }
    quad(a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    /// Interior inequality and one-sided boundary inequality both hold.
    pub passes: bool,
    pub interior_ok: bool,
    /// `β·Dū − φ(x, ū) ≥ −tol_b` at every boundary node.
    pub boundary_ok: bool,
    /// `|β·Dū − φ(x, ū)| ≤ tol_b` at every boundary node.
    pub boundary_equality: bool,
    /// `min (F̃(D²ū) − f̃(x, ū))`.
    pub min_interior_margin: f64,
    /// `min (β·Dū − φ(x, ū))`.
    pub min_boundary_margin: f64,
    pub max_boundary_defect: f64,
}

/// Checks `F̃(D²ū) ≥ f̃(x, ū) − tol_r` inside and `β·Dū ≥ φ(x, ū) − tol_b`
/// on the boundary; the second is the direction the comparison argument
/// uses with inner normals. Whether the boundary rows hold with equality is
/// reported separately.
pub fn subsolution_check(sub: &ScalarField, p: &ProblemSpec, cfg: &SolverConfig) -> Result<SubsolutionReport> {
    admissibility(sub, p, AdmissibilityMargin::Absolute(0.0))?;
    let interior = crate::grid::interior_residual(sub, p)?;
    let boundary = crate::grid::boundary_residual(sub, p);
    let min_interior_margin = interior.iter().copied().fold(f64::INFINITY, f64::min);
    let min_boundary_margin = boundary.iter().copied().fold(f64::INFINITY, f64::min);
    let max_boundary_defect = boundary.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
    let interior_ok = min_interior_margin >= -cfg.tol_r;
    let boundary_ok = min_boundary_margin >= -cfg.tol_b;
    Ok(SubsolutionReport {
        passes: interior_ok && boundary_ok,
        interior_ok,
        boundary_ok,
        boundary_equality: max_boundary_defect <= cfg.tol_b,
        min_interior_margin,
        min_boundary_margin,
        max_boundary_defect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `u ≥ ū − tol` everywhere.
    pub holds: bool,
    /// `min (u − ū)`.
    pub min_gap: f64,
    pub max_node: usize,
    pub max_value: f64,
    /// `−φ̄(x₀, 0)/γ₀` at the maximizing node when `max u > 0`, where `φ̄` is
    /// the face average; `None` otherwise or when the maximum is interior.
    pub c0_bound: Option<f64>,
    pub c0_holds: bool,
}

/// Compares a converged solution `u` with a subsolution `ū`.
///
/// Violated hypotheses (`f̃_z < 0`, `φ_z < γ₀`, `ū` not a subsolution, `u`
/// not converged) are returned as [`Error::Precondition`]; a failed
/// comparison is a report with `holds = false`.
pub fn comparison_check(
    u: &ScalarField,
    sub: &ScalarField,
    p: &ProblemSpec,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<ComparisonReport> {
    let dom = &p.domain;
    for field in [u, sub] {
        for node in 0..dom.node_count() {
            let x = dom.coords(node);
            let z = field.values()[node];
            if (p.data.rhs_z)(&x, z) < 0.0 {
                return Err(Error::Precondition(format!("f_z < 0 at node {node}")));
            }
            if let Some(b) = dom.boundary_node(node) {
                for f in &b.faces {
                    if (p.data.bc_z)(&x, &f.normal, z) < p.gamma0 {
                        return Err(Error::Precondition(format!("phi_z < gamma0 at node {node}")));
                    }
                }
            }
        }
    }
    let sub_report = subsolution_check(sub, p, cfg)
        .map_err(|e| Error::Precondition(format!("subsolution not admissible: {e}")))?;
    if !sub_report.passes {
        return Err(Error::Precondition("the comparison function is not a subsolution".into()));
    }
    let res = residual(u, p).map_err(|e| Error::Precondition(format!("solution not admissible: {e}")))?;
    if res.interior_sup > cfg.tol_r || res.boundary_sup > cfg.tol_b {
        return Err(Error::Precondition(format!(
            "solution not converged (residuals {:e}, {:e})",
            res.interior_sup, res.boundary_sup
        )));
    }

    let min_gap = u
        .values()
        .iter()
        .zip(sub.values())
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    let (max_node, max_value) = u
        .values()
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let mut c0_bound = None;
    let mut c0_holds = true;
    if max_value > 0.0 {
        match dom.boundary_node(max_node) {
            Some(b) => {
                let x = dom.coords(max_node);
                let phi0 = b.faces.iter().map(|f| (p.data.bc)(&x, &f.normal, 0.0)).sum::<f64>() / b.faces.len() as f64;
                let bound = -phi0 / p.gamma0;
                c0_holds = max_value <= bound + tol;
                c0_bound = Some(bound);
            }
            None => c0_holds = false,
        }
    }
    Ok(ComparisonReport {
        holds: min_gap >= -tol,
        min_gap,
        max_node,
        max_value,
        c0_bound,
        c0_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridDomain, ProblemData};
    use crate::hessop::{OperatorSpec, Sign};
    use std::sync::Arc;

    fn manufactured(cells: usize) -> ProblemSpec {
        let dom = Arc::new(GridDomain::unit_box(2, cells).unwrap());
        let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
        let data = ProblemData::new(
            |_, _| 1.5,
            |_, _| 0.0,
            |x, nu, z| nu[0] * x[0] + nu[1] * x[1] + z - 0.5 * (x[0] * x[0] + x[1] * x[1]),
            |_, _, _| 1.0,
        );
        ProblemSpec::new(dom, op, data, 1.0).unwrap()
    }

    fn exact(p: &ProblemSpec) -> ScalarField {
        ScalarField::from_fn(p.domain.clone(), |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }

    #[test]
    fn schedule_defaults() {
        let s = SolverConfig::default().eps_schedule();
        assert_eq!(s.len(), 5);
        assert!((s[4] - 1e-6).abs() < 1e-18);
        let one = SolverConfig {
            eps_final: 1e-2,
            ..SolverConfig::default()
        };
        assert_eq!(one.eps_schedule(), vec![1e-2]);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { tol_r: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { eps_final: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { margin: AdmissibilityMargin::Relative(-1.0), ..Default::default() }
            .validate()
            .is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn manufactured_problem_converges() {
        let p = manufactured(8);
        let cfg = SolverConfig::default();
        let u0 = initial_guess(&p, &cfg);
        let (u, rep) = newton_solve(&p, &u0, &cfg).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(u.sup_distance(&exact(&p)) < 1e-9);
        for w in rep.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(rep.margin_history.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn zero_step_is_stagnation() {
        let p = manufactured(4);
        let u = exact(&p);
        let zeros = vec![0.0; p.domain.node_count()];
        let out = damped_step(&u, &zeros, &p, &SolverConfig::default(), 1.0).unwrap();
        assert_eq!(out.alpha, 1.0);
        assert!(out.stagnated);
    }

    #[test]
    fn cone_exiting_step_is_damped() {
        // Plus form, n = 2, k = 2: admissible iff D²u has trace > 0 and
        // det(U) > 0. A step of −2|x|²/2·… pushes D²u = I to −I at α = 1
        // (trace negative) and to −I/2 at α = 1/2; α = 1/4 leaves I/4.
        let p = manufactured(4);
        let u = exact(&p);
        let delta: Vec<f64> = u.values().iter().map(|v| -5.0 * v).collect();
        let current = residual(&u, &p).unwrap().combined_sup() + 10.0;
        let out = damped_step(&u, &delta, &p, &SolverConfig::default(), current).unwrap();
        assert_eq!(out.alpha, 0.125);
        // 1 − 5α > 0 first at α = 1/8.
        assert!(!out.stagnated);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let p = manufactured(8);
        let cfg = SolverConfig {
            max_iterations: 1,
            ..Default::default()
        };
        // The isotropic ansatz is corrected exactly in one step (F̃ is linear
        // along rays), so start from an anisotropic quadratic.
        let u0 = ScalarField::from_fn(p.domain.clone(), |x| x[0] * x[0] + 0.3 * x[1] * x[1]);
        let (_, rep) = newton_solve(&p, &u0, &cfg).unwrap();
        assert_eq!(rep.status, SolveStatus::BudgetExhausted);
        assert_eq!(rep.iterations, 1);
        assert!(!rep.converged);
    }

    #[test]
    fn inadmissible_start_is_an_error() {
        let p = manufactured(4);
        let u0 = ScalarField::from_fn(p.domain.clone(), |x| -x[0] * x[0]);
        assert!(matches!(
            newton_solve(&p, &u0, &SolverConfig::default()),
            Err(Error::NotAdmissible { .. })
        ));
    }

    #[test]
    fn initial_guess_minus_form_curvature() {
        let dom = Arc::new(GridDomain::unit_box(3, 4).unwrap());
        let op = OperatorSpec::new(3, 2, 0, 1.0, Sign::Minus).unwrap();
        let data = ProblemData::new(|_, _| 1.0, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
        let p = ProblemSpec::new(dom, op, data, 1.0).unwrap();
        let cfg = SolverConfig::default();
        let u0 = initial_guess(&p, &cfg);
        let h = hessian_at_node(&u0, p.domain.interior_nodes()[0]).unwrap();
        let a = (1.0 + cfg.eps0) / 12.0_f64.sqrt();
        assert!((h.get(0, 0) - a).abs() < 1e-9);
        let sub = subsolution_check(&u0, &p, &cfg).unwrap();
        assert!(sub.interior_ok && sub.boundary_ok, "{sub:?}");
    }

    #[test]
    fn supplied_subsolution_is_returned() {
        let p = manufactured(4);
        let sub = exact(&p);
        let p = p.with_subsolution(sub.clone()).unwrap();
        assert_eq!(initial_guess(&p, &SolverConfig::default()).values(), sub.values());
    }

    #[test]
    fn shifted_exact_solution_is_a_subsolution() {
        let p = manufactured(8);
        let cfg = SolverConfig::default();
        let u = exact(&p);
        let at = subsolution_check(&u, &p, &cfg).unwrap();
        assert!(at.passes && at.boundary_equality);
        let shifted = u.axpy(-1.0, &vec![1.0; p.domain.node_count()]);
        let s = subsolution_check(&shifted, &p, &cfg).unwrap();
        assert!(s.passes);
        assert!(!s.boundary_equality);
        assert!((s.max_boundary_defect - 1.0).abs() < 1e-12);

        let c = comparison_check(&u, &shifted, &p, &cfg, 1e-6).unwrap();
        assert!(c.holds && c.c0_holds);
        assert!((c.min_gap - 1.0).abs() < 1e-12);
        assert_eq!(c.c0_bound, Some(2.0));
        let same = comparison_check(&u, &u, &p, &cfg, 1e-6).unwrap();
        assert!(same.holds);
    }

    #[test]
    fn comparison_preconditions_are_distinct() {
        let p = manufactured(4);
        let cfg = SolverConfig::default();
        let u = exact(&p);
        let above = u.axpy(1.0, &vec![1.0; p.domain.node_count()]);
        assert!(matches!(comparison_check(&u, &above, &p, &cfg, 1e-6), Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_datum_has_zero_solution() {
        let dom = Arc::new(GridDomain::unit_box(2, 8).unwrap());
        let op = OperatorSpec::new(2, 2, 0, 1.0, Sign::Plus).unwrap();
        let data = ProblemData::new(|_, _| 0.0, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
        let p = ProblemSpec::new(dom, op, data, 1.0).unwrap();
        let cfg = SolverConfig::default();
        let out = regularized_sweep(&p, &cfg).unwrap();
        assert!(out.completed);
        assert_eq!(out.reports.len(), 5);
        assert!(out.solution.unwrap().sup_norm() < 1e-2);
    }
}
