//! Run configuration: a JSON document with `problem`, `solver` and `output`
//! sections. Unknown keys are rejected; omitted optional keys take the
//! defaults below and are written back out by [`to_json`].

use std::sync::Arc;

use hessquot::grid::{GridDomain, ProblemData, ProblemSpec, ScalarField};
use hessquot::hessop::{OperatorSpec, Sign};
use hessquot::solver::SolverConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expression, Scope};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid config at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

fn invalid(field: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    /// Matrix size; must equal the grid dimension. Defaults to it.
    #[serde(default)]
    pub n: Option<usize>,
    pub k: usize,
    pub l: usize,
    pub gamma: f64,
    /// `-1` or `1`.
    pub sign: i32,
}

fn default_f_z() -> String {
    "0".into()
}

fn default_beta0() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Intervals along the first axis; the spacing is shared by all axes.
    pub cells: usize,
    pub operator: OperatorConfig,
    /// `f̃(x, z)`.
    pub f: String,
    #[serde(default = "default_f_z")]
    pub f_z: String,
    /// `φ(x, n, z)` with `n` the inner normal of the face.
    pub phi: String,
    pub phi_z: String,
    /// Components of `β(x, n)`; the inner normal when absent.
    #[serde(default)]
    pub beta: Option<Vec<String>>,
    /// `ū(x)`, used as the initial iterate and by `check-subsolution`.
    #[serde(default)]
    pub subsolution: Option<String>,
    pub gamma0: f64,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    /// Run the `ε`-sweep instead of a single solve.
    #[serde(default)]
    pub regularize: bool,
}

fn default_dir() -> String {
    "hessquot-out".into()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Write `field.csv`.
    #[serde(default = "yes")]
    pub field_dump: bool,
    /// Write `convergence.csv`.
    #[serde(default = "yes")]
    pub convergence_table: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            field_dump: true,
            convergence_table: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses and validates `text`. Validation builds the whole problem once, so
/// a config that parses here also builds in [`build`].
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        let full = e.to_string();
        let suffix = format!(" at line {line} column {column}");
        let message = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
        if e.is_data() {
            ConfigError::Schema { line, column, message }
        } else {
            ConfigError::Syntax { line, column, message }
        }
    })?;
    build(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text)
}

/// The effective config, defaults included.
pub fn to_json(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

/// A validated problem ready for the solver.
#[derive(Debug, Clone)]
pub struct Built {
    pub problem: ProblemSpec,
    pub subsolution: Option<ScalarField>,
}

/// `z` values at which data are sampled before a run.
pub const Z_SAMPLES: [f64; 3] = [-1.0, 0.0, 1.0];

fn expression(field: &str, text: &str, scope: Scope, dim: usize) -> Result<Arc<Expression>, ConfigError> {
    Expression::parse(text, scope, dim)
        .map(Arc::new)
        .map_err(|e| invalid(field, e))
}

pub fn build(cfg: &RunConfig) -> Result<Built, ConfigError> {
    let p = &cfg.problem;
    let dim = p.dimension;
    if !(2..=3).contains(&dim) {
        return Err(invalid("problem.dimension", format!("{dim} is not 2 or 3")));
    }
    for (name, v) in [("problem.lower", &p.lower), ("problem.upper", &p.upper)] {
        if v.len() != dim {
            return Err(invalid(name, format!("needs {dim} entries, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid(name, "entries must be finite"));
        }
    }
    if p.lower.iter().zip(&p.upper).any(|(a, b)| b <= a) {
        return Err(invalid("problem.upper", "every upper bound must exceed the lower bound"));
    }
    if p.cells < 3 {
        return Err(invalid("problem.cells", format!("{} is below the minimum of 3", p.cells)));
    }

    let o = &p.operator;
    let n = o.n.unwrap_or(dim);
    if n != dim {
        return Err(invalid("problem.operator.n", format!("{n} differs from the dimension {dim}")));
    }
    let sign = match o.sign {
        -1 => Sign::Minus,
        1 => Sign::Plus,
        s => return Err(invalid("problem.operator.sign", format!("{s} is not -1 or 1"))),
    };
    let op = OperatorSpec::new(n, o.k, o.l, o.gamma, sign).map_err(|e| invalid("problem.operator", e))?;
    if !(p.gamma0 > 0.0 && p.gamma0.is_finite()) {
        return Err(invalid("problem.gamma0", format!("{} must be positive", p.gamma0)));
    }
    if !(p.beta0 > 0.0 && p.beta0 <= 1.0) {
        return Err(invalid("problem.beta0", format!("{} must lie in (0, 1]", p.beta0)));
    }
    cfg.solver.validate().map_err(|e| invalid("solver", e))?;
    if cfg.output.dir.is_empty() {
        return Err(invalid("output.dir", "must not be empty"));
    }

    let f = expression("problem.f", &p.f, Scope::Interior, dim)?;
    let f_z = expression("problem.f_z", &p.f_z, Scope::Interior, dim)?;
    let phi = expression("problem.phi", &p.phi, Scope::Boundary, dim)?;
    let phi_z = expression("problem.phi_z", &p.phi_z, Scope::Boundary, dim)?;
    let beta = match &p.beta {
        None => None,
        Some(parts) if parts.len() != dim => {
            return Err(invalid("problem.beta", format!("needs {dim} components, got {}", parts.len())))
        }
        Some(parts) => Some(
            parts
                .iter()
                .enumerate()
                .map(|(i, s)| expression(&format!("problem.beta[{i}]"), s, Scope::Oblique, dim))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    let sub = p
        .subsolution
        .as_deref()
        .map(|s| expression("problem.subsolution", s, Scope::Field, dim))
        .transpose()?;

    let beta_fn = move |x: &[f64], nu: &[f64]| -> Vec<f64> {
        match &beta {
            None => nu.to_vec(),
            Some(parts) => parts.iter().map(|e| e.eval(x, nu, 0.0)).collect(),
        }
    };
    let domain = GridDomain::new_box(p.lower.clone(), p.upper.clone(), p.cells, &beta_fn, p.beta0)
        .map_err(|e| invalid("problem", e))?;
    let domain = Arc::new(domain);

    // Every expression must be finite on the grid nodes and z samples.
    for node in 0..domain.node_count() {
        let x = domain.coords(node);
        for &z in &Z_SAMPLES {
            for (name, e) in [("problem.f", &f), ("problem.f_z", &f_z)] {
                let v = e.eval(&x, &[], z);
                if !v.is_finite() {
                    return Err(invalid(name, format!("non-finite value {v} at x = {x:?}, z = {z}")));
                }
            }
            if let Some(b) = domain.boundary_node(node) {
                for face in &b.faces {
                    for (name, e) in [("problem.phi", &phi), ("problem.phi_z", &phi_z)] {
                        let v = e.eval(&x, &face.normal, z);
                        if !v.is_finite() {
                            return Err(invalid(name, format!("non-finite value {v} at x = {x:?}, z = {z}")));
                        }
                    }
                }
            }
        }
        if let Some(s) = &sub {
            let v = s.eval(&x, &[], 0.0);
            if !v.is_finite() {
                return Err(invalid("problem.subsolution", format!("non-finite value {v} at x = {x:?}")));
            }
        }
    }

    let data = ProblemData::new(
        move |x, z| f.eval(x, &[], z),
        move |x, z| f_z.eval(x, &[], z),
        move |x, nu, z| phi.eval(x, nu, z),
        move |x, nu, z| phi_z.eval(x, nu, z),
    );
    let problem = ProblemSpec::new(domain.clone(), op, data, p.gamma0).map_err(|e| invalid("problem", e))?;
    problem
        .validate(&Z_SAMPLES)
        .map_err(|e| invalid("problem", e))?;
    let subsolution = sub.map(|s| ScalarField::from_fn(domain, |x| s.eval(x, &[], 0.0)));
    Ok(Built { problem, subsolution })
}
