//! Data expressions over `x1..x3`, `n1..n3` and `z`.
//!
//! Parsing is done by `meval`; the variable and function set is fixed here so
//! that a typo fails at config time rather than mid-solve.

use meval::{ContextProvider, Expr, FuncEvalError};

/// Which variables an expression may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// `f̃` and `f̃_z`: `x`, `z`.
    Interior,
    /// `φ` and `φ_z`: `x`, inner normal `n`, `z`.
    Boundary,
    /// Components of `β`: `x`, `n`.
    Oblique,
    /// `ū`: `x` only.
    Field,
}

impl Scope {
    fn has_normal(self) -> bool {
        matches!(self, Scope::Boundary | Scope::Oblique)
    }

    fn has_z(self) -> bool {
        matches!(self, Scope::Interior | Scope::Boundary)
    }
}

struct Vars<'a> {
    x: &'a [f64],
    n: Option<&'a [f64]>,
    z: Option<f64>,
}

fn axis(name: &str, prefix: char) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    match rest {
        "1" => Some(0),
        "2" => Some(1),
        "3" => Some(2),
        _ => None,
    }
}

impl ContextProvider for Vars<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        if name == "z" {
            return self.z;
        }
        if name == "pi" {
            return Some(std::f64::consts::PI);
        }
        if let Some(a) = axis(name, 'x') {
            return self.x.get(a).copied();
        }
        if let Some(a) = axis(name, 'n') {
            return self.n.and_then(|n| n.get(a).copied());
        }
        None
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
        let one = |f: fn(f64) -> f64| match args.len() {
            0 => Err(FuncEvalError::TooFewArguments),
            1 => Ok(f(args[0])),
            _ => Err(FuncEvalError::TooManyArguments),
        };
        match name {
            "sin" => one(f64::sin),
            "cos" => one(f64::cos),
            "exp" => one(f64::exp),
            "abs" => one(f64::abs),
            "sqrt" => one(f64::sqrt),
            "max" if args.len() < 2 => Err(FuncEvalError::TooFewArguments),
            "max" => Ok(args.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            "min" if args.len() < 2 => Err(FuncEvalError::TooFewArguments),
            "min" => Ok(args.iter().copied().fold(f64::INFINITY, f64::min)),
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

/// A parsed data expression.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    expr: Expr,
    scope: Scope,
    dim: usize,
}

impl Expression {
    /// Parses `source` and evaluates it once at a generic point, so unknown
    /// names and wrong arities are reported here.
    pub fn parse(source: &str, scope: Scope, dim: usize) -> Result<Self, String> {
        let expr: Expr = source.parse().map_err(|e| format!("cannot parse `{source}`: {e}"))?;
        let out = Self {
            source: source.to_string(),
            expr,
            scope,
            dim,
        };
        let x = [0.3, 0.4, 0.5];
        let n = [0.0, 1.0, 0.0];
        out.try_eval(&x[..dim], &n[..dim], 0.25)
            .map_err(|e| format!("`{source}`: {e}"))?;
        Ok(out)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    fn try_eval(&self, x: &[f64], n: &[f64], z: f64) -> Result<f64, meval::Error> {
        let vars = Vars {
            x: &x[..self.dim.min(x.len())],
            n: self.scope.has_normal().then_some(n),
            z: self.scope.has_z().then_some(z),
        };
        self.expr.eval_with_context(vars)
    }

    /// Value at `(x, n, z)`; variables outside the scope are ignored. An
    /// evaluation error (impossible after `parse`) yields NaN, which the
    /// solver reports as a non-finite residual.
    pub fn eval(&self, x: &[f64], n: &[f64], z: f64) -> f64 {
        self.try_eval(x, n, z).unwrap_or(f64::NAN)
    }
}
