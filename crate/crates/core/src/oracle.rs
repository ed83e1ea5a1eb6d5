//! Independent reference computations.
//!
//! Nothing here shares a code path with the quantity it checks: symmetric
//! functions are enumerated subset by subset, matrix derivatives are central
//! differences of operator values, the radial solver integrates an ODE on the
//! ball, and the linear case is assembled with its own stencils.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{ProblemSpec, ScalarField};
use crate::hessop::{normalized_value, quotient_value, OperatorSpec, SymMatrix};
use crate::linalg::solve_sparse;
use crate::symcone::Spectrum;

/// Largest `n` accepted by [`sigma_enumeration`].
pub const ENUMERATION_LIMIT: usize = 12;

/// `σ_k` as an explicit sum over all `k`-subsets.
pub fn sigma_enumeration(values: &[f64], k: isize) -> Result<f64> {
    let n = values.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::InvalidSpectrum(format!(
            "enumeration limited to n <= {ENUMERATION_LIMIT}, got {n}"
        )));
    }
    if k < 0 || k as usize > n {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as isize != k {
            continue;
        }
        let mut prod = 1.0;
        for (i, v) in values.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod *= v;
            }
        }
        total += prod;
    }
    Ok(total)
}

/// Central differences of `F` (or `F̃`) with respect to the symmetric entries
/// of `M`. Off-diagonal pairs `(i, j)`, `(j, i)` are perturbed together and
/// the difference is halved. The base step is `1e-5 · (1 + max|M|)`;
/// differences at `h` and `h/2` are Richardson-combined, which removes the
/// `h²` term that dominates near the cone edge.
pub fn fd_matrix_derivative(m: &SymMatrix, spec: &OperatorSpec, normalized: bool) -> Result<SymMatrix> {
    let value = |x: &SymMatrix| {
        if normalized {
            normalized_value(x, spec)
        } else {
            quotient_value(x, spec)
        }
    };
    let base_step = 1e-5 * (1.0 + m.max_abs());
    let n = m.n();
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut step = base_step;
            let mut attempt = 0;
            let d = loop {
                let mut plus = m.clone();
                plus.set(i, j, m.get(i, j) + step);
                let mut minus = m.clone();
                minus.set(i, j, m.get(i, j) - step);
                let mut plus_half = m.clone();
                plus_half.set(i, j, m.get(i, j) + 0.5 * step);
                let mut minus_half = m.clone();
                minus_half.set(i, j, m.get(i, j) - 0.5 * step);
                match (value(&plus), value(&minus), value(&plus_half), value(&minus_half)) {
                    (Ok(fp), Ok(fm), Ok(hp), Ok(hm)) => {
                        let coarse = (fp - fm) / (2.0 * step);
                        let fine = (hp - hm) / step;
                        break (4.0 * fine - coarse) / 3.0;
                    }
                    _ if attempt == 0 => {
                        attempt += 1;
                        step /= 10.0;
                    }
                    _ => {
                        return Err(Error::ProbeExit(format!(
                            "entry ({i},{j}) with step {step}"
                        )))
                    }
                }
            };
            out.set(i, j, if i == j { d } else { d / 2.0 });
        }
    }
    Ok(out)
}

/// `d²/dt² F̃(λ + tξ)` at `t = 0` by second central differences.
///
/// The step starts at `1e-3 · (1 + |λ|)/|ξ|` and is divided by four until two
/// successive differences agree to `1e-5` relative, or to within rounding
/// noise (at most thirteen times);
/// the last pair is Richardson-extrapolated. Near the cone edge the
/// curvature is large and the first steps are far from converged.
pub fn concavity_probe_fd(lambda: &Spectrum, xi: &Spectrum, spec: &OperatorSpec) -> Result<f64> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let xi_norm = norm(xi.values());
    if xi_norm == 0.0 {
        return Ok(0.0);
    }
    let at = |t: f64| {
        let pt: Vec<f64> = lambda
            .values()
            .iter()
            .zip(xi.values())
            .map(|(l, x)| l + t * x)
            .collect();
        crate::hessop::normalized_from_spectrum(&pt, spec)
    };
    let center = at(0.0)?;
    let mut step = 1e-3 * (1.0 + norm(lambda.values())) / xi_norm;
    let mut previous: Option<f64> = None;
    for _ in 0..14 {
        if let (Ok(p), Ok(m)) = (at(step), at(-step)) {
            let d = (p - 2.0 * center + m) / (step * step);
            if let Some(prev) = previous {
                let noise = 1e3 * f64::EPSILON * center.abs() / (step * step);
                if (d - prev).abs() <= 1e-5 * d.abs().max(prev.abs()) + noise {
                    return Ok((16.0 * d - prev) / 15.0);
                }
            }
            previous = Some(d);
        }
        step /= 4.0;
    }
    Err(Error::ProbeExit(format!("line probe did not settle (last step {step:e})")))
}

/// Radially symmetric problem on the ball of radius `R` in `ℝⁿ`:
/// `F̃(u'', u'/r, …, u'/r) = f̃(r)`, `u'(0) = 0`, and the Neumann condition
/// with the inner normal, `−u'(R) = φ(u(R))`.
#[derive(Clone)]
pub struct RadialProblem {
    pub op: OperatorSpec,
    pub radius: f64,
    pub rhs: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `φ(R, z)`.
    pub bc: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Number of geometric steps between `r_min` and `R`.
    pub steps: usize,
}

impl RadialProblem {
    pub fn new(
        op: OperatorSpec,
        radius: f64,
        rhs: impl Fn(f64) -> f64 + Send + Sync + 'static,
        bc: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            op,
            radius,
            rhs: Arc::new(rhs),
            bc: Arc::new(bc),
            steps: 4000,
        }
    }
}

/// Samples of `u`, `u'`, `u''` on `(0, R]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub n: usize,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    /// `u(0)`.
    pub center_value: f64,
}

impl RadialProfile {
    /// Spectrum `(u'', u'/r, …, u'/r)` at sample `i`.
    pub fn spectrum_at(&self, i: usize) -> Vec<f64> {
        let mut s = vec![self.du[i] / self.r[i]; self.n];
        s[0] = self.d2u[i];
        s
    }

    /// Hermite interpolation of `u` at radius `r ≤ R`, using `u(0)` below the
    /// first sample.
    pub fn value_at(&self, r: f64) -> f64 {
        if r <= self.r[0] {
            return self.center_value + (self.u[0] - self.center_value) * (r / self.r[0]).powi(2);
        }
        let j = self.r.partition_point(|&x| x < r).min(self.r.len() - 1);
        let (r0, r1) = (self.r[j - 1], self.r[j]);
        let t = (r - r0) / (r1 - r0);
        // Cubic Hermite on (u, u').
        let h = r1 - r0;
        let (u0, u1, d0, d1) = (self.u[j - 1], self.u[j], self.du[j - 1], self.du[j]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * u0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * u1
            + (t3 - t2) * h * d1
    }
}

/// Extended `F̃` along the first axis: `F̃(t, v, …, v)` or `None` outside the cone.
fn radial_value(op: &OperatorSpec, t: f64, v: f64) -> Option<f64> {
    let mut lam = vec![v; op.n()];
    lam[0] = t;
    crate::hessop::normalized_from_spectrum(&lam, op).ok()
}

/// Solves `F̃(t, v, …, v) = target` for `t`. The admissible `t` form a
/// half-line on which `F̃` increases, so bisection on "admissible and at
/// least `target`" is safe.
fn solve_second_derivative(op: &OperatorSpec, v: f64, target: f64) -> Result<f64> {
    let ok = |t: f64| radial_value(op, t, v).is_some_and(|f| f >= target);
    let mut hi = 1.0_f64.max(4.0 * v.abs()).max(4.0 * target.abs());
    let mut guard = 0;
    while !ok(hi) {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Shooting(format!("no admissible root for v = {v}, target = {target}")));
        }
    }
    let mut lo = -hi;
    guard = 0;
    while ok(lo) {
        lo *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Shooting("operator unbounded below along the profile".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Integrates the radial ODE from `r_min = 1e-6 R` (series start
/// `u' ≈ u''(0) r`) with classical RK4 on a geometric radius grid, then fixes
/// `u(0)` by bisection on the boundary condition.
pub fn radial_solve(problem: &RadialProblem) -> Result<RadialProfile> {
    let op = &problem.op;
    let n = op.n();
    let big_r = problem.radius;
    if !(big_r > 0.0) || problem.steps < 2 {
        return Err(Error::Shooting("radius and step count must be positive".into()));
    }
    let r_min = 1e-6 * big_r;
    let f0 = (problem.rhs)(0.0);
    let unit = radial_value(op, 1.0, 1.0)
        .ok_or_else(|| Error::Shooting("identity Hessian is not admissible".into()))?;
    let curvature0 = if f0 > 0.0 { f0 / unit } else { 0.0 };

    let rhs = |r: f64, w: f64| -> Result<f64> { solve_second_derivative(op, w / r, (problem.rhs)(r)) };

    let ratio = (big_r / r_min).powf(1.0 / problem.steps as f64);
    let mut r = vec![r_min];
    let mut w = vec![curvature0 * r_min];
    let mut integral = vec![0.5 * curvature0 * r_min * r_min];
    let mut d2u = vec![rhs(r_min, w[0])?];
    for j in 0..problem.steps {
        let r0 = r[j];
        let r1 = if j + 1 == problem.steps { big_r } else { r0 * ratio };
        let h = r1 - r0;
        let (w0, i0) = (w[j], integral[j]);
        let k1 = d2u[j];
        let k2 = rhs(r0 + 0.5 * h, w0 + 0.5 * h * k1)?;
        let k3 = rhs(r0 + 0.5 * h, w0 + 0.5 * h * k2)?;
        let k4 = rhs(r1, w0 + h * k3)?;
        let w1 = w0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        // The integral rides along as a second RK4 component with slope w.
        let i1 = i0
            + h / 6.0 * (w0 + 2.0 * (w0 + 0.5 * h * k1) + 2.0 * (w0 + 0.5 * h * k2) + (w0 + h * k3));
        r.push(r1);
        w.push(w1);
        integral.push(i1);
        d2u.push(rhs(r1, w1)?);
    }

    let w_r = *w.last().unwrap();
    let i_r = *integral.last().unwrap();
    // Find u(0) with φ(u(0) + ∫w) = −w(R); φ is increasing in z.
    let g = |c: f64| (problem.bc)(c + i_r) + w_r;
    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while g(lo) > 0.0 {
        lo *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Shooting("boundary condition has no root below".into()));
        }
    }
    guard = 0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Shooting("boundary condition has no root above".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let center = 0.5 * (lo + hi);
    if !g(center).is_finite() {
        return Err(Error::Shooting("boundary data not finite".into()));
    }
    Ok(RadialProfile {
        n,
        u: integral.iter().map(|i| center + i).collect(),
        r,
        du: w,
        d2u,
        center_value: center,
    })
}

/// `k = 1, l = 0`: the operator is `(γn ± 1) Δu`. Solves
/// `(γn ± 1) Δ_h u = f̃(x, u)` with the face-averaged oblique rows in a single
/// sparse solve. `f̃` and `φ` are linearized at `z = 0`, which is exact for
/// data affine in `z`.
pub fn linear_reduction_solve(p: &ProblemSpec) -> Result<ScalarField> {
    if p.op.k() != 1 || p.op.l() != 0 {
        return Err(Error::Precondition(format!(
            "linear reduction needs k = 1, l = 0, got k = {}, l = {}",
            p.op.k(),
            p.op.l()
        )));
    }
    let dom = &p.domain;
    let d = dom.dim();
    let h = dom.h();
    let c = p.op.trace_coefficient();
    let count = dom.node_count();
    let mut entries = Vec::new();
    let mut rhs = vec![0.0; count];

    let shift = |node: usize, axis: usize, by: isize| -> usize {
        let mut idx = dom.multi_index(node);
        idx[axis] = (idx[axis] as isize + by) as usize;
        dom.index(&idx)
    };

    for &node in dom.interior_nodes() {
        let x = dom.coords(node);
        let mut diag = -(p.data.rhs_z)(&x, 0.0);
        for a in 0..d {
            entries.push((node, shift(node, a, 1), c / (h * h)));
            entries.push((node, shift(node, a, -1), c / (h * h)));
            diag -= 2.0 * c / (h * h);
        }
        entries.push((node, node, diag));
        rhs[node] = (p.data.rhs)(&x, 0.0);
    }

    for b in dom.boundary_nodes() {
        let node = b.node;
        let x = dom.coords(node);
        let idx = dom.multi_index(node);
        let m = b.faces.len() as f64;
        for f in &b.faces {
            for a in 0..d {
                let beta = f.beta[a] / m;
                if beta == 0.0 {
                    continue;
                }
                let i = idx[a];
                if i == 0 {
                    entries.push((node, node, -1.5 * beta / h));
                    entries.push((node, shift(node, a, 1), 2.0 * beta / h));
                    entries.push((node, shift(node, a, 2), -0.5 * beta / h));
                } else if i == dom.cells()[a] {
                    entries.push((node, node, 1.5 * beta / h));
                    entries.push((node, shift(node, a, -1), -2.0 * beta / h));
                    entries.push((node, shift(node, a, -2), 0.5 * beta / h));
                } else {
                    entries.push((node, shift(node, a, 1), 0.5 * beta / h));
                    entries.push((node, shift(node, a, -1), -0.5 * beta / h));
                }
            }
            entries.push((node, node, -(p.data.bc_z)(&x, &f.normal, 0.0) / m));
            rhs[node] += (p.data.bc)(&x, &f.normal, 0.0) / m;
        }
    }

    let values = solve_sparse(count, &entries, &rhs)?;
    ScalarField::new(dom.clone(), values)
}
