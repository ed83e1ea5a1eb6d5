//! Finite differences on uniform box grids.
//!
//! Interior nodes carry the normalized equation `F̃(D²u) − f̃(x, u) = 0`,
//! boundary nodes carry the oblique condition `β·Du − φ(x, u) = 0`. Second
//! derivatives are central at interior nodes; first derivatives are central
//! where both neighbours exist and second-order one-sided (3-point)
//! otherwise. All stencils are exact on quadratics.
//!
//! Edges and corners of the box belong to several faces. There the boundary
//! residual is the average of the face residuals, each with that face's `β`
//! and `φ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessop::{evaluate, OperatorSpec, SymMatrix};
use crate::linalg::LinearSystem;
use crate::symcone::ConeReport;

/// `(node, weight)` pairs.
pub type Stencil = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Interior,
    Face,
    Edge,
    Corner,
}

/// One side of the box: the face `x_axis = lower` or `x_axis = upper`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl Face {
    pub fn inner_normal(&self, dim: usize) -> Vec<f64> {
        let mut nu = vec![0.0; dim];
        nu[self.axis] = if self.upper { -1.0 } else { 1.0 };
        nu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub face: Face,
    pub normal: Vec<f64>,
    /// Unit oblique vector for this face at this node.
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    pub faces: Vec<BoundaryFace>,
    /// Normalized average of the face normals.
    pub normal: Vec<f64>,
    /// Normalized average of the face `β` vectors.
    pub beta: Vec<f64>,
}

/// Uniform grid on an axis-aligned box with an oblique field on its boundary.
#[derive(Clone)]
pub struct GridDomain {
    dim: usize,
    lower: Vec<f64>,
    cells: Vec<usize>,
    h: f64,
    beta0: f64,
    kinds: Vec<NodeKind>,
    interior: Vec<usize>,
    boundary: Vec<BoundaryNode>,
    boundary_slot: Vec<Option<usize>>,
}

impl fmt::Debug for GridDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridDomain")
            .field("dim", &self.dim)
            .field("lower", &self.lower)
            .field("cells", &self.cells)
            .field("h", &self.h)
            .field("beta0", &self.beta0)
            .finish_non_exhaustive()
    }
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GridDomain {
    /// Grid with `cells[a]` intervals of width `h` along axis `a`, starting at
    /// `lower`. `beta(x, ν)` gives the oblique direction on the face with inner
    /// normal `ν`; it is normalized to unit length and must satisfy
    /// `⟨β, ν⟩ ≥ β₀` on every face, and for the averaged vectors at edges and
    /// corners.
    pub fn new(
        lower: Vec<f64>,
        cells: Vec<usize>,
        h: f64,
        beta: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
        beta0: f64,
    ) -> Result<Self> {
        let dim = lower.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{2, 3}}")));
        }
        if cells.len() != dim {
            return Err(Error::InvalidGrid("cells and lower corner differ in length".into()));
        }
        if let Some(c) = cells.iter().find(|&&c| c < 3) {
            return Err(Error::InvalidGrid(format!("need at least 3 cells per axis, got {c}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing {h} must be positive")));
        }
        if !(beta0 > 0.0) {
            return Err(Error::InvalidGrid(format!("obliqueness floor {beta0} must be positive")));
        }
        let mut domain = GridDomain {
            dim,
            lower,
            cells,
            h,
            beta0,
            kinds: Vec::new(),
            interior: Vec::new(),
            boundary: Vec::new(),
            boundary_slot: Vec::new(),
        };
        let count = domain.node_count();
        domain.kinds.reserve(count);
        domain.boundary_slot = vec![None; count];
        for node in 0..count {
            let idx = domain.multi_index(node);
            let faces: Vec<Face> = (0..dim)
                .filter_map(|a| {
                    if idx[a] == 0 {
                        Some(Face { axis: a, upper: false })
                    } else if idx[a] == domain.cells[a] {
                        Some(Face { axis: a, upper: true })
                    } else {
                        None
                    }
                })
                .collect();
            let kind = match faces.len() {
                0 => NodeKind::Interior,
                1 => NodeKind::Face,
                2 if dim == 3 => NodeKind::Edge,
                _ => NodeKind::Corner,
            };
            domain.kinds.push(kind);
            if faces.is_empty() {
                domain.interior.push(node);
                continue;
            }
            let x = domain.coords(node);
            let mut bfaces = Vec::with_capacity(faces.len());
            for face in faces {
                let normal = face.inner_normal(dim);
                let raw = beta(&x, &normal);
                let b = (raw.len() == dim)
                    .then(|| unit(&raw))
                    .flatten()
                    .ok_or_else(|| {
                        Error::InvalidGrid(format!("oblique field at node {node} is not a nonzero {dim}-vector"))
                    })?;
                let c = dot(&b, &normal);
                if c < beta0 {
                    return Err(Error::InvalidGrid(format!(
                        "<beta, nu> = {c} below floor {beta0} at node {node}"
                    )));
                }
                bfaces.push(BoundaryFace { face, normal, beta: b });
            }
            let sum = |f: &dyn Fn(&BoundaryFace) -> &Vec<f64>| -> Vec<f64> {
                (0..dim).map(|a| bfaces.iter().map(|bf| f(bf)[a]).sum()).collect()
            };
            let normal = unit(&sum(&|bf| &bf.normal)).expect("distinct axis normals");
            let avg_beta = unit(&sum(&|bf| &bf.beta)).ok_or_else(|| {
                Error::InvalidGrid(format!("face oblique vectors cancel at node {node}"))
            })?;
            let c = dot(&avg_beta, &normal);
            if c < beta0 {
                return Err(Error::InvalidGrid(format!(
                    "averaged <beta, nu> = {c} below floor {beta0} at node {node}"
                )));
            }
            domain.boundary_slot[node] = Some(domain.boundary.len());
            domain.boundary.push(BoundaryNode {
                node,
                faces: bfaces,
                normal,
                beta: avg_beta,
            });
        }
        Ok(domain)
    }

    /// Box `[lower, upper]` with `cells` intervals along the first axis; the
    /// other axes must be integer multiples of the same spacing.
    pub fn new_box(
        lower: Vec<f64>,
        upper: Vec<f64>,
        cells: usize,
        beta: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
        beta0: f64,
    ) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidGrid("box corners differ in length".into()));
        }
        if cells == 0 {
            return Err(Error::InvalidGrid("need at least one cell".into()));
        }
        let h = (upper[0] - lower[0]) / cells as f64;
        let mut per_axis = Vec::with_capacity(lower.len());
        for (a, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            let ratio = (hi - lo) / h;
            let rounded = ratio.round();
            if !(rounded >= 1.0) || (ratio - rounded).abs() > 1e-9 * rounded {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} extent {} is not a multiple of the spacing {h}",
                    hi - lo
                )));
            }
            per_axis.push(rounded as usize);
        }
        Self::new(lower, per_axis, h, beta, beta0)
    }

    /// `[0, 1]^dim` with `cells` intervals per axis and `β = ν`.
    pub fn unit_box(dim: usize, cells: usize) -> Result<Self> {
        Self::new_box(vec![0.0; dim], vec![1.0; dim], cells, &|_, nu| nu.to_vec(), 0.5)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.cells)
            .map(|(lo, &c)| lo + c as f64 * self.h)
            .collect()
    }
    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn node_count(&self) -> usize {
        self.cells.iter().map(|c| c + 1).product()
    }

    /// Linear index, axis 0 fastest.
    pub fn index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim).rev() {
            idx = idx * (self.cells[a] + 1) + multi[a];
        }
        idx
    }

    pub fn multi_index(&self, mut node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let w = self.cells[a] + 1;
            out.push(node % w);
            node /= w;
        }
        out
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .zip(&self.lower)
            .map(|(&i, lo)| lo + i as f64 * self.h)
            .collect()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn boundary_node(&self, node: usize) -> Option<&BoundaryNode> {
        self.boundary_slot.get(node).copied().flatten().map(|s| &self.boundary[s])
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.node_count() {
            return Err(Error::IndexOutOfRange {
                index: node,
                n: self.node_count(),
            });
        }
        Ok(())
    }

    fn stride(&self, axis: usize) -> usize {
        self.cells[..axis].iter().map(|c| c + 1).product()
    }

    /// `∂/∂x_axis` at `node`: central inside, 3-point one-sided at the ends.
    pub fn first_derivative_stencil(&self, node: usize, axis: usize) -> Stencil {
        let i = self.multi_index(node)[axis];
        let s = self.stride(axis);
        let inv = 1.0 / (2.0 * self.h);
        if i == 0 {
            vec![(node, -3.0 * inv), (node + s, 4.0 * inv), (node + 2 * s, -inv)]
        } else if i == self.cells[axis] {
            vec![(node, 3.0 * inv), (node - s, -4.0 * inv), (node - 2 * s, inv)]
        } else {
            vec![(node + s, inv), (node - s, -inv)]
        }
    }

    /// `∂²/∂x_a∂x_b` at `node`. Pure second derivatives use the 3-point
    /// central stencil inside and the 4-point one-sided stencil at the ends;
    /// mixed derivatives are the product of the first-derivative stencils.
    pub fn second_derivative_stencil(&self, node: usize, a: usize, b: usize) -> Stencil {
        if a != b {
            let sa = self.first_derivative_stencil(node, a);
            let mut out = Vec::with_capacity(9);
            for &(na, wa) in &sa {
                for &(nb, wb) in &self.first_derivative_stencil(na, b) {
                    out.push((nb, wa * wb));
                }
            }
            return out;
        }
        let i = self.multi_index(node)[a];
        let s = self.stride(a);
        let inv = 1.0 / (self.h * self.h);
        if i == 0 {
            vec![
                (node, 2.0 * inv),
                (node + s, -5.0 * inv),
                (node + 2 * s, 4.0 * inv),
                (node + 3 * s, -inv),
            ]
        } else if i == self.cells[a] {
            vec![
                (node, 2.0 * inv),
                (node - s, -5.0 * inv),
                (node - 2 * s, 4.0 * inv),
                (node - 3 * s, -inv),
            ]
        } else {
            vec![(node - s, inv), (node, -2.0 * inv), (node + s, inv)]
        }
    }
}

fn apply(stencil: &Stencil, values: &[f64]) -> f64 {
    stencil.iter().map(|&(n, w)| w * values[n]).sum()
}

/// One value per grid node.
#[derive(Debug, Clone)]
pub struct ScalarField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values for {} nodes",
                values.len(),
                domain.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("field has non-finite values".into()));
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..domain.node_count()).map(|n| f(&domain.coords(n))).collect();
        Self { domain, values }
    }

    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let values = vec![0.0; domain.node_count()];
        Self { domain, values }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `self + alpha · step`.
    pub fn axpy(&self, alpha: f64, step: &[f64]) -> ScalarField {
        let values = self.values.iter().zip(step).map(|(u, d)| u + alpha * d).collect();
        ScalarField {
            domain: self.domain.clone(),
            values,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sup |self − other|`.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub type FieldFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type BoundaryFn = Arc<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>;

/// Data of the problem: `f̃(x, z)`, `φ(x, ν, z)` and their `z`-derivatives.
/// `φ` sees the inner normal of the face it is evaluated on.
#[derive(Clone)]
pub struct ProblemData {
    pub rhs: FieldFn,
    pub rhs_z: FieldFn,
    pub bc: BoundaryFn,
    pub bc_z: BoundaryFn,
}

impl ProblemData {
    pub fn new(
        rhs: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        rhs_z: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        bc: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
        bc_z: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            rhs: Arc::new(rhs),
            rhs_z: Arc::new(rhs_z),
            bc: Arc::new(bc),
            bc_z: Arc::new(bc_z),
        }
    }
}

/// Domain, operator, data, `γ₀` and an optional subsolution.
#[derive(Clone)]
pub struct ProblemSpec {
    pub domain: Arc<GridDomain>,
    pub op: OperatorSpec,
    pub data: ProblemData,
    pub gamma0: f64,
    pub subsolution: Option<ScalarField>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("domain", &self.domain)
            .field("op", &self.op)
            .field("gamma0", &self.gamma0)
            .field("subsolution", &self.subsolution.is_some())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new(domain: Arc<GridDomain>, op: OperatorSpec, data: ProblemData, gamma0: f64) -> Result<Self> {
        if op.n() != domain.dim() {
            return Err(Error::InvalidProblem(format!(
                "operator dimension {} differs from grid dimension {}",
                op.n(),
                domain.dim()
            )));
        }
        if !(gamma0 > 0.0) {
            return Err(Error::InvalidProblem(format!("gamma0 = {gamma0} must be positive")));
        }
        Ok(Self {
            domain,
            op,
            data,
            gamma0,
            subsolution: None,
        })
    }

    pub fn with_subsolution(mut self, sub: ScalarField) -> Result<Self> {
        if sub.values().len() != self.domain.node_count() {
            return Err(Error::InvalidProblem("subsolution does not match the grid".into()));
        }
        self.subsolution = Some(sub);
        Ok(self)
    }

    /// Samples the structural hypotheses `f̃ ≥ 0`, `f̃_z ≥ 0`, `φ_z ≥ γ₀` at
    /// every node for each `z` in `z_samples`.
    pub fn validate(&self, z_samples: &[f64]) -> Result<()> {
        let d = &self.data;
        for node in 0..self.domain.node_count() {
            let x = self.domain.coords(node);
            for &z in z_samples {
                let f = (d.rhs)(&x, z);
                if !f.is_finite() || f < 0.0 {
                    return Err(Error::InvalidProblem(format!("f({x:?}, {z}) = {f} is not a finite non-negative value")));
                }
                let fz = (d.rhs_z)(&x, z);
                if !fz.is_finite() || fz < 0.0 {
                    return Err(Error::InvalidProblem(format!("f_z({x:?}, {z}) = {fz} is negative")));
                }
                if let Some(b) = self.domain.boundary_node(node) {
                    for face in &b.faces {
                        let pz = (d.bc_z)(&x, &face.normal, z);
                        let p = (d.bc)(&x, &face.normal, z);
                        if !p.is_finite() || !pz.is_finite() || pz < self.gamma0 {
                            return Err(Error::InvalidProblem(format!(
                                "phi_z({x:?}, {z}) = {pz} below gamma0 = {}",
                                self.gamma0
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Same problem with `f̃` replaced by `f̃ + eps`.
    pub fn regularized(&self, eps: f64) -> ProblemSpec {
        let rhs = self.data.rhs.clone();
        let mut out = self.clone();
        out.data.rhs = Arc::new(move |x: &[f64], z| rhs(x, z) + eps);
        out
    }
}

/// Discrete `D²u` at `node`.
pub fn hessian_at_node(u: &ScalarField, node: usize) -> Result<SymMatrix> {
    let dom = u.domain();
    dom.check_node(node)?;
    let d = dom.dim();
    Ok(SymMatrix::from_fn(d, |a, b| {
        apply(&dom.second_derivative_stencil(node, a, b), u.values())
    }))
}

/// Discrete `Du` at `node`.
pub fn gradient_at_node(u: &ScalarField, node: usize) -> Result<Vec<f64>> {
    let dom = u.domain();
    dom.check_node(node)?;
    Ok((0..dom.dim())
        .map(|a| apply(&dom.first_derivative_stencil(node, a), u.values()))
        .collect())
}

fn admissibility_error(node: usize, err: Error) -> Error {
    match err {
        Error::ConeViolation { margins, .. } => Error::NotAdmissible { node, margins },
        other => other,
    }
}

/// `F̃(D²u) − f̃(x, u)` at each interior node, in `interior_nodes()` order.
pub fn interior_residual(u: &ScalarField, p: &ProblemSpec) -> Result<Vec<f64>> {
    let dom = u.domain();
    dom.interior_nodes()
        .iter()
        .map(|&node| {
            let hess = hessian_at_node(u, node)?;
            let e = evaluate(&hess, &p.op, true).map_err(|e| admissibility_error(node, e))?;
            Ok(e.value - (p.data.rhs)(&dom.coords(node), u.values()[node]))
        })
        .collect()
}

/// Face-averaged `β·Du − φ(x, ν, u)` at each boundary node, in
/// `boundary_nodes()` order.
pub fn boundary_residual(u: &ScalarField, p: &ProblemSpec) -> Vec<f64> {
    let dom = u.domain();
    dom.boundary_nodes()
        .iter()
        .map(|b| {
            let grad = gradient_at_node(u, b.node).expect("boundary node in range");
            let x = dom.coords(b.node);
            let z = u.values()[b.node];
            let total: f64 = b
                .faces
                .iter()
                .map(|f| dot(&f.beta, &grad) - (p.data.bc)(&x, &f.normal, z))
                .sum();
            total / b.faces.len() as f64
        })
        .collect()
}

/// Residuals of both row types, scattered onto nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub values: Vec<f64>,
    pub interior_sup: f64,
    pub boundary_sup: f64,
}

impl Residual {
    pub fn combined_sup(&self) -> f64 {
        self.interior_sup.max(self.boundary_sup)
    }
}

pub fn residual(u: &ScalarField, p: &ProblemSpec) -> Result<Residual> {
    let dom = u.domain();
    let mut values = vec![0.0; dom.node_count()];
    let interior = interior_residual(u, p)?;
    let mut interior_sup: f64 = 0.0;
    for (&node, r) in dom.interior_nodes().iter().zip(&interior) {
        values[node] = *r;
        interior_sup = interior_sup.max(r.abs());
    }
    let mut boundary_sup: f64 = 0.0;
    for (b, r) in dom.boundary_nodes().iter().zip(boundary_residual(u, p)) {
        values[b.node] = r;
        boundary_sup = boundary_sup.max(r.abs());
    }
    Ok(Residual {
        values,
        interior_sup,
        boundary_sup,
    })
}

/// Cone margins of `η(D²u)` at every interior node, in `interior_nodes()` order.
pub fn cone_margins(u: &ScalarField, op: &OperatorSpec) -> Result<Vec<ConeReport>> {
    let dom = u.domain();
    dom.interior_nodes()
        .iter()
        .map(|&node| {
            let hess = hessian_at_node(u, node)?;
            let eta = crate::hessop::transform(hess.eigenvalues().values(), op);
            Ok(crate::symcone::cone_report(&eta, op.k()))
        })
        .collect()
}

/// Newton system `J δ = −R` at `u`.
///
/// Interior rows: `Σ_ab F̃^{ab}(D²u) ∂_ab δ − f̃_z(x, u) δ`.
/// Boundary rows: face average of `β·Dδ − φ_z(x, ν, u) δ`.
pub fn assemble_linearization(u: &ScalarField, p: &ProblemSpec) -> Result<LinearSystem> {
    let dom = u.domain();
    let n = dom.node_count();
    let d = dom.dim();
    let vals = u.values();
    let mut sys = LinearSystem::new(n);

    for &node in dom.interior_nodes() {
        let hess = hessian_at_node(u, node)?;
        let e = evaluate(&hess, &p.op, true).map_err(|e| admissibility_error(node, e))?;
        let x = dom.coords(node);
        for a in 0..d {
            for b in a..d {
                let coeff = if a == b { 1.0 } else { 2.0 } * e.gradient.get(a, b);
                for (col, w) in dom.second_derivative_stencil(node, a, b) {
                    sys.push(node, col, coeff * w);
                }
            }
        }
        sys.push(node, node, -(p.data.rhs_z)(&x, vals[node]));
        sys.rhs[node] = -(e.value - (p.data.rhs)(&x, vals[node]));
    }

    for b in dom.boundary_nodes() {
        let x = dom.coords(b.node);
        let z = vals[b.node];
        let m = b.faces.len() as f64;
        let grad = gradient_at_node(u, b.node)?;
        let mut r = 0.0;
        for f in &b.faces {
            for a in 0..d {
                if f.beta[a] != 0.0 {
                    for (col, w) in dom.first_derivative_stencil(b.node, a) {
                        sys.push(b.node, col, f.beta[a] * w / m);
                    }
                }
            }
            sys.push(b.node, b.node, -(p.data.bc_z)(&x, &f.normal, z) / m);
            r += dot(&f.beta, &grad) - (p.data.bc)(&x, &f.normal, z);
        }
        sys.rhs[b.node] = -r / m;
    }

    sys.compress();
    if let Some(row) = sys.zero_diagonal_row() {
        return Err(Error::SingularRow { row });
    }
    Ok(sys)
}

/// `sup |Du|` over all nodes (Euclidean norm of the discrete gradient).
pub fn sup_gradient(u: &ScalarField) -> f64 {
    (0..u.domain().node_count())
        .map(|n| {
            gradient_at_node(u, n)
                .expect("node in range")
                .iter()
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// `sup |D²u|` over interior nodes (largest absolute Hessian entry).
pub fn sup_hessian(u: &ScalarField) -> f64 {
    u.domain()
        .interior_nodes()
        .iter()
        .map(|&n| hessian_at_node(u, n).expect("node in range").max_abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessop::Sign;

    fn field(dom: &Arc<GridDomain>, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        ScalarField::from_fn(dom.clone(), f)
    }

    #[test]
    fn node_classification() {
        let d2 = GridDomain::unit_box(2, 4).unwrap();
        assert_eq!(d2.node_count(), 25);
        assert_eq!(d2.interior_nodes().len(), 9);
        assert_eq!(d2.boundary_nodes().len(), 16);
        assert_eq!(d2.kind(0), NodeKind::Corner);
        assert_eq!(d2.kind(1), NodeKind::Face);
        let d3 = GridDomain::unit_box(3, 3).unwrap();
        let count = |k| (0..d3.node_count()).filter(|&n| d3.kind(n) == k).count();
        assert_eq!(count(NodeKind::Corner), 8);
        assert_eq!(count(NodeKind::Edge), 12 * 2);
        assert_eq!(count(NodeKind::Face), 6 * 4);
        assert_eq!(count(NodeKind::Interior), 8);
        for n in 0..d3.node_count() {
            assert_eq!(d3.index(&d3.multi_index(n)), n);
        }
    }

    #[test]
    fn corner_beta_is_normalized_average() {
        let d2 = GridDomain::unit_box(2, 4).unwrap();
        let b = d2.boundary_node(0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b.beta[0] - s).abs() < 1e-15 && (b.beta[1] - s).abs() < 1e-15);
        assert_eq!(b.faces.len(), 2);
    }

    #[test]
    fn obliqueness_floor_enforced() {
        // ν plus three times ν rotated by a quarter turn: ⟨β, ν⟩ = 1/√10.
        let tilted = |_: &[f64], nu: &[f64]| vec![nu[0] - 3.0 * nu[1], nu[1] + 3.0 * nu[0]];
        assert!(GridDomain::new_box(vec![0.0; 2], vec![1.0; 2], 4, &tilted, 0.5).is_err());
        assert!(GridDomain::new_box(vec![0.0; 2], vec![1.0; 2], 4, &tilted, 0.3).is_ok());
        let zero = |_: &[f64], _: &[f64]| vec![0.0, 0.0];
        assert!(GridDomain::new_box(vec![0.0; 2], vec![1.0; 2], 4, &zero, 0.3).is_err());
    }

    #[test]
    fn box_extents_must_match_spacing() {
        let nu = |_: &[f64], nu: &[f64]| nu.to_vec();
        assert!(GridDomain::new_box(vec![0.0; 2], vec![1.0, 1.5], 4, &nu, 0.5).is_ok());
        assert!(GridDomain::new_box(vec![0.0; 2], vec![1.0, 1.1], 4, &nu, 0.5).is_err());
        assert!(GridDomain::unit_box(4, 4).is_err());
        assert!(GridDomain::unit_box(2, 2).is_err());
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let dom = Arc::new(GridDomain::new_box(vec![-0.3, 0.2], vec![0.7, 1.2], 5, &|_, nu| nu.to_vec(), 0.5).unwrap());
        let q = |x: &[f64]| 1.5 * x[0] * x[0] - 0.7 * x[0] * x[1] + 2.0 * x[1] * x[1] + 0.3 * x[0] - x[1] + 4.0;
        let u = field(&dom, q);
        for n in 0..dom.node_count() {
            let x = dom.coords(n);
            let h = hessian_at_node(&u, n).unwrap();
            assert!((h.get(0, 0) - 3.0).abs() < 1e-11);
            assert!((h.get(0, 1) + 0.7).abs() < 1e-11);
            assert!((h.get(1, 1) - 4.0).abs() < 1e-11);
            let g = gradient_at_node(&u, n).unwrap();
            assert!((g[0] - (3.0 * x[0] - 0.7 * x[1] + 0.3)).abs() < 1e-12);
            assert!((g[1] - (-0.7 * x[0] + 4.0 * x[1] - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_examples() {
        let dom = Arc::new(GridDomain::unit_box(2, 10).unwrap());
        let sq = field(&dom, |x| x[0] * x[0]);
        let node = dom.index(&[5, 3]);
        let h = hessian_at_node(&sq, node).unwrap();
        assert!((h.get(0, 0) - 2.0).abs() < 1e-13);
        assert_eq!(h.get(0, 1), 0.0);
        let g = gradient_at_node(&sq, node).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        let xy = field(&dom, |x| x[0] * x[1]);
        assert!((hessian_at_node(&xy, node).unwrap().get(0, 1) - 1.0).abs() < 1e-12);
        let lin = field(&dom, |x| 3.0 * x[0]);
        let g = gradient_at_node(&lin, dom.index(&[0, 0])).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-13 && g[1].abs() < 1e-13);
        let c = field(&dom, |_| 2.5);
        assert_eq!(hessian_at_node(&c, node).unwrap().max_abs(), 0.0);
        assert_eq!(gradient_at_node(&c, node).unwrap(), vec![0.0, 0.0]);
        assert!(hessian_at_node(&c, dom.node_count()).is_err());
        assert!(gradient_at_node(&c, dom.node_count()).is_err());
    }

    fn plus_problem(cells: usize) -> ProblemSpec {
        let dom = Arc::new(GridDomain::unit_box(2, cells).unwrap());
        let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
        let data = ProblemData::new(
            |_, _| 1.5,
            |_, _| 0.0,
            |x, nu, z| dot(nu, x) + z - 0.5 * dot(x, x),
            |_, _, _| 1.0,
        );
        ProblemSpec::new(dom, op, data, 1.0).unwrap()
    }

    #[test]
    fn manufactured_residual_vanishes() {
        let p = plus_problem(8);
        let u = field(&p.domain, |x| 0.5 * dot(x, x));
        for r in interior_residual(&u, &p).unwrap() {
            assert!(r.abs() < 1e-12, "{r}");
        }
        for r in boundary_residual(&u, &p) {
            assert!(r.abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn constant_field_boundary_residual() {
        let dom = Arc::new(GridDomain::unit_box(2, 4).unwrap());
        let op = OperatorSpec::new(2, 1, 0, 1.0, Sign::Minus).unwrap();
        let data = ProblemData::new(|_, _| 0.0, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
        let p = ProblemSpec::new(dom.clone(), op, data, 1.0).unwrap();
        let u = field(&dom, |_| 1.75);
        for r in boundary_residual(&u, &p) {
            assert!((r + 1.75).abs() < 1e-14);
        }
        // u ≡ 0 sits on the cone boundary: not admissible.
        assert!(matches!(
            interior_residual(&ScalarField::zeros(dom), &p),
            Err(Error::NotAdmissible { .. })
        ));
    }

    #[test]
    fn zero_datum_zero_residual_on_cone_edge_for_l0() {
        let dom = Arc::new(GridDomain::unit_box(2, 4).unwrap());
        let op = OperatorSpec::new(2, 1, 0, 1.0, Sign::Minus).unwrap();
        let data = ProblemData::new(|_, _| 0.0, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
        let p = ProblemSpec::new(dom.clone(), op, data, 1.0).unwrap();
        let tiny = field(&dom, |x| 1e-9 * dot(x, x));
        for r in interior_residual(&tiny, &p).unwrap() {
            assert!(r.abs() < 1e-8);
        }
    }

    #[test]
    fn tangential_beta_residual_is_finite() {
        let beta = |_: &[f64], nu: &[f64]| vec![nu[0] - 1.5 * nu[1], nu[1] + 1.5 * nu[0]];
        let floor = 1.0 / (1.0_f64 + 2.25).sqrt();
        let dom = Arc::new(GridDomain::new_box(vec![0.0; 2], vec![1.0; 2], 6, &beta, floor * 0.999).unwrap());
        let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
        let data = ProblemData::new(|_, _| 1.0, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
        let p = ProblemSpec::new(dom.clone(), op, data, 1.0).unwrap();
        let u = field(&dom, |x| x[0].sin() + x[1] * x[1]);
        assert!(boundary_residual(&u, &p).iter().all(|r| r.is_finite()));
    }

    #[test]
    fn linear_case_rows_are_scaled_laplacian() {
        let dom = Arc::new(GridDomain::unit_box(3, 4).unwrap());
        let op = OperatorSpec::new(3, 1, 0, 1.0, Sign::Minus).unwrap();
        let data = ProblemData::new(|_, _| 1.0, |_, _| 0.25, |_, _, z| z, |_, _, _| 2.0);
        let p = ProblemSpec::new(dom.clone(), op, data, 1.0).unwrap();
        let u = field(&dom, |x| dot(x, x));
        let sys = assemble_linearization(&u, &p).unwrap();
        let h2 = dom.h() * dom.h();
        let node = dom.index(&[2, 2, 2]);
        let row = sys.row(node);
        assert_eq!(row.len(), 7);
        for (col, v) in row {
            let want = if col == node { -6.0 * 2.0 / h2 - 0.25 } else { 2.0 / h2 };
            assert!((v - want).abs() < 1e-9 * want.abs(), "{col}: {v} vs {want}");
        }
        for b in dom.boundary_nodes() {
            let diag = sys.row(b.node).into_iter().find(|(c, _)| *c == b.node).unwrap().1;
            assert!(diag < -2.0 + 1e-12);
            assert!(sys.row(b.node).len() <= 3 * dom.dim());
        }
    }

    #[test]
    fn validate_rejects_bad_data() {
        let dom = Arc::new(GridDomain::unit_box(2, 4).unwrap());
        let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
        let neg = ProblemData::new(|x, _| x[0] - 0.5, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
        let p = ProblemSpec::new(dom.clone(), op, neg, 1.0).unwrap();
        assert!(p.validate(&[0.0]).is_err());
        let weak = ProblemData::new(|_, _| 1.0, |_, _| 0.0, |_, _, z| 0.5 * z, |_, _, _| 0.5);
        let p = ProblemSpec::new(dom.clone(), op, weak, 1.0).unwrap();
        assert!(p.validate(&[0.0]).is_err());
        let decreasing = ProblemData::new(|_, z| (2.0 - z).max(0.0), |_, _| -1.0, |_, _, z| z, |_, _, _| 1.0);
        let p = ProblemSpec::new(dom, op, decreasing, 1.0).unwrap();
        assert!(p.validate(&[0.0]).is_err());
    }
}
