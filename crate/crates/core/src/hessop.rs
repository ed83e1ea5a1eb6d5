//! The Hessian quotient operator `F(M) = σ_k(η)/σ_l(η)` and its normalized
//! form `F̃ = F^{1/(k-l)}`.
//!
//! `η` is the spectrum of `U = γ tr(M) I ± M`, i.e. `η_i = γ σ_1(λ) ± λ_i`
//! where `λ` is the spectrum of `M`. Every evaluation goes through `λ`; the
//! matrix derivative is assembled by spectral calculus,
//!
//! ```text
//! ∂F/∂M = Q diag(∂f/∂λ) Qᵀ,   ∂f/∂λ_q = γ Σ_p g_p ± g_q,   g_p = ∂(σ_k/σ_l)/∂η_p,
//! ```
//!
//! which is `γ (Σ g) I ± Q diag(g) Qᵀ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symcone::{all_elementary_symmetric, cone_report, sigma_without, ConeReport, Spectrum};

/// Which of the two matrix forms `γ tr(M) I − M` / `γ tr(M) I + M` is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }
}

/// `(n, k, l, γ, sign)`, validated once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    n: usize,
    k: usize,
    l: usize,
    gamma: f64,
    sign: Sign,
}

impl OperatorSpec {
    /// Rules: `0 ≤ l < k ≤ n`. The minus form needs `γ ≥ 1` and `k < n`,
    /// except that `k = n` is allowed when `γ > 1`. The plus form needs `γ > 0`.
    pub fn new(n: usize, k: usize, l: usize, gamma: f64, sign: Sign) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidOperator(format!("dimension n = {n} must be at least 2")));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidOperator(format!("gamma = {gamma} is not finite")));
        }
        if l >= k {
            return Err(Error::InvalidOperator(format!("need l < k, got k = {k}, l = {l}")));
        }
        if k > n {
            return Err(Error::InvalidOperator(format!("need k <= n, got k = {k}, n = {n}")));
        }
        match sign {
            Sign::Minus => {
                if gamma < 1.0 {
                    return Err(Error::InvalidOperator(format!(
                        "minus form needs gamma >= 1, got {gamma}"
                    )));
                }
                if k == n && gamma <= 1.0 {
                    return Err(Error::InvalidOperator(format!(
                        "minus form needs k < n (k = n = {n} is only allowed when gamma > 1)"
                    )));
                }
            }
            Sign::Plus => {
                if gamma <= 0.0 {
                    return Err(Error::InvalidOperator(format!(
                        "plus form needs gamma > 0, got {gamma}"
                    )));
                }
            }
        }
        Ok(Self { n, k, l, gamma, sign })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// `k − l`, the homogeneity degree of `F`.
    pub fn degree(&self) -> usize {
        self.k - self.l
    }

    /// `σ_1(η) = (γ n ± 1) σ_1(λ)`; for `k = 1, l = 0` this is the whole operator.
    pub fn trace_coefficient(&self) -> f64 {
        self.gamma * self.n as f64 + self.sign.value()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::InvalidSpectrum(format!(
                "length {len} does not match operator dimension {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Dense symmetric `n × n` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(Error::InvalidMatrix(format!("entry ({i},{j}) is not symmetric")));
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// Builds from the upper triangle of `f`, mirrored.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Self { n, entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// `Σ_i values[i] q_i q_iᵀ`, with `q_i` the columns of the row-major
    /// `frame`. Written as `c·I + Σ (values[i] − c) q_i q_iᵀ` with `c` the
    /// smallest value, so equal values give an exact multiple of `I`.
    pub fn from_spectral(values: &[f64], frame: &[f64]) -> Self {
        let n = values.len();
        let c = values.iter().copied().fold(f64::INFINITY, f64::min);
        Self::from_fn(n, |a, b| {
            let spread: f64 = (0..n)
                .map(|i| (values[i] - c) * frame[a * n + i] * frame[b * n + i])
                .sum();
            if a == b {
                c + spread
            } else {
                spread
            }
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Sets `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
        self.entries[j * self.n + i] = v;
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|v| t * v).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `Σ_ij A_ij B_ij`.
    pub fn contract(&self, other: &SymMatrix) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn eigenvalues(&self) -> Spectrum {
        spectral_decomposition(self).eigenvalues
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }
}

/// Eigenvalues (descending), eigenframe and clusters of nearly equal eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub eigenvalues: Spectrum,
    /// Row-major `n × n`; column `i` is the eigenvector of `eigenvalues[i]`.
    pub frame: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
}

/// Relative gap below which neighbouring eigenvalues are treated as one cluster.
pub const CLUSTER_THRESHOLD: f64 = 1e-12;

pub fn spectral_decomposition(m: &SymMatrix) -> SpectralData {
    let n = m.n;
    let eig = m.to_dmatrix().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut frame = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            frame[row * n + col] = eig.eigenvectors[(row, src)];
        }
    }
    let split = CLUSTER_THRESHOLD * m.frobenius_norm();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match clusters.last_mut() {
            Some(last) if (values[*last.last().unwrap()] - values[i]).abs() <= split => last.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    SpectralData {
        eigenvalues: Spectrum::new(values).expect("symmetric eigenvalues are finite"),
        frame,
        clusters,
    }
}

/// `η_i = γ σ_1(λ) ± λ_i` on a raw slice.
pub fn transform(values: &[f64], spec: &OperatorSpec) -> Vec<f64> {
    let trace: f64 = values.iter().sum();
    let s = spec.sign.value();
    values.iter().map(|&v| spec.gamma * trace + s * v).collect()
}

pub fn transformed_spectrum(lambda: &Spectrum, spec: &OperatorSpec) -> Spectrum {
    Spectrum::new(transform(lambda.values(), spec)).expect("finite input gives finite output")
}

/// `λ ∈ Γ̃_k`, i.e. `η(λ) ∈ Γ_k`.
pub fn in_admissible_cone(lambda: &Spectrum, spec: &OperatorSpec) -> ConeReport {
    cone_report(&transform(lambda.values(), spec), spec.k)
}

/// Value and first derivatives of `σ_k/σ_l` at a transformed spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientEval {
    pub value: f64,
    /// `g_p = ∂(σ_k/σ_l)/∂η_p`.
    pub eta_gradient: Vec<f64>,
    pub cone: ConeReport,
}

/// Evaluates `σ_k(η)/σ_l(η)` and `∂/∂η`; errors outside `Γ_k`.
pub fn quotient_at_eta(eta: &[f64], spec: &OperatorSpec) -> Result<QuotientEval> {
    let (k, l) = (spec.k, spec.l);
    let cone = cone_report(eta, k);
    if !cone.member {
        return Err(Error::ConeViolation { k, margins: cone.margins });
    }
    let all = all_elementary_symmetric(eta);
    let (sk, sl) = (all[k], all[l]);
    if sl <= 0.0 {
        return Err(Error::ConeViolation { k, margins: cone.margins });
    }
    let eta_gradient = (0..eta.len())
        .map(|p| {
            let dk = sigma_without(eta, k as isize - 1, p);
            let dl = sigma_without(eta, l as isize - 1, p);
            (dk * sl - sk * dl) / (sl * sl)
        })
        .collect();
    Ok(QuotientEval {
        value: sk / sl,
        eta_gradient,
        cone,
    })
}

/// `∂f/∂λ_q = γ Σ_p g_p ± g_q`.
pub fn pull_back_gradient(eta_gradient: &[f64], spec: &OperatorSpec) -> Vec<f64> {
    let total: f64 = eta_gradient.iter().sum();
    let s = spec.sign.value();
    eta_gradient.iter().map(|g| spec.gamma * total + s * g).collect()
}

/// `σ_k/σ_l` at the transformed spectrum of `λ`.
pub fn quotient_from_spectrum(lambda: &[f64], spec: &OperatorSpec) -> Result<f64> {
    spec.check_dim(lambda.len())?;
    let eta = transform(lambda, spec);
    let cone = cone_report(&eta, spec.k);
    if !cone.member {
        return Err(Error::ConeViolation { k: spec.k, margins: cone.margins });
    }
    let all = all_elementary_symmetric(&eta);
    Ok(all[spec.k] / all[spec.l])
}

pub fn normalized_from_spectrum(lambda: &[f64], spec: &OperatorSpec) -> Result<f64> {
    Ok(quotient_from_spectrum(lambda, spec)?.powf(1.0 / spec.degree() as f64))
}

pub fn quotient_value(m: &SymMatrix, spec: &OperatorSpec) -> Result<f64> {
    spec.check_dim(m.n)?;
    quotient_from_spectrum(spectral_decomposition(m).eigenvalues.values(), spec)
}

pub fn normalized_value(m: &SymMatrix, spec: &OperatorSpec) -> Result<f64> {
    Ok(quotient_value(m, spec)?.powf(1.0 / spec.degree() as f64))
}

/// Value, matrix gradient and cone margins at one matrix, from a single
/// eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorEval {
    /// `F` or `F̃`, depending on the `normalized` flag.
    pub value: f64,
    pub gradient: SymMatrix,
    pub cone: ConeReport,
}

pub fn evaluate(m: &SymMatrix, spec: &OperatorSpec, normalized: bool) -> Result<OperatorEval> {
    spec.check_dim(m.n)?;
    let sd = spectral_decomposition(m);
    let eta = transform(sd.eigenvalues.values(), spec);
    let q = quotient_at_eta(&eta, spec)?;
    let mut d_lambda = pull_back_gradient(&q.eta_gradient, spec);
    for cluster in sd.clusters.iter().filter(|c| c.len() > 1) {
        let mean = cluster.iter().map(|&i| d_lambda[i]).sum::<f64>() / cluster.len() as f64;
        for &i in cluster {
            d_lambda[i] = mean;
        }
    }
    let mut gradient = SymMatrix::from_spectral(&d_lambda, &sd.frame);
    let mut value = q.value;
    if normalized {
        let m = spec.degree() as f64;
        let outer = q.value.powf(1.0 / m - 1.0) / m;
        gradient = gradient.scaled(outer);
        value = q.value.powf(1.0 / m);
    }
    Ok(OperatorEval {
        value,
        gradient,
        cone: q.cone,
    })
}

/// `∂F/∂M_ij` (or `∂F̃/∂M_ij` when `normalized`).
pub fn gradient_matrix(m: &SymMatrix, spec: &OperatorSpec, normalized: bool) -> Result<SymMatrix> {
    Ok(evaluate(m, spec, normalized)?.gradient)
}

/// Second-order behaviour of `F` and `F̃` along the line `λ + tξ` at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcavityProbe {
    /// `F̃(λ)`.
    pub normalized_value: f64,
    /// `d²F̃/dt²`; non-positive by concavity.
    pub second_derivative: f64,
    pub quotient_value: f64,
    pub quotient_first: f64,
    pub quotient_second: f64,
    /// `(1 − 1/(k−l)) (dF/dt)²/F − d²F/dt²`; non-negative by concavity.
    pub concavity_residual: f64,
}

/// Directional second derivatives along `λ + tξ`.
///
/// Along a line each `σ_j(η(λ + tξ))` is a polynomial in `t`; its Taylor
/// coefficients up to `t²` are carried through the symmetric-function
/// recurrence, so the derivatives are exact up to rounding. A
/// finite-difference version lives in [`crate::oracle::concavity_probe_fd`].
pub fn concavity_probe(lambda: &Spectrum, xi: &Spectrum, spec: &OperatorSpec) -> Result<ConcavityProbe> {
    spec.check_dim(lambda.len())?;
    spec.check_dim(xi.len())?;
    let eta = transform(lambda.values(), spec);
    let cone = cone_report(&eta, spec.k);
    if !cone.member {
        return Err(Error::ConeViolation { k: spec.k, margins: cone.margins });
    }
    let zeta = transform(xi.values(), spec);
    let coeffs = sigma_taylor2(&eta, &zeta);
    let [p0, p1, p2] = coeffs[spec.k];
    let [q0, q1, q2] = coeffs[spec.l];

    let f = p0 / q0;
    let f1 = (p1 - f * q1) / q0;
    let f2 = (2.0 * p2 - 2.0 * f1 * q1 - 2.0 * f * q2) / q0;
    let m = spec.degree() as f64;
    let concavity_residual = (1.0 - 1.0 / m) * f1 * f1 / f - f2;
    let outer = f.powf(1.0 / m - 1.0) / m;
    let second_derivative = outer * (f2 - (1.0 - 1.0 / m) * f1 * f1 / f);
    Ok(ConcavityProbe {
        normalized_value: f.powf(1.0 / m),
        second_derivative,
        quotient_value: f,
        quotient_first: f1,
        quotient_second: f2,
        concavity_residual,
    })
}

/// Taylor coefficients `[c0, c1, c2]` of `σ_j(a + t b)` for `j = 0..=n`.
fn sigma_taylor2(a: &[f64], b: &[f64]) -> Vec<[f64; 3]> {
    let n = a.len();
    let mut e = vec![[0.0; 3]; n + 1];
    e[0] = [1.0, 0.0, 0.0];
    for i in 0..n {
        for j in (1..=i + 1).rev() {
            let prev = e[j - 1];
            e[j][0] += a[i] * prev[0];
            e[j][1] += a[i] * prev[1] + b[i] * prev[0];
            e[j][2] += a[i] * prev[2] + b[i] * prev[1];
        }
    }
    e
}

/// Ordering and positivity structure of `∂F/∂λ` and `∂F/∂η` at one spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    /// `λ` sorted descending.
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub value: f64,
    /// `∂F/∂λ_i`.
    pub d_lambda: Vec<f64>,
    /// `∂F/∂η_i`.
    pub d_eta: Vec<f64>,
    /// `∂F/∂λ_i` nondecreasing in `i`.
    pub item1: bool,
    /// `∂F/∂η_i` nonincreasing in `i`, read literally.
    pub item2_literal: bool,
    /// `∂F/∂η` ordered opposite to `η` (`η_i < η_j ⇒ ∂F/∂η_i ≥ ∂F/∂η_j`).
    /// Coincides with `item2_literal` for the minus form.
    pub item2: bool,
    /// `min_i ∂F/∂λ_i / Σ_j ∂F/∂λ_j`.
    pub min_share: f64,
    /// `Σ_j ∂F/∂λ_j / F^{1 − 1/(k−l)}`.
    pub sum_ratio: f64,
    /// `min_share · (nγ − 1)/(2γ − 1)`: the constant the third ordering
    /// item would need (minus form only).
    pub implied_item3_constant: Option<f64>,
    pub ratios_positive: bool,
}

/// Relative slack for the ordering flags.
pub const ORDER_SLACK: f64 = 1e-12;

pub fn ellipticity_report(lambda: &Spectrum, spec: &OperatorSpec) -> Result<EllipticityReport> {
    spec.check_dim(lambda.len())?;
    let sorted = lambda.sorted_descending();
    let eta = transform(sorted.values(), spec);
    let q = quotient_at_eta(&eta, spec)?;
    let d_eta = q.eta_gradient.clone();
    let d_lambda = pull_back_gradient(&d_eta, spec);

    let scale_l = d_lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale_e = d_eta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let item1 = d_lambda
        .windows(2)
        .all(|w| w[0] <= w[1] + ORDER_SLACK * scale_l);
    let item2_literal = d_eta
        .windows(2)
        .all(|w| w[0] + ORDER_SLACK * scale_e >= w[1]);
    let mut by_eta: Vec<usize> = (0..eta.len()).collect();
    by_eta.sort_by(|&a, &b| eta[a].total_cmp(&eta[b]));
    let item2 = by_eta
        .windows(2)
        .all(|w| d_eta[w[0]] + ORDER_SLACK * scale_e >= d_eta[w[1]]);

    let total: f64 = d_lambda.iter().sum();
    let min = d_lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let m = spec.degree() as f64;
    let min_share = min / total;
    let sum_ratio = total / q.value.powf(1.0 - 1.0 / m);
    let implied_item3_constant = match spec.sign {
        Sign::Minus => {
            let g = spec.gamma;
            Some(min_share * (spec.n as f64 * g - 1.0) / (2.0 * g - 1.0))
        }
        Sign::Plus => None,
    };
    Ok(EllipticityReport {
        lambda: sorted.into_values(),
        eta,
        value: q.value,
        d_lambda,
        d_eta,
        item1,
        item2_literal,
        item2,
        min_share,
        sum_ratio,
        implied_item3_constant,
        ratios_positive: min_share > 0.0 && sum_ratio > 0.0,
    })
}
