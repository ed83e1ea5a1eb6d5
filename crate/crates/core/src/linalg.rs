//! Sparse square systems and their direct solution.
//!
//! Assembly collects `(row, col, value)` triplets; the factorization is a
//! sparse LU with partial pivoting from `faer`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// `A x = rhs` with `A` held as compressed triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl LinearSystem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
            rhs: vec![0.0; n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    /// Sorts by `(row, col)`, sums duplicates and drops exact zeros, which
    /// would otherwise add fill to the factorization.
    pub fn compress(&mut self) {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out.retain(|e| e.2 != 0.0);
        self.entries = out;
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Non-zero `(col, value)` pairs of one row.
    pub fn row(&self, row: usize) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .filter(|&&(r, _, v)| r == row && v != 0.0)
            .map(|&(_, c, v)| (c, v))
            .collect()
    }

    /// First row whose diagonal entry is zero or missing.
    pub fn zero_diagonal_row(&self) -> Option<usize> {
        let mut diag = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            if r == c {
                diag[r] += v;
            }
        }
        diag.iter().position(|&d| d == 0.0 || !d.is_finite())
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Solves `A x = rhs`. Fails when the factorization breaks down or the
    /// computed solution does not reproduce the right-hand side.
    pub fn solve(&self) -> Result<Vec<f64>> {
        solve_sparse(self.n, &self.entries, &self.rhs)
    }
}

/// Relative residual above which a direct solve is reported as failed.
pub const SOLVE_CHECK: f64 = 1e-8;

pub fn solve_sparse(n: usize, entries: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
    let triplets: Vec<Triplet<usize, usize, f64>> = entries
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let x: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolve("non-finite solution (singular system)".into()));
    }
    let mut ax = vec![0.0; n];
    let mut row_scale = vec![0.0_f64; n];
    for &(r, c, v) in entries {
        ax[r] += v * x[c];
        row_scale[r] += (v * x[c]).abs();
    }
    for i in 0..n {
        let tol = SOLVE_CHECK * (row_scale[i] + rhs[i].abs()).max(f64::MIN_POSITIVE);
        if (ax[i] - rhs[i]).abs() > tol {
            return Err(Error::LinearSolve(format!(
                "residual {} at row {i} exceeds tolerance (ill-conditioned system)",
                (ax[i] - rhs[i]).abs()
            )));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let mut s = LinearSystem::new(3);
        for &(r, c, v) in &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, -2.0), (1, 1, 3.0), (1, 2, 1.0), (2, 2, 2.0), (2, 0, 0.5)] {
            s.push(r, c, v);
        }
        s.rhs = vec![1.0, 2.0, 3.0];
        s.compress();
        let x = s.solve().unwrap();
        let ax = s.apply(&x);
        for (a, b) in ax.iter().zip(&s.rhs) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn duplicates_are_summed() {
        let mut s = LinearSystem::new(2);
        s.push(0, 0, 1.0);
        s.push(0, 0, 2.0);
        s.push(1, 1, 1.0);
        s.compress();
        assert_eq!(s.row(0), vec![(0, 3.0)]);
        assert_eq!(s.zero_diagonal_row(), None);
    }

    #[test]
    fn singular_system_is_reported() {
        let mut s = LinearSystem::new(2);
        s.push(0, 0, 1.0);
        s.push(0, 1, 1.0);
        s.push(1, 0, 1.0);
        s.push(1, 1, 1.0);
        s.rhs = vec![1.0, 2.0];
        s.compress();
        assert!(s.solve().is_err());
        let mut z = LinearSystem::new(2);
        z.push(0, 0, 1.0);
        z.push(1, 0, 1.0);
        assert_eq!(z.zero_diagonal_row(), Some(1));
    }
}
