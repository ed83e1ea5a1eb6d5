//! Seeded random spectra, cone members and symmetric matrices for the
//! property suites.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hessop::{in_admissible_cone, OperatorSpec, Sign, SymMatrix};
use crate::symcone::{cone_report, Spectrum};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-scale, scale]`.
pub fn uniform_spectrum(rng: &mut SampleRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// A positive base vector plus a signed perturbation of random size; the
/// draw is repeated until it lands in `Γ_k`. Large perturbations put many
/// samples close to the cone boundary.
pub fn gamma_k_member(rng: &mut SampleRng, n: usize, k: usize) -> Vec<f64> {
    loop {
        let spread: f64 = rng.random_range(0.0..2.5);
        let level: f64 = 10f64.powf(rng.random_range(-1.0..1.0));
        let v: Vec<f64> = (0..n)
            .map(|_| level * (rng.random_range(0.2..1.5) + spread * rng.random_range(-1.0..1.0)))
            .collect();
        if cone_report(&v, k).member {
            return v;
        }
    }
}

/// `λ ∈ Γ̃_k`: draws `η ∈ Γ_k` and inverts the transform,
/// `σ_1(λ) = σ_1(η)/(γn ± 1)`, `λ_i = ±(η_i − γ σ_1(λ))`.
pub fn admissible_spectrum(rng: &mut SampleRng, spec: &OperatorSpec) -> Spectrum {
    let n = spec.n();
    let s = spec.sign().value();
    loop {
        let eta = gamma_k_member(rng, n, spec.k());
        let trace = eta.iter().sum::<f64>() / spec.trace_coefficient();
        let lambda: Vec<f64> = eta.iter().map(|e| s * (e - spec.gamma() * trace)).collect();
        let lambda = Spectrum::new(lambda).expect("finite sample");
        // Rounding can push boundary samples out; redraw those.
        if in_admissible_cone(&lambda, spec).member {
            return lambda;
        }
    }
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian-like draw,
/// row-major.
pub fn random_rotation(rng: &mut SampleRng, n: usize) -> Vec<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = q[(i, j)];
        }
    }
    out
}

/// `Q diag(λ) Qᵀ` for a random rotation `Q`.
pub fn rotated_matrix(rng: &mut SampleRng, lambda: &[f64]) -> SymMatrix {
    let frame = random_rotation(rng, lambda.len());
    SymMatrix::from_spectral(lambda, &frame)
}

/// Random admissible matrix. With `repeated`, the first two eigenvalues are
/// forced equal (the spectrum is redrawn until the merged one is admissible).
pub fn admissible_matrix(rng: &mut SampleRng, spec: &OperatorSpec, repeated: bool) -> SymMatrix {
    loop {
        let mut lambda = admissible_spectrum(rng, spec).into_values();
        if repeated {
            lambda[1] = lambda[0];
            let s = Spectrum::new(lambda.clone()).expect("finite");
            if !in_admissible_cone(&s, spec).member {
                continue;
            }
        }
        return rotated_matrix(rng, &lambda);
    }
}

/// Every legal `(n, k, l, γ, sign)` for `n` in `dims` and `γ` in `gammas`.
pub fn legal_operators(dims: &[usize], gammas: &[f64]) -> Vec<OperatorSpec> {
    let mut out = Vec::new();
    for &n in dims {
        for k in 1..=n {
            for l in 0..k {
                for &gamma in gammas {
                    for sign in [Sign::Minus, Sign::Plus] {
                        if let Ok(s) = OperatorSpec::new(n, k, l, gamma, sign) {
                            out.push(s);
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_are_members() {
        let mut r = rng(7);
        for _ in 0..200 {
            let v = gamma_k_member(&mut r, 4, 3);
            assert!(cone_report(&v, 3).member);
        }
        let spec = OperatorSpec::new(3, 2, 1, 1.0, Sign::Minus).unwrap();
        for _ in 0..200 {
            let l = admissible_spectrum(&mut r, &spec);
            assert!(in_admissible_cone(&l, &spec).member);
        }
    }

    #[test]
    fn rotation_is_orthogonal() {
        let mut r = rng(1);
        let q = random_rotation(&mut r, 4);
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|m| q[m * 4 + i] * q[m * 4 + j]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repeated_matrix_has_double_eigenvalue() {
        let mut r = rng(3);
        let spec = OperatorSpec::new(3, 2, 0, 2.0, Sign::Plus).unwrap();
        let m = admissible_matrix(&mut r, &spec, true);
        let ev = m.eigenvalues().sorted_descending();
        let v = ev.values();
        let close = (0..2).any(|i| (v[i] - v[i + 1]).abs() < 1e-10 * (1.0 + v[0].abs()));
        assert!(close, "{v:?}");
    }

    #[test]
    fn operator_enumeration() {
        let ops = legal_operators(&[2], &[1.0]);
        // minus: (1,0) only; plus: (1,0), (2,0), (2,1).
        assert_eq!(ops.len(), 4);
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = uniform_spectrum(&mut rng(11), 5, 1.0);
        let b = uniform_spectrum(&mut rng(11), 5, 1.0);
        assert_eq!(a, b);
    }
}
