//! Randomized property suites for the operator algebra.
//!
//! Each suite draws from a seeded generator, so a given seed and sample
//! count always produces the same outcome.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hessop::{
    concavity_probe, ellipticity_report, evaluate, normalized_value, quotient_value, OperatorSpec, Sign, SymMatrix,
};
use crate::oracle::{concavity_probe_fd, fd_matrix_derivative, sigma_enumeration};
use crate::sampling::{
    admissible_matrix, admissible_spectrum, gamma_k_member, legal_operators, rng, uniform_spectrum, SampleRng,
};
use crate::symcone::{all_elementary_symmetric, elementary_symmetric, newton_maclaurin_check, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    /// Worst observed value of the suite's error measure.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub time_limit: f64,
    pub detail: String,
}

impl SuiteOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] suite {} {}: worst {:.3e} (tol {:.0e}), {} samples, {:.2}s (limit {}s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.worst,
            self.tolerance,
            self.samples,
            self.seconds,
            self.time_limit,
            if self.detail.is_empty() { String::new() } else { format!("; {}", self.detail) }
        )
    }
}

/// Sample counts per suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSizes {
    pub symmetric: usize,
    pub chain: usize,
    pub ellipticity: usize,
    pub concavity: usize,
    pub matrices: usize,
    pub repeated: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            symmetric: 10_000,
            chain: 100_000,
            ellipticity: 10_000,
            concavity: 10_000,
            matrices: 200,
            repeated: 20,
        }
    }
}

fn finish(
    id: u8,
    name: &str,
    ok: bool,
    samples: usize,
    worst: f64,
    tolerance: f64,
    start: Instant,
    time_limit: f64,
    detail: String,
) -> SuiteOutcome {
    let seconds = start.elapsed().as_secs_f64();
    SuiteOutcome {
        id,
        name: name.to_string(),
        passed: ok && seconds < time_limit,
        samples,
        worst,
        tolerance,
        seconds,
        time_limit,
        detail,
    }
}

/// Recurrence against subset enumeration, `n ≤ 8`. The error is measured
/// relative to `σ_k(|λ|)`, the size of the terms being summed, which stays
/// meaningful when cancellation drives `σ_k(λ)` to zero.
pub fn symmetric_functions(samples: usize, seed: u64) -> SuiteOutcome {
    let start = Instant::now();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut plain_worst: f64 = 0.0;
    for _ in 0..samples {
        let n = r.random_range(1..=8);
        let k = r.random_range(0..=n) as isize;
        let scale = 10f64.powf(r.random_range(-2.0..2.0));
        let v = uniform_spectrum(&mut r, n, scale);
        let fast = elementary_symmetric(&v, k);
        let slow = sigma_enumeration(&v, k).expect("n within the enumeration limit");
        let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let size = sigma_enumeration(&abs, k).unwrap();
        let err = if size == 0.0 { (fast - slow).abs() } else { (fast - slow).abs() / size };
        worst = worst.max(err);
        if slow != 0.0 {
            plain_worst = plain_worst.max((fast - slow).abs() / slow.abs());
        }
    }
    let detail = format!("plain relative error worst {plain_worst:.3e}");
    finish(1, "symmetric functions vs enumeration", worst <= 1e-12, samples, worst, 1e-12, start, 5.0, detail)
}

/// Maclaurin chain and partial-sum ordering on `Γ_k` samples, `n ∈ {3,4,5}`,
/// plus equality at the all-equal spectrum.
pub fn maclaurin_chain(samples: usize, seed: u64) -> SuiteOutcome {
    let start = Instant::now();
    let mut r = rng(seed);
    let mut worst_slack = f64::INFINITY;
    let mut failures = 0;
    let mut links = 0;
    for _ in 0..samples {
        let n = r.random_range(3..=5);
        let k = r.random_range(1..=n);
        let v = gamma_k_member(&mut r, n, k);
        let rep = newton_maclaurin_check(&Spectrum::new(v).unwrap(), k).expect("sample is a cone member");
        links += rep.chain_links;
        worst_slack = worst_slack.min(rep.worst_slack);
        if !rep.all_pass() {
            failures += 1;
        }
    }
    let mut equality_gap: f64 = 0.0;
    for n in 3..=5 {
        for c in [0.5, 1.0, 3.0] {
            let rep = newton_maclaurin_check(&Spectrum::constant(n, c).unwrap(), n).unwrap();
            equality_gap = equality_gap.max(rep.largest_gap);
        }
    }
    let ok = failures == 0 && worst_slack >= -1e-12 && equality_gap <= 1e-12;
    let detail = format!("{links} links, {failures} failing samples, equality gap {equality_gap:.1e}");
    finish(2, "Maclaurin chain", ok, samples, -worst_slack.min(0.0), 1e-12, start, 30.0, detail)
}

fn random_operator(r: &mut SampleRng, ops: &[OperatorSpec]) -> OperatorSpec {
    ops[r.random_range(0..ops.len())]
}

/// Ordering of `∂F/∂λ` and `∂F/∂η`, positivity, and ray invariance of
/// `Σ ∂F/∂λ / F^{1−1/(k−l)}`.
pub fn ellipticity(samples: usize, seed: u64) -> SuiteOutcome {
    let start = Instant::now();
    let mut r = rng(seed);
    let ops = legal_operators(&[2, 3, 4, 5], &[1.0, 2.0]);
    let mut failures = 0;
    let mut literal_plus = 0;
    let mut plus_samples = 0;
    let mut worst_scale: f64 = 0.0;
    for _ in 0..samples {
        let spec = random_operator(&mut r, &ops);
        let lambda = admissible_spectrum(&mut r, &spec);
        let rep = ellipticity_report(&lambda, &spec).expect("admissible sample");
        let t = 10f64.powf(r.random_range(-1.0..1.0));
        let scaled = ellipticity_report(&lambda.scaled(t), &spec).expect("cone is a cone");
        let drift = ((scaled.sum_ratio - rep.sum_ratio) / rep.sum_ratio).abs();
        worst_scale = worst_scale.max(drift);
        let min_d = rep.d_lambda.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(rep.item1 && rep.item2 && min_d > 0.0 && rep.sum_ratio > 0.0) {
            failures += 1;
        }
        if spec.sign() == Sign::Plus {
            plus_samples += 1;
            if !rep.item2_literal {
                literal_plus += 1;
            }
        }
    }
    let ok = failures == 0 && worst_scale <= 1e-10;
    let detail = format!(
        "{failures} ordering/positivity failures; plus form literal index ordering of dF/deta fails on {literal_plus}/{plus_samples} (eta-ordered form checked)"
    );
    finish(3, "ellipticity structure", ok, samples, worst_scale, 1e-10, start, 30.0, detail)
}

/// Allowed relative gap between the exact and finite-difference second
/// derivatives in the concavity suite.
pub const FD_AGREEMENT: f64 = 1e-4;

/// Second directional derivative of `F̃` along random lines, cross-checked
/// against the finite-difference oracle.
pub fn concavity(samples: usize, seed: u64) -> SuiteOutcome {
    let start = Instant::now();
    let mut r = rng(seed);
    let ops = legal_operators(&[2, 3, 4, 5], &[1.0, 2.0]);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut linear_worst: f64 = 0.0;
    let mut fd_worst: f64 = 0.0;
    let mut fd_checked = 0;
    let mut fd_unsettled = 0;
    for _ in 0..samples {
        let spec = random_operator(&mut r, &ops);
        let lambda = admissible_spectrum(&mut r, &spec);
        let norm = lambda.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        let xi = Spectrum::new(uniform_spectrum(&mut r, spec.n(), norm)).unwrap();
        let probe = concavity_probe(&lambda, &xi, &spec).expect("admissible sample");
        let measure = probe.second_derivative / (1.0 + probe.normalized_value.abs());
        if spec.k() == 1 {
            linear_worst = linear_worst.max(probe.second_derivative.abs());
        } else {
            worst = worst.max(measure);
        }
        if let Ok(fd) = concavity_probe_fd(&lambda, &xi, &spec) {
            // Scale of a second derivative along ξ: F̃·|ξ|²/|λ|².
            let scale = probe.normalized_value.abs() * (xi.values().iter().map(|x| x * x).sum::<f64>()) / (norm * norm);
            fd_worst = fd_worst.max((fd - probe.second_derivative).abs() / (scale + probe.second_derivative.abs()));
            fd_checked += 1;
        } else {
            fd_unsettled += 1;
        }
    }
    // Where the finite-difference route settles it must agree with the exact
    // one. Lines hugging the cone edge can be out of its reach; those are
    // counted, not failed.
    let ok = worst <= 1e-8 && linear_worst <= 1e-8 && fd_worst <= FD_AGREEMENT;
    let detail = format!(
        "linear case |d2| worst {linear_worst:.1e}; finite-difference agreement worst {fd_worst:.1e} over {fd_checked} lines, {fd_unsettled} unsettled"
    );
    finish(4, "concavity", ok, samples, worst, 1e-8, start, 60.0, detail)
}

/// The matrices shared by suites 5 and 6: every legal operator for
/// `n ∈ {2,3,4}`, `γ ∈ {1,2}` in turn, with every `total/repeated`-th draw
/// having a double eigenvalue.
pub fn matrix_samples(total: usize, repeated: usize, seed: u64) -> Vec<(OperatorSpec, SymMatrix, bool)> {
    let mut r = rng(seed);
    let ops = legal_operators(&[2, 3, 4], &[1.0, 2.0]);
    let every = if repeated == 0 { usize::MAX } else { (total / repeated).max(1) };
    (0..total)
        .map(|i| {
            let spec = ops[i % ops.len()];
            let rep = i % every == every - 1;
            (spec, admissible_matrix(&mut r, &spec, rep), rep)
        })
        .collect()
}

fn max_abs(m: &SymMatrix) -> f64 {
    m.max_abs()
}

/// Analytic matrix gradient against central differences, both `F` and `F̃`.
/// The error is `max |G − G_fd| / max |G|`.
pub fn gradients(total: usize, repeated: usize, seed: u64) -> SuiteOutcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_repeated: f64 = 0.0;
    let mut probe_exits = 0;
    for (spec, m, rep) in matrix_samples(total, repeated, seed) {
        for normalized in [false, true] {
            let analytic = evaluate(&m, &spec, normalized).expect("admissible sample").gradient;
            match fd_matrix_derivative(&m, &spec, normalized) {
                Ok(fd) => {
                    let diff = analytic
                        .entries()
                        .iter()
                        .zip(fd.entries())
                        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
                    let err = diff / max_abs(&analytic);
                    worst = worst.max(err);
                    if rep {
                        worst_repeated = worst_repeated.max(err);
                    }
                }
                Err(_) => probe_exits += 1,
            }
        }
    }
    let ok = worst <= 1e-6 && probe_exits == 0;
    let detail = format!("repeated-eigenvalue worst {worst_repeated:.1e}; {probe_exits} probe exits");
    finish(5, "matrix gradient vs finite differences", ok, total, worst, 1e-6, start, 20.0, detail)
}

/// `F̃(tM) = tF̃(M)`, `F(tM) = t^{k−l}F(M)` and `Σ F̃^{ij} M_ij = F̃(M)`.
pub fn homogeneity(total: usize, repeated: usize, seed: u64) -> SuiteOutcome {
    let start = Instant::now();
    let mut r = rng(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    for (spec, m, _) in matrix_samples(total, repeated, seed) {
        let t = 10f64.powf(r.random_range(-1.0..1.0));
        let tm = m.scaled(t);
        let nv = normalized_value(&m, &spec).unwrap();
        let qv = quotient_value(&m, &spec).unwrap();
        let e1 = (normalized_value(&tm, &spec).unwrap() - t * nv).abs() / (t * nv);
        let scaled_q = t.powi(spec.degree() as i32) * qv;
        let e2 = (quotient_value(&tm, &spec).unwrap() - scaled_q).abs() / scaled_q;
        let grad = evaluate(&m, &spec, true).unwrap().gradient;
        let e3 = (grad.contract(&m) - nv).abs() / nv;
        worst = worst.max(e1).max(e2).max(e3);
    }
    finish(6, "homogeneity and Euler identity", worst <= 1e-10, total, worst, 1e-10, start, 20.0, String::new())
}

/// Suites 1–6 with the given sizes.
pub fn run_all(sizes: &SuiteSizes, seed: u64) -> Vec<SuiteOutcome> {
    vec![
        symmetric_functions(sizes.symmetric, seed),
        maclaurin_chain(sizes.chain, seed.wrapping_add(1)),
        ellipticity(sizes.ellipticity, seed.wrapping_add(2)),
        concavity(sizes.concavity, seed.wrapping_add(3)),
        gradients(sizes.matrices, sizes.repeated, seed.wrapping_add(4)),
        homogeneity(sizes.matrices, sizes.repeated, seed.wrapping_add(4)),
    ]
}

/// `σ_0..σ_n` of the recurrence against enumeration for one vector; used by
/// the CLI to print a worked example.
pub fn enumeration_table(values: &[f64]) -> Vec<(f64, f64)> {
    let all = all_elementary_symmetric(values);
    (0..=values.len())
        .map(|k| (all[k], sigma_enumeration(values, k as isize).unwrap_or(f64::NAN)))
        .collect()
}
