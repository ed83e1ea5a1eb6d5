//! Elementary symmetric functions and Gårding cones.
//!
//! `σ_k(λ)` is evaluated with the prefix recurrence
//! `e_j ← e_j + λ_i e_{j-1}`, which costs `O(n k)` and never forms the
//! `C(n, k)` individual products. The brute-force enumeration used to check
//! it lives in [`crate::oracle`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered eigenvalues `λ = (λ_1, …, λ_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidSpectrum(format!(
                "need at least two entries, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("non-finite entry {bad}")));
        }
        Ok(Self { values })
    }

    /// `n` copies of `value`.
    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Copy with entries sorted in descending order.
    pub fn sorted_descending(&self) -> Spectrum {
        let mut values = self.values.clone();
        values.sort_by(|a, b| b.total_cmp(a));
        Spectrum { values }
    }

    pub fn is_sorted_descending(&self) -> bool {
        self.values.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn scaled(&self, t: f64) -> Spectrum {
        Spectrum {
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    pub fn sigma(&self, k: isize) -> f64 {
        elementary_symmetric(&self.values, k)
    }
}

impl AsRef<[f64]> for Spectrum {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Membership of a vector in `Γ_k` together with the margins `σ_1, …, σ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub k: usize,
    pub member: bool,
    pub margins: Vec<f64>,
}

impl ConeReport {
    /// Smallest of the margins, `+∞` for `k = 0`.
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// All of `σ_0, …, σ_n` in one pass.
pub fn all_elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &x) in values.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// `σ_k(λ)`, with `σ_0 = 1` and `σ_k = 0` for `k < 0` or `k > n`.
pub fn elementary_symmetric(values: &[f64], k: isize) -> f64 {
    let n = values.len() as isize;
    if k < 0 || k > n {
        return 0.0;
    }
    if k == 0 {
        return 1.0;
    }
    let k = k as usize;
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (i, &x) in values.iter().enumerate() {
        let top = (i + 1).min(k);
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[k]
}

/// `σ_k(λ | i)`: the symmetric function of `λ` with entry `i` removed.
/// Total in `k`; `i` must be a valid index.
pub fn sigma_without(values: &[f64], k: isize, i: usize) -> f64 {
    let n = values.len() as isize - 1;
    if k < 0 || k > n {
        return 0.0;
    }
    if k == 0 {
        return 1.0;
    }
    let k = k as usize;
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    let mut seen = 0usize;
    for (idx, &x) in values.iter().enumerate() {
        if idx == i {
            continue;
        }
        seen += 1;
        for j in (1..=seen.min(k)).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[k]
}

/// `σ_k(λ | i, j)` for `i ≠ j`.
pub fn sigma_without_pair(values: &[f64], k: isize, i: usize, j: usize) -> f64 {
    let rest: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(idx, _)| *idx != i && *idx != j)
        .map(|(_, v)| *v)
        .collect();
    elementary_symmetric(&rest, k)
}

/// `∂σ_k/∂λ_i = σ_{k-1}(λ | i)`. `i` is zero-based.
pub fn sigma_partial(lambda: &Spectrum, k: usize, i: usize) -> Result<f64> {
    let n = lambda.len();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidOrder(format!("k = {k} outside 1..={n}")));
    }
    Ok(sigma_without(lambda.values(), k as isize - 1, i))
}

/// Slice-level cone test; `k = 0` is the whole space.
pub fn cone_report(values: &[f64], k: usize) -> ConeReport {
    let all = all_elementary_symmetric(values);
    let margins: Vec<f64> = (1..=k)
        .map(|i| all.get(i).copied().unwrap_or(0.0))
        .collect();
    let member = margins.iter().all(|&m| m > 0.0);
    ConeReport { k, member, margins }
}

/// `λ ∈ Γ_k` iff `σ_i(λ) > 0` for `1 ≤ i ≤ k`. Strict, no tolerance.
pub fn in_gamma_k(lambda: &Spectrum, k: usize) -> Result<ConeReport> {
    let n = lambda.len();
    if k == 0 || k > n {
        return Err(Error::InvalidOrder(format!("k = {k} outside 1..={n}")));
    }
    Ok(cone_report(lambda.values(), k))
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc.round()
}

/// `[ (σ_k/C(n,k)) / (σ_l/C(n,l)) ]^{1/(k-l)}` for `λ ∈ Γ_k`, `0 ≤ l < k ≤ n`.
pub fn maclaurin_ratio(lambda: &Spectrum, k: usize, l: usize) -> Result<f64> {
    let n = lambda.len();
    if l >= k || k > n {
        return Err(Error::InvalidOrder(format!(
            "need 0 <= l < k <= n, got k = {k}, l = {l}, n = {n}"
        )));
    }
    let cone = cone_report(lambda.values(), k);
    if !cone.member {
        return Err(Error::ConeViolation {
            k,
            margins: cone.margins,
        });
    }
    let all = all_elementary_symmetric(lambda.values());
    Ok(normalized_ratio(&all, n, k, l))
}

fn normalized_ratio(all: &[f64], n: usize, k: usize, l: usize) -> f64 {
    let top = all[k] / binomial(n, k);
    let bottom = all[l] / binomial(n, l);
    (top / bottom).powf(1.0 / (k - l) as f64)
}

/// One failed link `ratio(a, b) ≤ ratio(r, s)` of the Maclaurin chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainViolation {
    pub upper: (usize, usize),
    pub lower: (usize, usize),
    pub lhs: f64,
    pub rhs: f64,
}

/// Diagnostics for the Newton–Maclaurin family of inequalities at one `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonMaclaurinReport {
    pub k: usize,
    /// Number of `(a, b, r, s)` links compared.
    pub chain_links: usize,
    pub chain_violations: Vec<ChainViolation>,
    /// `min (rhs − lhs)/rhs` over all links.
    pub worst_slack: f64,
    /// `max |rhs − lhs|/rhs` over all links; zero exactly at equality.
    pub largest_gap: f64,
    /// `σ_{k-1}(λ|i)` for `λ` sorted descending.
    pub partials: Vec<f64>,
    /// `partials[i] ≤ partials[i + 1]`.
    pub monotone: Vec<bool>,
    /// `σ_{k-1}(λ|k) / σ_{k-1}(λ)`.
    pub ratio_to_sigma: f64,
    /// `σ_{k-1}(λ|k) / Σ_i σ_{k-1}(λ|i)`.
    pub ratio_to_sum: f64,
}

impl NewtonMaclaurinReport {
    pub fn all_pass(&self) -> bool {
        self.chain_violations.is_empty() && self.monotone.iter().all(|&m| m)
    }
}

/// Relative slack allowed in the chain comparison.
pub const CHAIN_SLACK: f64 = 1e-12;

/// Checks the Maclaurin chain for every admissible `(a, b) ≥ (r, s)` with
/// `a ≤ k`, the ordering of `σ_{k-1}(λ|i)`, and reports the raw ratios whose
/// lower bounds involve unspecified constants.
pub fn newton_maclaurin_check(lambda: &Spectrum, k: usize) -> Result<NewtonMaclaurinReport> {
    let n = lambda.len();
    if k == 0 || k > n {
        return Err(Error::InvalidOrder(format!("k = {k} outside 1..={n}")));
    }
    let sorted = lambda.sorted_descending();
    let values = sorted.values();
    let cone = cone_report(values, k);
    if !cone.member {
        return Err(Error::ConeViolation {
            k,
            margins: cone.margins,
        });
    }
    let all = all_elementary_symmetric(values);

    let mut chain_links = 0;
    let mut chain_violations = Vec::new();
    let mut worst_slack = f64::INFINITY;
    let mut largest_gap: f64 = 0.0;
    for a in 1..=k {
        for b in 0..a {
            let lhs = normalized_ratio(&all, n, a, b);
            for r in 1..=a {
                for s in 0..r.min(b + 1) {
                    let rhs = normalized_ratio(&all, n, r, s);
                    chain_links += 1;
                    let slack = (rhs - lhs) / rhs;
                    worst_slack = worst_slack.min(slack);
                    largest_gap = largest_gap.max(slack.abs());
                    if lhs > rhs * (1.0 + CHAIN_SLACK) {
                        chain_violations.push(ChainViolation {
                            upper: (a, b),
                            lower: (r, s),
                            lhs,
                            rhs,
                        });
                    }
                }
            }
        }
    }

    let partials: Vec<f64> = (0..n)
        .map(|i| sigma_without(values, k as isize - 1, i))
        .collect();
    let scale = partials.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
    let monotone = partials
        .windows(2)
        .map(|w| w[0] <= w[1] + CHAIN_SLACK * scale)
        .collect();
    let ratio_to_sigma = partials[k - 1] / all[k - 1];
    let ratio_to_sum = partials[k - 1] / partials.iter().sum::<f64>();

    Ok(NewtonMaclaurinReport {
        k,
        chain_links,
        chain_violations,
        worst_slack,
        largest_gap,
        partials,
        monotone,
        ratio_to_sigma,
        ratio_to_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(spec(&[1.0, 1.0, 1.0]).sigma(2), 3.0);
        assert_eq!(spec(&[2.0, 1.0, 0.0]).sigma(2), 2.0);
        assert_eq!(spec(&[-4.0, 7.5]).sigma(0), 1.0);
        assert_eq!(spec(&[-4.0, 7.5]).sigma(3), 0.0);
        assert_eq!(spec(&[-4.0, 7.5]).sigma(-1), 0.0);
        for n in 2..=8 {
            let ones = Spectrum::constant(n, 1.0).unwrap();
            for k in 0..=n {
                assert_eq!(ones.sigma(k as isize), binomial(n, k));
            }
        }
    }

    #[test]
    fn spectrum_rejects_bad_input() {
        assert!(Spectrum::new(vec![1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, f64::NAN]).is_err());
        assert!(Spectrum::new(vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn partial_examples() {
        let l = spec(&[2.0, 1.0, 0.0]);
        assert_eq!(sigma_partial(&l, 1, 0).unwrap(), 1.0);
        assert_eq!(sigma_partial(&l, 2, 0).unwrap(), 1.0);
        let ones = spec(&[1.0, 1.0, 1.0]);
        for i in 0..3 {
            assert_eq!(sigma_partial(&ones, 2, i).unwrap(), 2.0);
        }
        assert_eq!(
            sigma_partial(&l, 2, 3),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        );
        assert!(sigma_partial(&l, 0, 0).is_err());
        assert!(sigma_partial(&l, 4, 0).is_err());
    }

    #[test]
    fn cone_examples() {
        assert!(in_gamma_k(&spec(&[1.0, 1.0, 1.0]), 3).unwrap().member);
        let r = in_gamma_k(&spec(&[-1.0, 3.0, 3.0]), 2).unwrap();
        assert!(r.member);
        assert_eq!(r.margins, vec![5.0, 3.0]);
        let r = in_gamma_k(&spec(&[-1.0, 3.0, 3.0]), 3).unwrap();
        assert!(!r.member);
        assert_eq!(r.margins[2], -9.0);
        for k in 1..=4 {
            assert!(!in_gamma_k(&Spectrum::constant(4, 0.0).unwrap(), k).unwrap().member);
        }
        assert!(in_gamma_k(&spec(&[1.0, 1.0]), 0).is_err());
    }

    #[test]
    fn maclaurin_examples() {
        let ones = spec(&[1.0, 1.0, 1.0]);
        assert!((maclaurin_ratio(&ones, 2, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!((maclaurin_ratio(&ones, 2, 1).unwrap() - 1.0).abs() < 1e-15);
        let r = maclaurin_ratio(&spec(&[2.0, 1.0, 0.0]), 2, 0).unwrap();
        assert!((r - (2.0_f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(matches!(
            maclaurin_ratio(&spec(&[-1.0, 3.0, 3.0]), 3, 0),
            Err(Error::ConeViolation { k: 3, .. })
        ));
        assert!(maclaurin_ratio(&ones, 1, 1).is_err());
        assert!(maclaurin_ratio(&ones, 4, 0).is_err());
    }

    #[test]
    fn newton_maclaurin_examples() {
        let r = newton_maclaurin_check(&spec(&[1.0, 1.0, 1.0]), 2).unwrap();
        assert!(r.all_pass());
        assert!((r.ratio_to_sigma - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.ratio_to_sum - 1.0 / 3.0).abs() < 1e-15);

        let r = newton_maclaurin_check(&spec(&[3.0, 2.0, 1.0]), 2).unwrap();
        assert!(r.monotone.iter().all(|&m| m));
        assert_eq!(r.partials, vec![3.0, 4.0, 5.0]);

        let r = newton_maclaurin_check(&spec(&[1.0, 1.0]), 1).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.chain_links, 1);

        assert!(newton_maclaurin_check(&spec(&[-1.0, -2.0, 0.5]), 1).is_err());
    }

    #[test]
    fn unsorted_input_is_sorted_before_checking() {
        let r = newton_maclaurin_check(&spec(&[1.0, 3.0, 2.0]), 2).unwrap();
        assert_eq!(r.partials, vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(8, 4), 70.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }
}
