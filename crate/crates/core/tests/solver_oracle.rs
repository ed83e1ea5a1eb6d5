use std::sync::Arc;

use hessquot::grid::{hessian_at_node, GridDomain, ProblemData, ProblemSpec, ScalarField};
use hessquot::hessop::{normalized_value, OperatorSpec, Sign, SymMatrix};
use hessquot::oracle::{linear_reduction_solve, radial_solve, RadialProblem};
use hessquot::solver::{initial_guess, newton_solve, regularized_sweep, SolveStatus, SolverConfig};

fn half_norm2(x: &[f64]) -> f64 {
    0.5 * x.iter().map(|v| v * v).sum::<f64>()
}

fn linear_problem(dim: usize, cells: usize, gamma: f64, sign: Sign, shift: f64) -> ProblemSpec {
    let dom = Arc::new(GridDomain::unit_box(dim, cells).unwrap());
    let op = OperatorSpec::new(dim, 1, 0, gamma, sign).unwrap();
    let data = ProblemData::new(
        move |x, z| 2.0 + x[0] * x[0] + (x[1] * 3.0).sin() + 0.5 * z,
        |_, _| 0.5,
        move |x, nu, z| nu[0] * x[1] - x[0] + shift + 1.5 * z,
        |_, _, _| 1.5,
    );
    ProblemSpec::new(dom, op, data, 1.5).unwrap()
}

#[test]
fn linear_case_matches_reduction() {
    let cfg = SolverConfig::default();
    for (dim, cells, gamma, sign) in [(2, 12, 1.0, Sign::Minus), (2, 10, 2.0, Sign::Plus), (3, 6, 1.5, Sign::Minus)] {
        for shift in [0.0, 0.7] {
            let p = linear_problem(dim, cells, gamma, sign, shift);
            let reference = linear_reduction_solve(&p).unwrap();
            let u0 = initial_guess(&p, &cfg);
            let (u, rep) = newton_solve(&p, &u0, &cfg).unwrap();
            assert!(rep.converged, "{rep:?}");
            assert_eq!(rep.iterations, 1);
            assert_eq!(rep.step_lengths, vec![1.0]);
            assert!(u.sup_distance(&reference) <= 1e-10);
        }
    }
}

#[test]
fn linear_reduction_zero_data() {
    let dom = Arc::new(GridDomain::unit_box(2, 8).unwrap());
    let op = OperatorSpec::new(2, 1, 0, 1.0, Sign::Minus).unwrap();
    let data = ProblemData::new(|_, _| 0.0, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
    let p = ProblemSpec::new(dom, op, data, 1.0).unwrap();
    let u = linear_reduction_solve(&p).unwrap();
    assert!(u.sup_norm() < 1e-14);
}

#[test]
fn linear_reduction_rejects_nonlinear_orders() {
    let dom = Arc::new(GridDomain::unit_box(2, 4).unwrap());
    let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
    let data = ProblemData::new(|_, _| 1.0, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
    let p = ProblemSpec::new(dom, op, data, 1.0).unwrap();
    assert!(linear_reduction_solve(&p).is_err());
}

/// Plus form, n = 2, k = 2, l = 1, with u* = |x|²/2 + 0.1 sin(x₁) cos(x₂).
/// Unlike a quadratic, this u* is not reproduced exactly by the stencils, so
/// the discretization error is visible and must shrink like h².
fn smooth_manufactured(cells: usize) -> (ProblemSpec, ScalarField) {
    let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
    let exact = |x: &[f64]| half_norm2(x) + 0.1 * x[0].sin() * x[1].cos();
    let grad = |x: &[f64]| [x[0] + 0.1 * x[0].cos() * x[1].cos(), x[1] - 0.1 * x[0].sin() * x[1].sin()];
    let hess = |x: &[f64]| {
        let (s1, c1, s2, c2) = (x[0].sin(), x[0].cos(), x[1].sin(), x[1].cos());
        let mut m = SymMatrix::identity(2);
        m.set(0, 0, 1.0 - 0.1 * s1 * c2);
        m.set(1, 1, 1.0 - 0.1 * s1 * c2);
        m.set(0, 1, -0.1 * c1 * s2);
        m
    };
    let dom = Arc::new(GridDomain::unit_box(2, cells).unwrap());
    let data = ProblemData::new(
        move |x, _| normalized_value(&hess(x), &op).unwrap(),
        |_, _| 0.0,
        move |x, nu, z| {
            let g = grad(x);
            nu[0] * g[0] + nu[1] * g[1] + z - exact(x)
        },
        |_, _, _| 1.0,
    );
    let p = ProblemSpec::new(dom.clone(), op, data, 1.0).unwrap();
    (p, ScalarField::from_fn(dom, exact))
}

#[test]
fn smooth_manufactured_solution_converges_at_second_order() {
    let cfg = SolverConfig::default();
    let mut errors = Vec::new();
    for cells in [16, 32, 64] {
        let (p, exact) = smooth_manufactured(cells);
        let u0 = initial_guess(&p, &cfg);
        let (u, rep) = newton_solve(&p, &u0, &cfg).unwrap();
        assert!(rep.converged, "{rep:?}");
        errors.push(u.sup_distance(&exact));
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() <= 0.15 * 4.0, "errors {errors:?}");
    }
}

#[test]
fn radial_profile_satisfies_grid_equation_to_second_order() {
    // n = 2, plus form, f̃(r) = 1 + r² on a ball that covers the unit box;
    // the profile is sampled at grid nodes and the interior residual is
    // measured inside the inscribed ball.
    let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
    let prob = RadialProblem::new(op, 0.75, |r| 1.0 + r * r, |z| z);
    let prof = radial_solve(&prob).unwrap();
    let centre = [0.5, 0.5];
    let dist = move |x: &[f64]| ((x[0] - centre[0]).powi(2) + (x[1] - centre[1]).powi(2)).sqrt();
    let mut worst = Vec::new();
    for cells in [16, 32] {
        let dom = Arc::new(GridDomain::unit_box(2, cells).unwrap());
        let u = ScalarField::from_fn(dom.clone(), |x| prof.value_at(dist(x)));
        let mut w: f64 = 0.0;
        for &node in dom.interior_nodes() {
            let x = dom.coords(node);
            let r = dist(&x);
            if r > 0.4 {
                continue;
            }
            let f = normalized_value(&hessian_at_node(&u, node).unwrap(), &op).unwrap();
            w = w.max((f - (1.0 + r * r)).abs());
        }
        worst.push(w);
    }
    let ratio = worst[0] / worst[1];
    assert!(ratio > 3.0 && ratio < 5.0, "{worst:?}");
    assert!(worst[1] < 1e-3);
}

#[test]
fn radial_ode_residual_is_small() {
    let op = OperatorSpec::new(3, 2, 0, 1.0, Sign::Minus).unwrap();
    let prob = RadialProblem::new(op, 1.0, |r| 2.0 + r.cos(), |z| 2.0 * z);
    let prof = radial_solve(&prob).unwrap();
    for i in (0..prof.r.len()).step_by(37) {
        let f = hessquot::hessop::normalized_from_spectrum(&prof.spectrum_at(i), &op).unwrap();
        assert!((f - (2.0 + prof.r[i].cos())).abs() <= 1e-8);
    }
    // Boundary condition with the inner normal.
    let last = prof.r.len() - 1;
    assert!((-prof.du[last] - 2.0 * prof.u[last]).abs() <= 1e-8);
}

fn degenerate_problem(cells: usize) -> ProblemSpec {
    let dom = Arc::new(GridDomain::unit_box(2, cells).unwrap());
    let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
    let data = ProblemData::new(|x, _| (x[0] - 0.5).powi(2), |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
    ProblemSpec::new(dom, op, data, 1.0).unwrap()
}

#[test]
fn warm_starts_beat_cold_starts() {
    let p = degenerate_problem(16);
    let cfg = SolverConfig::default();
    let sweep = regularized_sweep(&p, &cfg).unwrap();
    assert!(sweep.completed);
    for rep in sweep.reports.iter().skip(1) {
        let eps = rep.eps.unwrap();
        let stage = p.regularized(eps);
        let cold = initial_guess(&stage, &cfg);
        let (_, cold_rep) = newton_solve(&stage, &cold, &cfg).unwrap();
        assert!(cold_rep.converged);
        assert!(rep.iterations < cold_rep.iterations, "eps {eps}: warm {} cold {}", rep.iterations, cold_rep.iterations);
    }
}

#[test]
fn nondegenerate_sweep_stages_approach_each_other() {
    let dom = Arc::new(GridDomain::unit_box(2, 12).unwrap());
    let op = OperatorSpec::new(2, 2, 1, 1.0, Sign::Plus).unwrap();
    let data = ProblemData::new(|x, _| 1.0 + 0.5 * x[0], |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
    let p = ProblemSpec::new(dom, op, data, 1.0).unwrap();
    let cfg = SolverConfig::default();
    let schedule = cfg.eps_schedule();
    let mut solutions = Vec::new();
    for &eps in &schedule {
        let stage = p.regularized(eps);
        let (u, rep) = newton_solve(&stage, &initial_guess(&stage, &cfg), &cfg).unwrap();
        assert!(rep.converged);
        solutions.push(u);
    }
    let last = solutions.last().unwrap();
    for (u, eps) in solutions.iter().zip(&schedule) {
        // u depends smoothly on ε; the shift is at most a few ε.
        assert!(u.sup_distance(last) <= 5.0 * eps, "eps {eps}: {}", u.sup_distance(last));
    }
}

#[test]
fn distinct_starts_reach_the_same_solution() {
    let p = degenerate_problem(16).regularized(1e-3);
    let cfg = SolverConfig::default();
    let a = initial_guess(&p, &cfg);
    let b = ScalarField::from_fn(p.domain.clone(), |x| 2.0 * x[0] * x[0] + x[1] * x[1] - 3.0);
    let (ua, ra) = newton_solve(&p, &a, &cfg).unwrap();
    let (ub, rb) = newton_solve(&p, &b, &cfg).unwrap();
    assert!(ra.converged && rb.converged);
    assert!(ua.sup_distance(&ub) <= 10.0 * cfg.tol_r);
}

#[test]
fn zero_datum_drives_the_solution_to_zero() {
    let dom = Arc::new(GridDomain::unit_box(2, 8).unwrap());
    let op = OperatorSpec::new(2, 2, 0, 1.0, Sign::Plus).unwrap();
    let data = ProblemData::new(|_, _| 0.0, |_, _| 0.0, |_, _, z| z, |_, _, _| 1.0);
    let p = ProblemSpec::new(dom.clone(), op, data, 1.0).unwrap();
    let cfg = SolverConfig::default();
    let u0 = ScalarField::from_fn(dom, |x| 1e-3 * half_norm2(&[x[0] - 0.5, x[1] - 0.5]));
    let (u, rep) = newton_solve(&p, &u0, &cfg).unwrap();
    assert!(rep.converged, "{rep:?}");
    assert!(u.sup_norm() <= cfg.tol_r);
}

#[test]
fn three_dimensional_minus_form() {
    let dom = Arc::new(GridDomain::unit_box(3, 6).unwrap());
    let op = OperatorSpec::new(3, 2, 1, 1.0, Sign::Minus).unwrap();
    let data = ProblemData::new(
        |x, _| 2.0 + 0.3 * x[2],
        |_, _| 0.0,
        |x, nu, z| nu.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + z,
        |_, _, _| 1.0,
    );
    let p = ProblemSpec::new(dom, op, data, 1.0).unwrap();
    let cfg = SolverConfig::default();
    let (_, rep) = newton_solve(&p, &initial_guess(&p, &cfg), &cfg).unwrap();
    assert_eq!(rep.status, SolveStatus::Converged);
    for w in rep.residual_history.windows(2) {
        assert!(w[1] < w[0]);
    }
    assert!(rep.margin_history.iter().all(|&m| m > 0.0));
}
