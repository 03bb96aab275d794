mod common;

use bellman_fd_core::diagnostics::{
    check_comparison, check_obstacle_complementarity, convergence_study, fit_order, measure_regularity, MarginRule,
    StudyConfig,
};
use bellman_fd_core::elliptic::{solve_elliptic, value_iteration, EllipticConfig};
use bellman_fd_core::implicit::{choose_contraction_params, slice_fixed_point_map, solve_parabolic, SolverConfig};
use bellman_fd_core::lattice::{ExteriorPolicy, GridFunction, MeshSpec};
use bellman_fd_core::perturbation::{shake, ShakeSpec};
use bellman_fd_core::problems::{catalog, catalog_with, CatalogParams, Obstacle};
use bellman_fd_core::semidiscrete::{solve_semidiscrete, SemidiscreteConfig};
use bellman_fd_core::ControlProblem;
use common::{mesh, rng, sup_diff, RandomCoefficients};
use rand::Rng;

#[test]
fn slice_map_is_monotone_and_contracting() {
    let m = mesh(MeshSpec::line(1.0, 0.1, 0.1, 15));
    let mut r = rng(11);
    for _ in 0..50 {
        let p = RandomCoefficients::draw(&mut r, 3, 0.0).problem("p");
        let params = choose_contraction_params(&p, &m).unwrap();
        let n = m.n_nodes();
        let j = r.random_range(0..m.n_time());
        let field = |r: &mut rand::rngs::StdRng| -> Vec<f64> { (0..n).map(|_| r.random_range(-2.0..2.0)).collect() };
        let (u1, w1) = (field(&mut r), field(&mut r));
        let u2: Vec<f64> = u1.iter().map(|v| v + r.random_range(0.0..1.0)).collect();
        let w2: Vec<f64> = w1.iter().map(|v| v + r.random_range(0.0..1.0)).collect();
        let g1 = slice_fixed_point_map(&p, &m, &params, &u1, &w1, j, ExteriorPolicy::Clamp).unwrap();
        let g2 = slice_fixed_point_map(&p, &m, &params, &u2, &w2, j, ExteriorPolicy::Clamp).unwrap();
        assert!(g1.iter().zip(&g2).all(|(a, b)| a <= b));

        let w3 = field(&mut r);
        let g3 = slice_fixed_point_map(&p, &m, &params, &u1, &w3, j, ExteriorPolicy::Clamp).unwrap();
        assert!(sup_diff(&g1, &g3) <= params.contraction_factor * sup_diff(&w1, &w3) + 1e-12);
    }
}

#[test]
fn small_perturbations_move_the_solution_proportionally() {
    let m = mesh(MeshSpec::line(1.0, 0.1, 0.1, 20));
    let mut r = rng(12);
    let p = RandomCoefficients::draw(&mut r, 2, 0.0).problem("p");
    let base = solve_parabolic(&p, &m, &SolverConfig::default()).unwrap();
    for eta in [1e-2, 1e-3, 1e-4] {
        let q = p.clone().shift_running(eta).shift_terminal(eta);
        let moved = solve_parabolic(&q, &m, &SolverConfig::default()).unwrap();
        let ratio = sup_diff(base.field.values(), moved.field.values()) / eta;
        let target = 1.0 + m.horizon();
        assert!(ratio <= 2.0 * target && ratio >= target / 2.0, "eta {eta}: ratio {ratio}");
    }
}

#[test]
fn comparison_with_larger_running_cost() {
    let entry = catalog("transport_kink").unwrap();
    let m = mesh(MeshSpec::line(1.0, 0.1, 0.1, 20));
    let upper = entry.problem.clone().shift_running(1.0);
    let rep = check_comparison(&entry.problem, &upper, &m, &SolverConfig::default()).unwrap();
    assert!(rep.passed);
    let same = check_comparison(&entry.problem, &entry.problem, &m, &SolverConfig::default()).unwrap();
    assert!(same.passed && same.violation == 0.0);
}

#[test]
fn catalog_solutions_match_known_values() {
    let heat = catalog("heat1d").unwrap();
    let m = mesh(heat.default_mesh.clone());
    let v = solve_parabolic(&heat.problem, &m, &SolverConfig::default()).unwrap();
    let origin = m.node_of(&[0]).unwrap();
    assert!((v.field.get(0, origin) - (-0.5f64).exp()).abs() < 2e-3);

    let kink = catalog("transport_kink").unwrap();
    let m = mesh(MeshSpec::line(1.0, 0.01, 0.01, 300));
    let v = solve_parabolic(&kink.problem, &m, &SolverConfig::default()).unwrap();
    let origin = m.node_of(&[0]).unwrap();
    // the kink at the origin is rounded off by about h/2
    assert!(v.field.get(0, origin).abs() <= m.h());
    let at = m.node_of(&[150]).unwrap();
    assert!((v.field.get(0, at) + 0.5).abs() < 1e-3);
}

#[test]
fn semidiscrete_const_stays_one() {
    let c = catalog("const").unwrap();
    let m = mesh(c.default_mesh.clone());
    let s = solve_semidiscrete(&c.problem, &m, &SemidiscreteConfig::default()).unwrap();
    assert!(s.field.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn elliptic_fixed_point_is_unique() {
    let entry = catalog_with("twocontrol_diffusion", CatalogParams { lambda: Some(1.0), ..Default::default() }).unwrap();
    let m = bellman_fd_core::Mesh::new(MeshSpec::line(1.0, 0.1, 0.2, 30)).unwrap();
    let cfg = EllipticConfig::default();
    let mut r = rng(13);
    let a: Vec<f64> = (0..m.n_nodes()).map(|_| r.random_range(-5.0..5.0)).collect();
    let b: Vec<f64> = (0..m.n_nodes()).map(|_| r.random_range(-5.0..5.0)).collect();
    let ua = value_iteration(&entry.problem, &m, &cfg, &a).unwrap();
    let ub = value_iteration(&entry.problem, &m, &cfg, &b).unwrap();
    assert!(sup_diff(&ua.field, &ub.field) <= 2.0 * cfg.tol);
    let hist = &ua.residual_history;
    assert!(hist.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}

#[test]
fn elliptic_rejects_time_dependent_coefficients() {
    let mut r = rng(14);
    let p = RandomCoefficients::draw(&mut r, 1, 1.0).problem("p").with_constants(4.0, 1.0);
    let m = bellman_fd_core::Mesh::new(MeshSpec::line(1.0, 0.1, 0.2, 5)).unwrap();
    assert!(matches!(
        solve_elliptic(&p, &m, &EllipticConfig::default()),
        Err(bellman_fd_core::Error::Config(_))
    ));
}

#[test]
fn shaking_trivial_cases() {
    let entry = catalog("heat1d").unwrap();
    let m = mesh(MeshSpec::line(1.0, 0.1, 0.2, 20));
    let base = solve_parabolic(&entry.problem, &m, &SolverConfig::default()).unwrap();

    // time shifts of time-independent coefficients do nothing
    let spec = ShakeSpec {
        epsilon: 0.3,
        space_shifts: vec![vec![0.0]],
        time_shifts: vec![-0.5],
        shift_terminal: true,
    };
    let s = solve_parabolic(&shake(&entry.problem, &spec).unwrap(), &m, &SolverConfig::default()).unwrap();
    assert!(sup_diff(s.field.values(), base.field.values()) <= 1e-12);

    let spec = ShakeSpec::with_defaults(0.0, 1);
    let s = solve_parabolic(&shake(&entry.problem, &spec).unwrap(), &m, &SolverConfig::default()).unwrap();
    assert!(sup_diff(s.field.values(), base.field.values()) <= 1e-12);
}

#[test]
fn larger_shift_sets_give_larger_solutions() {
    let m = mesh(MeshSpec::line(1.0, 0.1, 0.1, 20));
    let mut r = rng(15);
    for _ in 0..5 {
        let p = RandomCoefficients::draw(&mut r, 2, 0.0).problem("p");
        let small = ShakeSpec {
            epsilon: 0.2,
            space_shifts: vec![vec![0.0], vec![0.5]],
            time_shifts: vec![-0.5],
            shift_terminal: true,
        };
        let mut large = small.clone();
        large.space_shifts.push(vec![-0.7]);
        large.space_shifts.push(vec![0.9]);
        let a = solve_parabolic(&shake(&p, &small).unwrap(), &m, &SolverConfig::default()).unwrap();
        let b = solve_parabolic(&shake(&p, &large).unwrap(), &m, &SolverConfig::default()).unwrap();
        assert!(a.field.values().iter().zip(b.field.values()).all(|(x, y)| *x <= y + 1e-9));
    }
}

#[test]
fn regularity_statistics_shift_and_scale() {
    let m = mesh(MeshSpec::line(1.0, 0.1, 0.1, 20));
    let mut r = rng(16);
    let values: Vec<f64> = (0..m.n_nodes() * (m.n_time() + 1)).map(|_| r.random_range(-1.0..1.0)).collect();
    let u = GridFunction::from_values(m.clone(), values).unwrap();
    let base = measure_regularity(&u);
    let shifted = measure_regularity(&u.map(|v| v + 7.0));
    let scaled = measure_regularity(&u.map(|v| -3.0 * v));
    assert!((shifted.lipschitz_x - base.lipschitz_x).abs() <= 1e-12 * base.lipschitz_x);
    assert!((shifted.holder_t - base.holder_t).abs() <= 1e-12 * base.holder_t);
    assert!((scaled.lipschitz_x - 3.0 * base.lipschitz_x).abs() <= 1e-12 * base.lipschitz_x);
    assert!((scaled.holder_t - 3.0 * base.holder_t).abs() <= 1e-12 * base.holder_t);
}

fn heat_family(h: &[f64]) -> Vec<MeshSpec> {
    h.iter().map(|&h| MeshSpec::line(1.0, h * h, h, (9.0 / h).round() as usize)).collect()
}

#[test]
fn heat_fit_is_stable_without_the_coarsest_mesh() {
    let entry = catalog("heat1d").unwrap();
    let rep = convergence_study(
        &entry.problem,
        entry.exact.as_ref().unwrap(),
        &heat_family(&[0.2, 0.1, 0.05, 0.025]),
        &StudyConfig::default(),
    )
    .unwrap();
    let hs: Vec<f64> = rep.mesh_params.iter().map(|p| p.1).collect();
    let all = rep.fitted_order.unwrap();
    let (fine, _) = fit_order(&hs[1..], &rep.errors[1..]).unwrap();
    assert!((all - fine).abs() < 0.15, "{all} vs {fine}");
    assert!(rep.pairwise_orders[0].is_none());
    assert!(rep.pairwise_orders[1..].iter().all(|o| o.unwrap() > 1.8));
}

#[test]
fn shrinking_the_interior_never_increases_the_error() {
    let entry = catalog("transport_kink").unwrap();
    let fam: Vec<MeshSpec> =
        [0.1, 0.05, 0.025].iter().map(|&h| MeshSpec::line(1.0, h, h, (3.0 / h).round() as usize)).collect();
    let mut last = vec![f64::INFINITY; 3];
    for w in [0.5, 1.0, 1.5, 2.5] {
        let cfg = StudyConfig {
            margin: MarginRule::Width(w),
            ..Default::default()
        };
        let rep = convergence_study(&entry.problem, entry.exact.as_ref().unwrap(), &fam, &cfg).unwrap();
        assert!(rep.errors.iter().zip(&last).all(|(e, l)| e <= l));
        last = rep.errors;
    }
}

/// Penalized obstacle problem with a custom obstacle and running cost zero.
fn penalized(obstacle: impl Fn(&[f64]) -> f64 + Send + Sync + Clone + 'static, m: f64) -> ControlProblem {
    ControlProblem::new("obstacle", 2)
        .with_sigma(|_, _, _, _| 1.0)
        .with_discount(move |a, _, _| if a == 0 { 1.0 } else { 1.0 + m })
        .with_running(move |a, _, x| if a == 0 { 0.0 } else { m * obstacle(x) })
        .with_constants(1e6, 1.0)
}

#[test]
fn complementarity_trivial_obstacles() {
    let mesh = bellman_fd_core::Mesh::new(MeshSpec::line(1.0, 0.05, 0.05, 40)).unwrap();
    let ob = Obstacle {
        penalty: 1e3,
        diffusion: 0.5,
        discount: 1.0,
    };
    for g in [-1e3, 0.0] {
        let p = penalized(move |_| g, ob.penalty);
        let u = solve_elliptic(&p, &mesh, &EllipticConfig::default()).unwrap();
        let rep = check_obstacle_complementarity(&u.field, &|_| g, &mesh, &ob);
        assert!(rep.residual1 <= 1e-6 && rep.residual3 <= 1e-6, "{rep:?}");
        if g == 0.0 {
            assert!(u.field.iter().all(|v| v.abs() <= 1e-12));
            assert!(rep.residual2 <= 1e-12);
        }
    }
}
