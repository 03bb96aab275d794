//! Measurements on computed solutions: discrete Lipschitz and Hölder
//! statistics, comparison checks, convergence studies, the long-horizon
//! limit and obstacle complementarity.
//!
//! Every constant reported here is an empirical measurement on the mesh at
//! hand; none of them is a bound.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::elliptic::{solve_elliptic, EllipticConfig, EllipticMode};
use crate::error::{Error, Result};
use crate::implicit::{solve_parabolic, SolverConfig};
use crate::lattice::{Direction, ExteriorPolicy, GridFunction, Mesh, MeshSpec};
use crate::problems::{ControlProblem, ExactSolution, Obstacle};
use crate::semidiscrete::{solve_semidiscrete, SemidiscreteConfig};
use crate::stencil::Snapshot;
use crate::sweep::{fill, sup_diff};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Errors at or below this are treated as exact and left out of rate fits.
pub const EXACT_ERROR: f64 = 1e-10;

/// Comparison checks pass when `u₁ − u₂` never exceeds this.
pub const COMPARISON_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct RegularityReport {
    /// `max |u(t, x + hℓ_k) − u(t, x)| / (h|ℓ_k|)`.
    pub lipschitz_x: f64,
    /// `max |u(t, x) − u(s, x)| / |t − s|^{1/2}` over level pairs with `|t − s| ≤ 1`.
    pub holder_t: f64,
    /// Discount used to weight the statistics; always 0.
    pub c0_used: f64,
}

pub fn measure_regularity(u: &GridFunction) -> RegularityReport {
    measure_regularity_in(u, 0)
}

/// Same scan restricted to nodes at least `margin` layers inside the box.
pub fn measure_regularity_in(u: &GridFunction, margin: usize) -> RegularityReport {
    let mesh = u.mesh();
    let n_nodes = mesh.n_nodes();
    let levels = mesh.time_levels();
    let h = mesh.h();
    let d1 = mesh.n_directions();
    let norms: Vec<f64> = (0..d1).map(|k| mesh.direction_norm(k)).collect();

    let mut per_node = alloc::vec![(0.0, 0.0); n_nodes];
    fill(&mut per_node, |i| {
        if mesh.depth(i) < margin {
            return (0.0, 0.0);
        }
        let mut lip: f64 = 0.0;
        for k in 0..d1 {
            let dir = Direction { axis: k, forward: true };
            let Some(n) = mesh.neighbor(i, dir) else { continue };
            if mesh.depth(n) < margin {
                continue;
            }
            for j in 0..levels.len() {
                lip = lip.max((u.get(j, n) - u.get(j, i)).abs() / (h * norms[k]));
            }
        }
        let mut hol: f64 = 0.0;
        for a in 0..levels.len() {
            let ua = u.get(a, i);
            for b in a + 1..levels.len() {
                let dt = levels[b] - levels[a];
                if dt > 1.0 + 1e-12 {
                    break;
                }
                hol = hol.max((u.get(b, i) - ua).abs() / libm::sqrt(dt));
            }
        }
        (lip, hol)
    });
    let (lipschitz_x, holder_t) = per_node
        .iter()
        .fold((0.0_f64, 0.0_f64), |(l, t), &(a, b)| (l.max(a), t.max(b)));
    RegularityReport {
        lipschitz_x,
        holder_t,
        c0_used: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct ComparisonReport {
    /// `max (u₁ − u₂)₊` over all nodes and levels.
    pub violation: f64,
    /// Smallest and largest `u₂ − u₁`.
    pub min_gap: f64,
    pub max_gap: f64,
    /// `false` when the sampled preconditions fail; nothing is solved then.
    pub applicable: bool,
    pub reason: Option<String>,
    pub passed: bool,
}

impl ComparisonReport {
    fn inapplicable(reason: String) -> Self {
        ComparisonReport {
            violation: 0.0,
            min_gap: 0.0,
            max_gap: 0.0,
            applicable: false,
            reason: Some(reason),
            passed: false,
        }
    }
}

/// Solves both problems and checks `u₁ ≤ u₂`. Requires equal `σ, b, c` and
/// `f₁ ≤ f₂`, `g₁ ≤ g₂` at every sampled point (exterior points included when
/// the exterior policy reads `g`).
pub fn check_comparison(
    p1: &ControlProblem,
    p2: &ControlProblem,
    mesh: &Arc<Mesh>,
    config: &SolverConfig,
) -> Result<ComparisonReport> {
    if let Some(reason) = comparison_precondition(p1, p2, mesh, config.exterior)? {
        return Ok(ComparisonReport::inapplicable(reason));
    }
    let u1 = solve_parabolic(p1, mesh, config)?;
    let u2 = solve_parabolic(p2, mesh, config)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, b) in u1.field.values().iter().zip(u2.field.values()) {
        lo = lo.min(b - a);
        hi = hi.max(b - a);
    }
    let violation = (-lo).max(0.0);
    Ok(ComparisonReport {
        violation,
        min_gap: lo,
        max_gap: hi,
        applicable: true,
        reason: None,
        passed: violation <= COMPARISON_TOL,
    })
}

fn comparison_precondition(
    p1: &ControlProblem,
    p2: &ControlProblem,
    mesh: &Mesh,
    exterior: ExteriorPolicy,
) -> Result<Option<String>> {
    if p1.n_controls() != p2.n_controls() {
        return Ok(Some("the problems have different control sets".into()));
    }
    let d1 = mesh.n_directions();
    let n_levels = mesh.n_time();
    for (j, &t) in mesh.time_levels()[..n_levels].iter().enumerate() {
        if j > 0 && p1.time_independent && p2.time_independent {
            break;
        }
        for node in 0..mesh.n_nodes() {
            let x = mesh.position(node);
            for a in 0..p1.n_controls() {
                let same = (0..d1).all(|k| p1.sigma(a, k, t, x) == p2.sigma(a, k, t, x))
                    && Direction::all(d1).all(|dir| p1.drift(a, dir, t, x) == p2.drift(a, dir, t, x))
                    && p1.discount(a, t, x) == p2.discount(a, t, x);
                if !same {
                    return Ok(Some(alloc::format!("σ, b or c differ at t = {t}, x = {x:?}")));
                }
                if p1.running(a, t, x) > p2.running(a, t, x) {
                    return Ok(Some(alloc::format!("f₁ > f₂ at t = {t}, x = {x:?}")));
                }
            }
        }
    }
    for node in 0..mesh.n_nodes() {
        let x = mesh.position(node);
        if p1.terminal(x) > p2.terminal(x) {
            return Ok(Some(alloc::format!("g₁ > g₂ at x = {x:?}")));
        }
        if exterior == ExteriorPolicy::ExtendTerminal {
            for dir in Direction::all(d1) {
                if mesh.neighbor(node, dir).is_none() {
                    let y = mesh.exterior_position(node, dir);
                    if p1.terminal(&y) > p2.terminal(&y) {
                        return Ok(Some(alloc::format!("g₁ > g₂ at exterior x = {y:?}")));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Which solver a convergence study runs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StudyScheme {
    Implicit(SolverConfig),
    Semidiscrete(SemidiscreteConfig),
    /// Compares the stationary solution with the oracle at `t = 0`.
    Elliptic(EllipticConfig),
}

impl Default for StudyScheme {
    fn default() -> Self {
        StudyScheme::Implicit(SolverConfig::default())
    }
}

/// Width of the boundary strip left out of error measurements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MarginRule {
    /// Transport reach plus diffusive spread: `K·T + 6√(2 a_max T)` for the
    /// parabolic schemes and `K/λ + 10√(a_max/λ)` for the stationary one.
    #[default]
    Auto,
    /// Fixed physical width.
    Width(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StudyConfig {
    pub scheme: StudyScheme,
    pub margin: MarginRule,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct ConvergenceReport {
    /// `(τ, h)` of each successful mesh.
    pub mesh_params: Vec<(f64, f64)>,
    pub errors: Vec<f64>,
    /// Slope of `ln(error)` against `ln(h)`; `None` when fewer than three
    /// errors exceed [`EXACT_ERROR`].
    pub fitted_order: Option<f64>,
    /// `exp(intercept)` of the same fit.
    pub fitted_constant: Option<f64>,
    /// Order between each mesh and the previous one.
    pub pairwise_orders: Vec<Option<f64>>,
    /// Excluded boundary layers per mesh.
    pub margins: Vec<usize>,
    /// `(mesh index, message)` of meshes whose solve failed.
    pub failures: Vec<(usize, String)>,
}

/// Least-squares fit of `ln e = p ln h + ln C`; returns `(p, C)`.
pub fn fit_order(h: &[f64], errors: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > EXACT_ERROR)
        .map(|(&h, &e)| (libm::log(h), libm::log(e)))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, libm::exp(my - slope * mx)))
}

fn pairwise(h: &[f64], e: &[f64]) -> Vec<Option<f64>> {
    (0..h.len())
        .map(|i| {
            (i > 0 && e[i] > EXACT_ERROR && e[i - 1] > EXACT_ERROR)
                .then(|| libm::log(e[i - 1] / e[i]) / libm::log(h[i - 1] / h[i]))
        })
        .collect()
}

/// Physical margin width for one mesh.
pub fn margin_width(problem: &ControlProblem, mesh: &Mesh, config: &StudyConfig) -> Result<f64> {
    match config.margin {
        MarginRule::Width(w) => Ok(w),
        MarginRule::Auto => {
            let a_max = (0..mesh.n_time())
                .take(if problem.time_independent { 1 } else { usize::MAX })
                .map(|j| Snapshot::evaluate(problem, mesh, mesh.time_levels()[j]).map(|s| s.max_diffusion()))
                .try_fold(0.0_f64, |m, a| a.map(|a| m.max(a)))?;
            let k = problem.bound;
            Ok(match config.scheme {
                StudyScheme::Elliptic(_) => {
                    let l = problem.lambda;
                    k / l + 10.0 * libm::sqrt(a_max / l)
                }
                _ => {
                    let t = mesh.horizon();
                    k * t + 6.0 * libm::sqrt(2.0 * a_max * t)
                }
            })
        }
    }
}

/// Sup error against `oracle` over the interior of each mesh, followed by a
/// log-log fit.
pub fn convergence_study(
    problem: &ControlProblem,
    oracle: &ExactSolution,
    family: &[MeshSpec],
    config: &StudyConfig,
) -> Result<ConvergenceReport> {
    if family.len() < 3 {
        return Err(Error::Config(alloc::format!(
            "a convergence study needs at least 3 meshes, got {}",
            family.len()
        )));
    }
    let mut report = ConvergenceReport {
        mesh_params: Vec::new(),
        errors: Vec::new(),
        fitted_order: None,
        fitted_constant: None,
        pairwise_orders: Vec::new(),
        margins: Vec::new(),
        failures: Vec::new(),
    };
    for (i, spec) in family.iter().enumerate() {
        let mesh = Arc::new(Mesh::new(spec.clone())?);
        let width = margin_width(problem, &mesh, config)?;
        let layers = libm::ceil(width / mesh.h() - 1e-9).max(0.0) as usize;
        if layers > mesh.index_radius() {
            return Err(Error::Config(alloc::format!(
                "mesh {i}: a margin of {layers} layers leaves no interior in a box of radius {}; increase R",
                mesh.index_radius()
            )));
        }
        match interior_error(problem, oracle, &mesh, layers, &config.scheme) {
            Ok(e) => {
                report.mesh_params.push((mesh.tau(), mesh.h()));
                report.errors.push(e);
                report.margins.push(layers);
            }
            Err(e) if e.is_solver_failure() => report.failures.push((i, alloc::format!("{e}"))),
            Err(e) => return Err(e),
        }
    }
    let hs: Vec<f64> = report.mesh_params.iter().map(|p| p.1).collect();
    if let Some((p, c)) = fit_order(&hs, &report.errors) {
        report.fitted_order = Some(p);
        report.fitted_constant = Some(c);
    }
    report.pairwise_orders = pairwise(&hs, &report.errors);
    Ok(report)
}

fn interior_error(
    problem: &ControlProblem,
    oracle: &ExactSolution,
    mesh: &Arc<Mesh>,
    layers: usize,
    scheme: &StudyScheme,
) -> Result<f64> {
    let interior: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| mesh.depth(i) >= layers).collect();
    let field_error = |field: &GridFunction| {
        let mut err: f64 = 0.0;
        for (j, &t) in mesh.time_levels().iter().enumerate() {
            for &i in &interior {
                err = err.max((field.get(j, i) - oracle.eval(t, mesh.position(i))).abs());
            }
        }
        err
    };
    match scheme {
        StudyScheme::Implicit(cfg) => Ok(field_error(&solve_parabolic(problem, mesh, cfg)?.field)),
        StudyScheme::Semidiscrete(cfg) => Ok(field_error(&solve_semidiscrete(problem, mesh, cfg)?.field)),
        StudyScheme::Elliptic(cfg) => {
            let u = solve_elliptic(problem, mesh, cfg)?.field;
            Ok(interior
                .iter()
                .fold(0.0, |m, &i| m.max((u[i] - oracle.eval(0.0, mesh.position(i))).abs())))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct EllipticLimitReport {
    pub horizons: Vec<f64>,
    /// `sup |u_stationary − v^T(0)|` for each horizon.
    pub gaps: Vec<f64>,
    /// `gap(T_i) / gap(T_{i+1})`.
    pub decay_ratios: Vec<f64>,
    pub value_iteration_residual: f64,
}

impl EllipticLimitReport {
    pub fn final_gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(f64::NAN)
    }
}

/// Compares the stationary solution with the `t = 0` slice of the parabolic
/// solution with `g ≡ 0` over several horizons (time step `mesh.tau()`).
pub fn check_elliptic_limit(
    problem: &ControlProblem,
    mesh: &Mesh,
    horizons: &[f64],
    config: &EllipticConfig,
) -> Result<EllipticLimitReport> {
    let vi = EllipticConfig {
        mode: EllipticMode::ValueIteration,
        ..*config
    };
    let stationary = solve_elliptic(problem, mesh, &vi)?;
    let zero_terminal = problem.clone().with_terminal(|_| 0.0);
    let solver = SolverConfig::default().with_exterior(config.exterior);
    let mut gaps = Vec::new();
    for &t in horizons {
        let m = Arc::new(Mesh::new(mesh.spec().with_time(t, mesh.tau()))?);
        let v = solve_parabolic(&zero_terminal, &m, &solver)?;
        gaps.push(sup_diff(v.field.slice(0), &stationary.field));
    }
    let decay_ratios = gaps.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(EllipticLimitReport {
        horizons: horizons.to_vec(),
        gaps,
        decay_ratios,
        value_iteration_residual: stationary.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct ComplementarityReport {
    /// `max (aΔ_h u − cu)₊`.
    pub residual1: f64,
    /// `max (g − u)₊`.
    pub residual2: f64,
    /// `max |aΔ_h u − cu|` where `u > g + 10/M`.
    pub residual3: f64,
    pub tolerances: [f64; 3],
    pub passed: bool,
}

/// Complementarity residuals of a stationary obstacle solution `u`. Nodes on
/// the box boundary are skipped.
pub fn check_obstacle_complementarity(
    u: &[f64],
    g_obs: &dyn Fn(&[f64]) -> f64,
    mesh: &Mesh,
    obstacle: &Obstacle,
) -> ComplementarityReport {
    let h2 = mesh.h() * mesh.h();
    let margin = 10.0 / obstacle.penalty;
    let (mut r1, mut r2, mut r3): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for node in 0..mesh.n_nodes() {
        let x = mesh.position(node);
        r2 = r2.max(g_obs(x) - u[node]);
        if mesh.depth(node) == 0 {
            continue;
        }
        let mut lap = 0.0;
        for k in 0..mesh.n_directions() {
            let p = mesh.neighbor(node, Direction { axis: k, forward: true });
            let m = mesh.neighbor(node, Direction { axis: k, forward: false });
            if let (Some(p), Some(m)) = (p, m) {
                lap += (u[p] - 2.0 * u[node] + u[m]) / h2;
            }
        }
        let lu = obstacle.diffusion * lap - obstacle.discount * u[node];
        r1 = r1.max(lu);
        if u[node] > g_obs(x) + margin {
            r3 = r3.max(lu.abs());
        }
    }
    let tolerances = [1e-6, 2.0 / obstacle.penalty, 1e-4];
    ComplementarityReport {
        residual1: r1,
        residual2: r2,
        residual3: r3,
        tolerances,
        passed: r1 <= tolerances[0] && r2 <= tolerances[1] && r3 <= tolerances[2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::catalog;

    fn line_mesh(t: f64, tau: f64, h: f64, r: usize) -> Arc<Mesh> {
        Arc::new(Mesh::new(MeshSpec::line(t, tau, h, r)).unwrap())
    }

    #[test]
    fn regularity_of_simple_fields() {
        let mesh = line_mesh(1.0, 0.25, 0.5, 4);
        let c = GridFunction::from_fn(mesh.clone(), |_, _| 3.0);
        let r = measure_regularity(&c);
        assert_eq!((r.lipschitz_x, r.holder_t), (0.0, 0.0));
        let x = GridFunction::from_fn(mesh.clone(), |_, x| x[0]);
        let r = measure_regularity(&x);
        assert!((r.lipschitz_x - 1.0).abs() < 1e-15);
        assert_eq!(r.holder_t, 0.0);
        // √t has Hölder quotient exactly 1 against t = 0
        let s = GridFunction::from_fn(mesh, |t, _| libm::sqrt(t));
        assert!((measure_regularity(&s).holder_t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn holder_scan_ignores_pairs_beyond_one() {
        let mesh = line_mesh(4.0, 1.0, 1.0, 1);
        // jumps only between t = 0 and t = 4
        let u = GridFunction::from_fn(mesh, |t, _| if t > 3.5 { 1.0 } else { 0.0 });
        assert!((measure_regularity(&u).holder_t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_power_law() {
        let h = [0.4, 0.2, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        let (p, c) = fit_order(&h, &e).unwrap();
        assert!((p - 2.0).abs() < 1e-12 && (c - 3.0).abs() < 1e-10);
        assert!(fit_order(&h, &[0.0; 4]).is_none());
    }

    #[test]
    fn const_study_is_exact() {
        let entry = catalog("const").unwrap();
        let family: Vec<MeshSpec> = [0.5, 0.25, 0.125]
            .iter()
            .map(|&h| MeshSpec::line(1.0, h, h, (4.0 / h) as usize))
            .collect();
        let report = convergence_study(
            &entry.problem,
            entry.exact.as_ref().unwrap(),
            &family,
            &StudyConfig::default(),
        )
        .unwrap();
        assert!(report.errors.iter().all(|&e| e <= EXACT_ERROR));
        assert!(report.fitted_order.is_none());
    }

    #[test]
    fn study_rejects_short_family_and_tiny_box() {
        let entry = catalog("heat1d").unwrap();
        let exact = entry.exact.unwrap();
        let one = [MeshSpec::line(1.0, 0.1, 0.1, 5)];
        assert!(matches!(
            convergence_study(&entry.problem, &exact, &one, &StudyConfig::default()),
            Err(Error::Config(_))
        ));
        let small = [
            MeshSpec::line(1.0, 0.1, 0.1, 5),
            MeshSpec::line(1.0, 0.05, 0.05, 10),
            MeshSpec::line(1.0, 0.025, 0.025, 20),
        ];
        assert!(matches!(
            convergence_study(&entry.problem, &exact, &small, &StudyConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn comparison_reports_inapplicable_pairs() {
        let entry = catalog("heat1d").unwrap();
        let mesh = line_mesh(0.5, 0.1, 0.25, 8);
        let lower = entry.problem.clone().shift_terminal(1.0);
        let r = check_comparison(&lower, &entry.problem, &mesh, &SolverConfig::default()).unwrap();
        assert!(!r.applicable && !r.passed);
        let r = check_comparison(&entry.problem, &lower, &mesh, &SolverConfig::default()).unwrap();
        assert!(r.applicable && r.passed);
        assert!(r.min_gap > 1.0 - 1e-9 && r.max_gap < 1.0 + 1e-9);
    }

    #[test]
    fn decay_limit_closed_form() {
        let p = ControlProblem::new("decay", 1)
            .with_discount(|_, _, _| 1.0)
            .with_running(|_, _, _| 1.0)
            .with_constants(1.0, 1.0);
        let mesh = Mesh::new(MeshSpec::line(1.0, 0.05, 0.5, 2)).unwrap();
        let r = check_elliptic_limit(&p, &mesh, &[2.0, 4.0, 8.0], &EllipticConfig::default()).unwrap();
        assert!(r.final_gap() <= libm::exp(-4.0) + 1e-8);
        assert!(r.decay_ratios.iter().all(|&q| q >= 2.0));
    }
}
