//! The implicit scheme
//!
//! ```text
//! δ_τ^T u + F(Δ_{h,ℓ_k} u, δ_{h,ℓ_k} u, u, t, x) = 0,   u(T, ·) = g,
//! ```
//!
//! solved backward one time level at a time. On each level the unknown `w`
//! is the fixed point of the monotone contraction
//!
//! ```text
//! G[w](x) = sup_α [ p_τ u_next(x) + Σ_k p_k^α w(x + hℓ_k) + p^α w(x) + ε f^α ]
//! ```
//!
//! with `p_τ = ε/τ`, `p_k^α = ε(a_k^α/h² + b_k^α/h)` and
//! `p^α = 1 − p_τ − Σ_k p_k^α − ε c^α`, all nonnegative for the `ε` chosen by
//! [`choose_contraction_params`]. Since each level depends only on the next
//! one, solving level by level gives the same function as iterating the
//! global space-time map.
//!
//! Two slice solvers are provided: plain fixed-point iteration, and Howard's
//! policy iteration (freeze the maximizing controls, solve the linear system
//! by Jacobi sweeps, re-optimize).

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lattice::{ExteriorPolicy, GridFunction, Mesh};
use crate::problems::ControlProblem;
use crate::stencil::{Neighbors, Snapshot, Weights};
use crate::sweep::{fill, sup_diff};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Fraction of the largest admissible `ε` actually used.
pub const EPSILON_SAFETY: f64 = 0.95;

/// Default slice tolerance before scaling by `1 − δ`.
pub const DEFAULT_FIXED_POINT_ERROR: f64 = 1e-10;

pub const DEFAULT_BANACH_MAX_ITER: usize = 1_000_000;
pub const DEFAULT_HOWARD_MAX_ITER: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    #[default]
    Banach,
    Howard,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SolverConfig {
    pub method: Method,
    /// Absolute sup-norm tolerance on `G[w] − w`; `None` means
    /// `1e−10 · (1 − δ)`.
    pub tol: Option<f64>,
    /// Iteration cap (outer iterations for Howard).
    pub max_iter: Option<usize>,
    pub exterior: ExteriorPolicy,
}

impl SolverConfig {
    pub fn howard() -> Self {
        SolverConfig {
            method: Method::Howard,
            ..Default::default()
        }
    }

    pub fn with_exterior(mut self, exterior: ExteriorPolicy) -> Self {
        self.exterior = exterior;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn slice_tol(&self, params: &ContractionParams) -> f64 {
        self.tol
            .unwrap_or(DEFAULT_FIXED_POINT_ERROR * (1.0 - params.contraction_factor))
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iter.unwrap_or(match self.method {
            Method::Banach => DEFAULT_BANACH_MAX_ITER,
            Method::Howard => DEFAULT_HOWARD_MAX_ITER,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ContractionParams {
    pub epsilon: f64,
    pub gamma: f64,
    /// Guaranteed Lipschitz constant `δ` of the slice map in sup norm.
    pub contraction_factor: f64,
    pub tau: f64,
}

impl ContractionParams {
    /// `p_τ = εγ/τ`.
    pub fn p_tau(&self) -> f64 {
        self.epsilon * self.gamma / self.tau
    }

    /// `ν = (1 − γ)/τ`.
    pub fn nu(&self) -> f64 {
        (1.0 - self.gamma) / self.tau
    }
}

/// Picks `ε = 0.95 / (1/τ + max[Σ_k 2a_k/h² + Σ_k |b_k|/h + c])` over all
/// nodes, controls and time levels below `T`, with `γ = 1`, so every weight
/// is nonnegative and `δ = 1 − ε/τ`.
pub fn choose_contraction_params(problem: &ControlProblem, mesh: &Mesh) -> Result<ContractionParams> {
    let rate = max_rate(problem, mesh)?;
    let tau = mesh.tau();
    let epsilon = EPSILON_SAFETY / (1.0 / tau + rate);
    Ok(ContractionParams {
        epsilon,
        gamma: 1.0,
        contraction_factor: 1.0 - epsilon / tau,
        tau,
    })
}

/// Largest `Σ_k 2a_k/h² + Σ_k |b_k|/h + c` over nodes, controls and levels.
pub(crate) fn max_rate(problem: &ControlProblem, mesh: &Mesh) -> Result<f64> {
    let levels = mesh.time_levels();
    let n = if problem.time_independent { 1 } else { mesh.n_time() };
    let mut rate: f64 = 0.0;
    for &t in &levels[..n] {
        rate = rate.max(Snapshot::evaluate(problem, mesh, t)?.max_rate(mesh.h()));
    }
    Ok(rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct SliceSolveStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub method: Method,
}

struct Slice<'a> {
    weights: Weights,
    neighbors: &'a Neighbors,
    p_tau: f64,
    u_next: &'a [f64],
}

impl Slice<'_> {
    fn apply(&self, w: &[f64], out: &mut [f64]) {
        fill(out, |i| self.weights.best(i, w, self.neighbors, self.p_tau * self.u_next[i]).0);
    }

    fn policy(&self, w: &[f64], out: &mut [usize]) {
        fill(out, |i| self.weights.best(i, w, self.neighbors, self.p_tau * self.u_next[i]).1);
    }

    fn banach(&self, tol: f64, max_iter: usize) -> Result<(Vec<f64>, SliceSolveStats)> {
        let mut w = self.u_next.to_vec();
        let mut next = alloc::vec![0.0; w.len()];
        let mut residual = f64::INFINITY;
        for it in 1..=max_iter {
            self.apply(&w, &mut next);
            residual = sup_diff(&next, &w);
            core::mem::swap(&mut w, &mut next);
            if residual <= tol {
                return Ok((
                    w,
                    SliceSolveStats {
                        iterations: it,
                        final_residual: residual,
                        method: Method::Banach,
                    },
                ));
            }
        }
        Err(Error::Convergence {
            iterations: max_iter,
            residual,
            slice: None,
        })
    }

    fn howard(&self, tol: f64, max_outer: usize) -> Result<(Vec<f64>, SliceSolveStats)> {
        let n = self.u_next.len();
        let mut w = self.u_next.to_vec();
        let mut scratch = alloc::vec![0.0; n];
        let mut policy = alloc::vec![0usize; n];
        let mut new_policy = alloc::vec![0usize; n];
        self.policy(&w, &mut policy);
        let inner_tol = 0.1 * tol;
        let mut residual = f64::INFINITY;
        for outer in 1..=max_outer {
            // policy evaluation
            let mut converged = false;
            for _ in 0..DEFAULT_BANACH_MAX_ITER {
                fill(&mut scratch, |i| {
                    self.weights
                        .jacobi(i, policy[i], &w, self.neighbors, self.p_tau * self.u_next[i])
                });
                let change = sup_diff(&scratch, &w);
                core::mem::swap(&mut w, &mut scratch);
                if change <= inner_tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Convergence {
                    iterations: outer,
                    residual,
                    slice: None,
                });
            }
            // policy improvement
            self.apply(&w, &mut scratch);
            residual = sup_diff(&scratch, &w);
            self.policy(&w, &mut new_policy);
            if new_policy == policy && residual <= tol {
                return Ok((
                    w,
                    SliceSolveStats {
                        iterations: outer,
                        final_residual: residual,
                        method: Method::Howard,
                    },
                ));
            }
            core::mem::swap(&mut policy, &mut new_policy);
        }
        Err(Error::Convergence {
            iterations: max_outer,
            residual,
            slice: None,
        })
    }
}

fn slice_weights(problem: &ControlProblem, mesh: &Mesh, params: &ContractionParams, t: f64) -> Result<Weights> {
    let snap = Snapshot::evaluate(problem, mesh, t)?;
    Weights::new(&snap, mesh.h(), params.epsilon, 1.0 / params.tau)
}

fn check_len(mesh: &Mesh, v: &[f64]) -> Result<()> {
    if v.len() != mesh.n_nodes() {
        return Err(Error::Config(alloc::format!(
            "spatial field has {} values, mesh has {} nodes",
            v.len(),
            mesh.n_nodes()
        )));
    }
    Ok(())
}

/// One application of `G` on level `j`, given the next level `u_next`.
pub fn slice_fixed_point_map(
    problem: &ControlProblem,
    mesh: &Mesh,
    params: &ContractionParams,
    u_next: &[f64],
    w: &[f64],
    j: usize,
    exterior: ExteriorPolicy,
) -> Result<Vec<f64>> {
    check_len(mesh, u_next)?;
    check_len(mesh, w)?;
    let neighbors = Neighbors::new(mesh, exterior, problem);
    let slice = Slice {
        weights: slice_weights(problem, mesh, params, mesh.time_levels()[j])?,
        neighbors: &neighbors,
        p_tau: params.p_tau(),
        u_next,
    };
    let mut out = alloc::vec![0.0; w.len()];
    slice.apply(w, &mut out);
    Ok(out)
}

/// Solves level `j` given level `j + 1`, starting from `u_next`.
pub fn solve_slice(
    problem: &ControlProblem,
    mesh: &Mesh,
    params: &ContractionParams,
    u_next: &[f64],
    j: usize,
    config: &SolverConfig,
) -> Result<(Vec<f64>, SliceSolveStats)> {
    check_len(mesh, u_next)?;
    if u_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("next level contains non-finite values".into()));
    }
    let neighbors = Neighbors::new(mesh, config.exterior, problem);
    let slice = Slice {
        weights: slice_weights(problem, mesh, params, mesh.time_levels()[j])?,
        neighbors: &neighbors,
        p_tau: params.p_tau(),
        u_next,
    };
    run(&slice, params, config).map_err(|e| e.in_slice(j))
}

fn run(slice: &Slice<'_>, params: &ContractionParams, config: &SolverConfig) -> Result<(Vec<f64>, SliceSolveStats)> {
    let tol = config.slice_tol(params);
    match config.method {
        Method::Banach => slice.banach(tol, config.iteration_cap()),
        Method::Howard => slice.howard(tol, config.iteration_cap()),
    }
}

#[derive(Debug, Clone)]
pub struct ParabolicSolution {
    pub field: GridFunction,
    pub params: ContractionParams,
    /// Stats for levels `0..n`, indexed by level.
    pub slices: Vec<SliceSolveStats>,
}

/// Solves the implicit scheme on the whole mesh: `u(T) = g`, then levels
/// `n − 1, …, 0`.
pub fn solve_parabolic(
    problem: &ControlProblem,
    mesh: &Arc<Mesh>,
    config: &SolverConfig,
) -> Result<ParabolicSolution> {
    let params = choose_contraction_params(problem, mesh)?;
    solve_parabolic_with(problem, mesh, config, params)
}

pub fn solve_parabolic_with(
    problem: &ControlProblem,
    mesh: &Arc<Mesh>,
    config: &SolverConfig,
    params: ContractionParams,
) -> Result<ParabolicSolution> {
    let n = mesh.n_time();
    let levels = mesh.time_levels();
    let neighbors = Neighbors::new(mesh, config.exterior, problem);
    let mut field = GridFunction::zeros(mesh.clone());
    for node in 0..mesh.n_nodes() {
        let g = problem.terminal(mesh.position(node));
        if !g.is_finite() {
            return Err(Error::Evaluation {
                what: "terminal data",
                control: 0,
                t: mesh.horizon(),
                x: mesh.position(node).to_vec(),
            });
        }
        field.set(n, node, g);
    }

    let mut cached: Option<Weights> = None;
    let mut stats = alloc::vec![
        SliceSolveStats {
            iterations: 0,
            final_residual: 0.0,
            method: config.method,
        };
        n
    ];
    for j in (0..n).rev() {
        let weights = match (&cached, problem.time_independent) {
            (Some(w), true) => w.clone(),
            _ => {
                let w = slice_weights(problem, mesh, &params, levels[j]).map_err(|e| e.in_slice(j))?;
                if problem.time_independent {
                    cached = Some(w.clone());
                }
                w
            }
        };
        let u_next = field.slice(j + 1).to_vec();
        let slice = Slice {
            weights,
            neighbors: &neighbors,
            p_tau: params.p_tau(),
            u_next: &u_next,
        };
        let (w, s) = run(&slice, &params, config).map_err(|e| e.in_slice(j))?;
        field.slice_mut(j).copy_from_slice(&w);
        stats[j] = s;
    }
    Ok(ParabolicSolution {
        field,
        params,
        slices: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::MeshSpec;
    use crate::problems::catalog;

    fn mesh(spec: MeshSpec) -> Arc<Mesh> {
        Arc::new(Mesh::new(spec).unwrap())
    }

    #[test]
    fn contraction_params_examples() {
        // a = 1/2, τ = h² = 0.01: ε = 0.95 / (100 + 100)
        let heat = ControlProblem::new("h", 1).with_sigma(|_, _, _, _| 1.0);
        let m = mesh(MeshSpec::line(1.0, 0.01, 0.1, 5));
        let p = choose_contraction_params(&heat, &m).unwrap();
        assert!((p.epsilon - 0.00475).abs() < 1e-15);
        assert!((p.contraction_factor - 0.525).abs() < 1e-12);

        let decay = ControlProblem::new("c", 1).with_discount(|_, _, _| 1.0);
        let m = mesh(MeshSpec::line(1.0, 0.1, 0.1, 5));
        let p = choose_contraction_params(&decay, &m).unwrap();
        assert!((p.epsilon - 0.95 / 11.0).abs() < 1e-15);
        assert!((p.contraction_factor - (1.0 - 9.5 / 11.0)).abs() < 1e-12);
        assert!((p.contraction_factor - 0.136).abs() < 1e-3);

        let zero = ControlProblem::new("z", 1);
        let m = mesh(MeshSpec::line(1.0, 1.0, 0.1, 5));
        let p = choose_contraction_params(&zero, &m).unwrap();
        assert!((p.epsilon - 0.95).abs() < 1e-15);
        assert!((p.contraction_factor - 0.05).abs() < 1e-12);
    }

    #[test]
    fn heat_weights_are_nonnegative() {
        // enumerate p_τ, p_±, p for a = 1/2, τ = h² = 0.01
        let (eps, tau, h, a): (f64, f64, f64, f64) = (0.00475, 0.01, 0.1, 0.5);
        let p_tau = eps / tau;
        let p_k = eps * a / (h * h);
        let p = 1.0 - p_tau - 2.0 * p_k;
        assert!(p_tau >= 0.0 && p_k >= 0.0 && p >= 0.0);
        assert!((p_tau + 2.0 * p_k + p - 1.0).abs() < 1e-15);
        assert!((2.0 * p_k + p - 0.525).abs() < 1e-12);
    }

    #[test]
    fn const_problem_is_exact() {
        let entry = catalog("const").unwrap();
        for spec in [MeshSpec::line(1.0, 0.25, 0.5, 4), MeshSpec::line(1.0, 0.4, 0.3, 3)] {
            let m = mesh(spec);
            for cfg in [SolverConfig::default(), SolverConfig::howard()] {
                let sol = solve_parabolic(&entry.problem, &m, &cfg).unwrap();
                assert!(sol.field.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
                assert!(sol.slices.iter().all(|s| s.final_residual < 1e-12));
            }
        }
    }

    #[test]
    fn slice_map_fixes_the_const_solution() {
        let entry = catalog("const").unwrap();
        let m = mesh(MeshSpec::line(1.0, 0.25, 0.5, 4));
        let params = choose_contraction_params(&entry.problem, &m).unwrap();
        let ones = alloc::vec![1.0; m.n_nodes()];
        let out = slice_fixed_point_map(&entry.problem, &m, &params, &ones, &ones, 0, ExteriorPolicy::Clamp).unwrap();
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn solved_slice_is_a_fixed_point() {
        let entry = catalog("transport_kink").unwrap();
        let m = mesh(MeshSpec::line(1.0, 0.1, 0.1, 20));
        let params = choose_contraction_params(&entry.problem, &m).unwrap();
        let g: Vec<f64> = (0..m.n_nodes()).map(|n| entry.problem.terminal(m.position(n))).collect();
        let cfg = SolverConfig::default();
        let (w, stats) = solve_slice(&entry.problem, &m, &params, &g, 9, &cfg).unwrap();
        let again = slice_fixed_point_map(&entry.problem, &m, &params, &g, &w, 9, cfg.exterior).unwrap();
        assert!(sup_diff(&w, &again) <= cfg.slice_tol(&params));
        assert!(stats.final_residual <= cfg.slice_tol(&params));
    }

    #[test]
    fn iteration_cap_reports_slice() {
        let entry = catalog("heat1d").unwrap();
        let m = mesh(MeshSpec::line(1.0, 0.01, 0.1, 20));
        let cfg = SolverConfig {
            max_iter: Some(2),
            ..Default::default()
        };
        match solve_parabolic(&entry.problem, &m, &cfg) {
            Err(Error::Convergence { slice: Some(j), .. }) => assert_eq!(j, m.n_time() - 1),
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn banach_and_howard_agree_on_transport() {
        let entry = catalog("transport_kink").unwrap();
        let m = mesh(MeshSpec::line(1.0, 0.05, 0.05, 60));
        let a = solve_parabolic(&entry.problem, &m, &SolverConfig::default()).unwrap();
        let b = solve_parabolic(&entry.problem, &m, &SolverConfig::howard()).unwrap();
        assert!(sup_diff(a.field.values(), b.field.values()) <= 1e-9);
    }

    #[test]
    fn nan_coefficient_is_an_evaluation_error() {
        let p = ControlProblem::new("nan", 1).with_running(|_, t, _| if t > 0.4 { f64::NAN } else { 0.0 }).time_dependent();
        let m = mesh(MeshSpec::line(1.0, 0.25, 0.5, 2));
        assert!(matches!(
            solve_parabolic(&p, &m, &SolverConfig::default()),
            Err(Error::Evaluation { .. })
        ));
    }
}
