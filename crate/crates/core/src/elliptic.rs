//! The stationary scheme `sup_α [L_h^α u + f^α] = 0` for time-independent
//! coefficients with `c ≥ λ > 0`.
//!
//! Two independent routes: value iteration `u ← u + ε sup_α[L_h^α u + f^α]`
//! (a contraction with factor `1 − ελ`), and the long-horizon limit of the
//! implicit parabolic scheme with zero terminal data.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::implicit::{solve_parabolic, SolverConfig, EPSILON_SAFETY};
use crate::lattice::{ExteriorPolicy, Mesh};
use crate::problems::ControlProblem;
use crate::stencil::{Neighbors, Snapshot, Weights};
use crate::sweep::{fill, sup_diff};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EllipticMode {
    #[default]
    ValueIteration,
    LongHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EllipticConfig {
    pub mode: EllipticMode,
    /// Value iteration: bound on `sup|sup_α[L_h u + f]|`. Long horizon: bound
    /// on the change between successive horizons.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest horizon tried in long-horizon mode.
    pub horizon_max: f64,
    pub horizon_start: f64,
    /// Time step of the long-horizon parabolic solves.
    pub horizon_tau: f64,
    pub exterior: ExteriorPolicy,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        EllipticConfig {
            mode: EllipticMode::ValueIteration,
            tol: 1e-8,
            max_iter: 10_000_000,
            horizon_max: 1024.0,
            horizon_start: 1.0,
            horizon_tau: 0.5,
            exterior: ExteriorPolicy::Clamp,
        }
    }
}

impl EllipticConfig {
    pub fn long_horizon() -> Self {
        EllipticConfig {
            mode: EllipticMode::LongHorizon,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub field: Vec<f64>,
    /// Value-iteration sweeps, or number of horizons solved.
    pub iterations: usize,
    /// Final residual (value iteration) or final horizon gap.
    pub residual: f64,
    /// Residual after every sweep (value iteration only).
    pub residual_history: Vec<f64>,
    /// Horizon reached in long-horizon mode.
    pub horizon: Option<f64>,
}

fn check(problem: &ControlProblem) -> Result<()> {
    if !(problem.lambda > 0.0) {
        return Err(Error::Config(alloc::format!(
            "the stationary scheme needs λ > 0, got {}",
            problem.lambda
        )));
    }
    if !problem.time_independent {
        return Err(Error::Config("the stationary scheme needs time-independent coefficients".into()));
    }
    Ok(())
}

pub fn solve_elliptic(problem: &ControlProblem, mesh: &Mesh, config: &EllipticConfig) -> Result<EllipticSolution> {
    match config.mode {
        EllipticMode::ValueIteration => {
            value_iteration(problem, mesh, config, &alloc::vec![0.0; mesh.n_nodes()])
        }
        EllipticMode::LongHorizon => long_horizon(problem, mesh, config),
    }
}

/// Value iteration from a given starting field.
pub fn value_iteration(
    problem: &ControlProblem,
    mesh: &Mesh,
    config: &EllipticConfig,
    initial: &[f64],
) -> Result<EllipticSolution> {
    check(problem)?;
    if initial.len() != mesh.n_nodes() {
        return Err(Error::Config("initial guess has the wrong length".into()));
    }
    let snap = Snapshot::evaluate(problem, mesh, 0.0)?;
    let eps = EPSILON_SAFETY / snap.max_rate(mesh.h());
    let weights = Weights::new(&snap, mesh.h(), eps, 0.0)?;
    let neighbors = Neighbors::new(mesh, config.exterior, problem);

    let mut u = initial.to_vec();
    let mut next = alloc::vec![0.0; u.len()];
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=config.max_iter {
        fill(&mut next, |i| weights.best(i, &u, &neighbors, 0.0).0);
        // (G[u] − u)/ε = sup_α[L_h u + f]
        residual = sup_diff(&next, &u) / eps;
        history.push(residual);
        core::mem::swap(&mut u, &mut next);
        if residual <= config.tol {
            return Ok(EllipticSolution {
                field: u,
                iterations: it,
                residual,
                residual_history: history,
                horizon: None,
            });
        }
    }
    Err(Error::Convergence {
        iterations: config.max_iter,
        residual,
        slice: None,
    })
}

fn long_horizon(problem: &ControlProblem, mesh: &Mesh, config: &EllipticConfig) -> Result<EllipticSolution> {
    check(problem)?;
    let zero_terminal = problem.clone().with_terminal(|_| 0.0);
    let solver = SolverConfig {
        exterior: config.exterior,
        ..Default::default()
    };
    let mut horizon = config.horizon_start;
    let mut previous: Option<Vec<f64>> = None;
    let mut gap = f64::INFINITY;
    let mut solves = 0;
    while horizon <= config.horizon_max {
        let m = Arc::new(Mesh::new(mesh.spec().with_time(horizon, config.horizon_tau))?);
        let sol = solve_parabolic(&zero_terminal, &m, &solver)?;
        let current = sol.field.slice(0).to_vec();
        solves += 1;
        if let Some(prev) = &previous {
            gap = sup_diff(prev, &current);
            if gap < config.tol {
                return Ok(EllipticSolution {
                    field: current,
                    iterations: solves,
                    residual: gap,
                    residual_history: Vec::new(),
                    horizon: Some(horizon),
                });
            }
        }
        previous = Some(current);
        horizon *= 2.0;
    }
    // not Cauchy by horizon_max: λ is likely too small for this problem
    Err(Error::Convergence {
        iterations: solves,
        residual: gap,
        slice: None,
    })
}

/// `sup_x |sup_α [L_h^α u + f^α]|`.
pub fn elliptic_residual(problem: &ControlProblem, mesh: &Mesh, u: &[f64], exterior: ExteriorPolicy) -> Result<f64> {
    let snap = Snapshot::evaluate(problem, mesh, 0.0)?;
    // unit step: the update minus u is exactly L_h u + f
    let weights = Weights::unchecked(&snap, mesh.h(), 1.0);
    let neighbors = Neighbors::new(mesh, exterior, problem);
    let mut out = alloc::vec![0.0; u.len()];
    fill(&mut out, |i| weights.best(i, u, &neighbors, 0.0).0);
    Ok(sup_diff(&out, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::MeshSpec;

    fn line(h: f64, r: usize) -> Mesh {
        Mesh::new(MeshSpec::line(1.0, 0.5, h, r)).unwrap()
    }

    #[test]
    fn pure_decay_gives_one() {
        let p = ControlProblem::new("d", 1)
            .with_discount(|_, _, _| 1.0)
            .with_running(|_, _, _| 1.0)
            .with_constants(1.0, 1.0);
        let mesh = line(0.1, 10);
        for cfg in [EllipticConfig::default(), EllipticConfig::long_horizon()] {
            let sol = solve_elliptic(&p, &mesh, &cfg).unwrap();
            assert!(sol.field.iter().all(|v| (v - 1.0).abs() < 1e-7), "{:?}", cfg.mode);
        }
    }

    #[test]
    fn requires_positive_lambda() {
        let p = ControlProblem::new("d", 1);
        assert!(matches!(
            solve_elliptic(&p, &line(0.1, 3), &EllipticConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn residual_of_solution_is_small() {
        let (p, _) = crate::problems::manufactured_elliptic_cos();
        let mesh = line(0.2, 30);
        let cfg = EllipticConfig::default();
        let sol = solve_elliptic(&p, &mesh, &cfg).unwrap();
        let r = elliptic_residual(&p, &mesh, &sol.field, cfg.exterior).unwrap();
        assert!(r <= cfg.tol);
        assert!(sol.residual_history.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn iteration_cap() {
        let (p, _) = crate::problems::manufactured_elliptic_cos();
        let cfg = EllipticConfig {
            max_iter: 3,
            ..Default::default()
        };
        assert!(matches!(
            solve_elliptic(&p, &line(0.2, 30), &cfg),
            Err(Error::Convergence { iterations: 3, .. })
        ));
    }
}
