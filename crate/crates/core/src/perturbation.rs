//! Shaken problems: coefficients evaluated at `(t + ε²r, x + εy)` over the
//! enlarged control set `A × Λ × S`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::implicit::{solve_parabolic, SolverConfig};
use crate::lattice::Mesh;
use crate::problems::ControlProblem;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ShakeSpec {
    pub epsilon: f64,
    /// Points of the open unit ball.
    pub space_shifts: Vec<Vec<f64>>,
    /// Points of `(−1, 0)`; empty means no time shaking.
    pub time_shifts: Vec<f64>,
    /// Replace `g` by `sup_y g(x + εy)`.
    pub shift_terminal: bool,
}

impl ShakeSpec {
    /// `S = {0, ±0.99 e_j}`, `Λ = {−¼, −½, −¾}`, shifted terminal data.
    pub fn with_defaults(epsilon: f64, dim: usize) -> Self {
        let mut space_shifts = alloc::vec![alloc::vec![0.0; dim]];
        for j in 0..dim {
            for s in [0.99, -0.99] {
                let mut y = alloc::vec![0.0; dim];
                y[j] = s;
                space_shifts.push(y);
            }
        }
        ShakeSpec {
            epsilon,
            space_shifts,
            time_shifts: alloc::vec![-0.25, -0.5, -0.75],
            shift_terminal: true,
        }
    }

    /// `S = {y}`, `Λ = ∅`.
    pub fn singleton(epsilon: f64, y: Vec<f64>) -> Self {
        ShakeSpec {
            epsilon,
            space_shifts: alloc::vec![y],
            time_shifts: Vec::new(),
            shift_terminal: true,
        }
    }

    /// `m` points evenly spaced on the circle of radius `radius` (2-d), or
    /// `{±radius·k/m}` on a line (1-d).
    pub fn ring(epsilon: f64, dim: usize, m: usize, radius: f64) -> Self {
        let space_shifts = match dim {
            1 => (1..=m / 2)
                .flat_map(|k| {
                    let r = radius * k as f64 / (m / 2) as f64;
                    [alloc::vec![r], alloc::vec![-r]]
                })
                .collect(),
            _ => (0..m)
                .map(|k| {
                    let th = 2.0 * core::f64::consts::PI * k as f64 / m as f64;
                    let mut y = alloc::vec![0.0; dim];
                    y[0] = radius * libm::cos(th);
                    y[1] = radius * libm::sin(th);
                    y
                })
                .collect(),
        };
        ShakeSpec {
            epsilon,
            space_shifts,
            time_shifts: Vec::new(),
            shift_terminal: true,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(alloc::format!("shake size must be finite and ≥ 0, got {}", self.epsilon)));
        }
        if self.space_shifts.is_empty() {
            return Err(Error::Config("the space shift set S is empty".into()));
        }
        for y in &self.space_shifts {
            if y.len() != dim {
                return Err(Error::Config(alloc::format!("space shift {y:?} is not {dim}-dimensional")));
            }
            let norm = libm::sqrt(y.iter().map(|v| v * v).sum::<f64>());
            if !(norm < 1.0) {
                return Err(Error::Config(alloc::format!("space shift {y:?} is not in the open unit ball")));
            }
        }
        for &r in &self.time_shifts {
            if !(r > -1.0 && r < 0.0) {
                return Err(Error::Config(alloc::format!("time shift {r} is not in (-1, 0)")));
            }
        }
        Ok(())
    }
}

/// The shaken problem. Control `(α, r, y)` has index `(α·|Λ| + i_r)·|S| + i_y`.
pub fn shake(problem: &ControlProblem, spec: &ShakeSpec) -> Result<ControlProblem> {
    let dim = spec.space_shifts.first().map_or(0, Vec::len);
    spec.validate(dim)?;
    let eps = spec.epsilon;
    let ys: Arc<Vec<Vec<f64>>> = Arc::new(
        spec.space_shifts
            .iter()
            .map(|y| y.iter().map(|v| eps * v).collect())
            .collect(),
    );
    let rs: Arc<Vec<f64>> = Arc::new(if spec.time_shifts.is_empty() {
        alloc::vec![0.0]
    } else {
        spec.time_shifts.iter().map(|r| eps * eps * r).collect()
    });
    let (n_s, n_r) = (ys.len(), rs.len());
    let split = move |c: usize| (c / (n_r * n_s), (c / n_s) % n_r, c % n_s);

    let mut labels: Vec<String> = Vec::new();
    for a in &problem.controls {
        for r in rs.iter() {
            for y in ys.iter() {
                labels.push(alloc::format!("{a}@({r},{y:?})"));
            }
        }
    }

    // Each evaluator needs its own handles; `at` builds the shifted point.
    fn at(ys: &[Vec<f64>], s: usize, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&ys[s]).map(|(a, b)| a + b).collect()
    }
    let (sig, drf, dis, run) = (
        problem.sigma_fn().clone(),
        problem.drift_fn().clone(),
        problem.discount_fn().clone(),
        problem.running_fn().clone(),
    );
    let (y1, y2, y3, y4) = (ys.clone(), ys.clone(), ys.clone(), ys.clone());
    let (r1, r2, r3, r4) = (rs.clone(), rs.clone(), rs.clone(), rs.clone());
    let mut shaken = ControlProblem::new(problem.name.clone() + "~shaken", labels.len())
        .with_labels(labels)
        .with_sigma(move |c, k, t, x| {
            let (a, r, s) = split(c);
            sig(a, k, t + r1[r], &at(&y1, s, x))
        })
        .with_drift(move |c, dir, t, x| {
            let (a, r, s) = split(c);
            drf(a, dir, t + r2[r], &at(&y2, s, x))
        })
        .with_discount(move |c, t, x| {
            let (a, r, s) = split(c);
            dis(a, t + r3[r], &at(&y3, s, x))
        })
        .with_running(move |c, t, x| {
            let (a, r, s) = split(c);
            run(a, t + r4[r], &at(&y4, s, x))
        })
        .with_terminal_fn(problem.terminal_fn().clone())
        .with_constants(problem.bound, problem.lambda);
    shaken.time_independent = problem.time_independent;
    if spec.shift_terminal {
        let g = problem.terminal_fn().clone();
        shaken = shaken.with_terminal(move |x| {
            (0..ys.len()).map(|s| g(&at(&ys, s, x))).fold(f64::NEG_INFINITY, f64::max)
        });
    }
    Ok(shaken)
}

/// Number of boundary layers excluded when comparing shaken and original
/// solutions: `⌈Kε/h⌉`.
pub fn gap_margin(problem: &ControlProblem, mesh: &Mesh, epsilon: f64) -> usize {
    libm::ceil(problem.bound * epsilon / mesh.h() - 1e-9).max(0.0) as usize
}

/// Sup-norm difference between the shaken and the original solution over all
/// levels and the nodes at least [`gap_margin`] layers inside the box.
pub fn shake_gap(problem: &ControlProblem, mesh: &Arc<Mesh>, spec: &ShakeSpec, config: &SolverConfig) -> Result<f64> {
    let shaken = shake(problem, spec)?;
    let original = solve_parabolic(problem, mesh, config)?;
    let perturbed = solve_parabolic(&shaken, mesh, config)?;
    let margin = gap_margin(problem, mesh, spec.epsilon);
    let interior: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| mesh.depth(i) >= margin).collect();
    if interior.is_empty() {
        return Err(Error::Config("the shake margin leaves no interior nodes; enlarge the box".into()));
    }
    let mut gap: f64 = 0.0;
    for j in 0..=mesh.n_time() {
        let (a, b) = (original.field.slice(j), perturbed.field.slice(j));
        for &i in &interior {
            gap = gap.max((a[i] - b[i]).abs());
        }
    }
    Ok(gap)
}
