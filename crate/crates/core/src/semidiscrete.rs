//! Spatial semidiscretization: the lattice ODE system
//! `∂_t u + F(Δ_{h,ℓ_k} u, δ_{h,ℓ_k} u, u, t, x) = 0`, `u(T) = g`,
//! integrated backward with explicit Euler sub-steps.
//!
//! A sub-step of length `s` is `u ← sup_α [Σ p_k u(x + hℓ_k) + p u + s f]` with
//! `p_k = s(a_k/h² + b_k/h)` and `p = 1 − Σ p_k − s c`; it is monotone as long
//! as `s · max(Σ 2a_k/h² + Σ b_k/h + c) ≤ 1`.

use alloc::sync::Arc;

use crate::error::{Error, Result};
use crate::implicit::max_rate;
use crate::lattice::{ExteriorPolicy, GridFunction, Mesh};
use crate::problems::ControlProblem;
use crate::stencil::{Neighbors, Snapshot, Weights};
use crate::sweep::fill;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SemidiscreteConfig {
    /// Forced sub-step; `None` picks `safety / rate`.
    pub internal_step: Option<f64>,
    pub safety: f64,
    pub exterior: ExteriorPolicy,
}

impl Default for SemidiscreteConfig {
    fn default() -> Self {
        SemidiscreteConfig {
            internal_step: None,
            safety: 0.9,
            exterior: ExteriorPolicy::Clamp,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SemidiscreteSolution {
    pub field: GridFunction,
    /// Largest sub-step used.
    pub internal_step: f64,
    pub substeps: usize,
}

/// Largest monotone sub-step, `1 / max(Σ 2a_k/h² + Σ b_k/h + c)`.
pub fn monotone_step_bound(problem: &ControlProblem, mesh: &Mesh) -> Result<f64> {
    let rate = max_rate(problem, mesh)?;
    Ok(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY })
}

pub fn solve_semidiscrete(
    problem: &ControlProblem,
    mesh: &Arc<Mesh>,
    config: &SemidiscreteConfig,
) -> Result<SemidiscreteSolution> {
    if !(config.safety > 0.0 && config.safety < 1.0) {
        return Err(Error::Config(alloc::format!(
            "safety factor must lie in (0, 1), got {}",
            config.safety
        )));
    }
    let bound = config.safety * monotone_step_bound(problem, mesh)?;
    let step = match config.internal_step {
        Some(s) if !(s > 0.0) => {
            return Err(Error::Config(alloc::format!("internal step must be positive, got {s}")))
        }
        Some(s) if s > bound => {
            return Err(Error::Config(alloc::format!(
                "internal step {s} exceeds the monotonicity bound {bound}"
            )))
        }
        Some(s) => s,
        None => bound.min(mesh.tau()),
    };

    let n = mesh.n_time();
    let levels = mesh.time_levels();
    let h = mesh.h();
    let neighbors = Neighbors::new(mesh, config.exterior, problem);
    let mut field = GridFunction::zeros(mesh.clone());
    for node in 0..mesh.n_nodes() {
        field.set(n, node, problem.terminal(mesh.position(node)));
    }
    if !field.slice(n).iter().all(|v| v.is_finite()) {
        return Err(Error::Evaluation {
            what: "terminal data",
            control: 0,
            t: mesh.horizon(),
            x: alloc::vec::Vec::new(),
        });
    }

    let mut u = field.slice(n).to_vec();
    let mut next = alloc::vec![0.0; u.len()];
    let mut cached: Option<(f64, Weights)> = None;
    let mut substeps = 0;
    let mut max_used: f64 = 0.0;
    for j in (0..n).rev() {
        let gap = levels[j + 1] - levels[j];
        let m = libm::ceil(gap / step - 1e-9).max(1.0) as usize;
        let s = gap / m as f64;
        max_used = max_used.max(s);
        for i in 0..m {
            let t = levels[j + 1] - i as f64 * s;
            let weights = match &cached {
                Some((cs, w)) if problem.time_independent && *cs == s => w.clone(),
                _ => {
                    let snap = Snapshot::evaluate(problem, mesh, t)?;
                    let w = Weights::new(&snap, h, s, 0.0)?;
                    if problem.time_independent {
                        cached = Some((s, w.clone()));
                    }
                    w
                }
            };
            fill(&mut next, |k| weights.best(k, &u, &neighbors, 0.0).0);
            core::mem::swap(&mut u, &mut next);
            substeps += 1;
        }
        field.slice_mut(j).copy_from_slice(&u);
    }
    Ok(SemidiscreteSolution {
        field,
        internal_step: max_used,
        substeps,
    })
}
