//! Finite-difference operators and the Bellman nonlinearity.
//!
//! Signed-direction arrays are laid out by [`Direction::slot`]: `+ℓ_1, −ℓ_1,
//! +ℓ_2, −ℓ_2, …`. The operator is
//!
//! ```text
//! L_h^α u = Σ_{k=1..d₁} a_k^α Δ_{h,ℓ_k} u + Σ_{k=±1..±d₁} b_k^α δ_{h,ℓ_k} u − c^α u
//! ```

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lattice::{neighbor_value, Direction, ExteriorPolicy, GridFunction};
use crate::problems::ControlProblem;

/// Values a single-direction stencil reads around one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilValue {
    pub center: f64,
    pub plus: f64,
    pub minus: f64,
    pub next_time: f64,
}

impl StencilValue {
    pub fn forward(&self, h: f64) -> f64 {
        forward_diff(self.center, self.plus, h)
    }

    pub fn backward(&self, h: f64) -> f64 {
        forward_diff(self.center, self.minus, h)
    }

    pub fn second(&self, h: f64) -> f64 {
        second_diff(self.minus, self.center, self.plus, h)
    }

    pub fn time(&self, tau: f64) -> f64 {
        time_diff(self.center, self.next_time, tau)
    }
}

/// `δ_{h,ℓ} u = (u(x + hℓ) − u(x)) / h`.
#[inline]
pub fn forward_diff(at_x: f64, at_shifted: f64, h: f64) -> f64 {
    (at_shifted - at_x) / h
}

/// `Δ_{h,ℓ} u = (u(x + hℓ) − 2u(x) + u(x − hℓ)) / h²`.
#[inline]
pub fn second_diff(minus: f64, center: f64, plus: f64, h: f64) -> f64 {
    (plus - 2.0 * center + minus) / (h * h)
}

/// `δ_τ^T u = (u(t + τ_T(t)) − u(t)) / τ`; the denominator is always `τ`,
/// also on a short final step.
#[inline]
pub fn time_diff(now: f64, next: f64, tau: f64) -> f64 {
    (next - now) / tau
}

/// Arguments of `F(p_k, q_k, r, t, x)`.
#[derive(Debug, Clone, Copy)]
pub struct BellmanArgs<'a> {
    /// `p_k`, one per axis.
    pub second_diffs: &'a [f64],
    /// `q_k`, one per signed direction.
    pub first_diffs: &'a [f64],
    pub value: f64,
    pub t: f64,
    pub x: &'a [f64],
}

/// `sup_α [a_k p_k + b_k q_k − c r + f]` and the first control attaining it.
pub fn bellman_f(problem: &ControlProblem, args: &BellmanArgs<'_>) -> Result<(f64, usize)> {
    if problem.n_controls() == 0 {
        return Err(Error::EmptyControlSet);
    }
    let d1 = args.second_diffs.len();
    if args.first_diffs.len() != 2 * d1 {
        return Err(Error::Config(alloc::format!(
            "expected {} first differences for {d1} axes, got {}",
            2 * d1,
            args.first_diffs.len()
        )));
    }
    let (t, x) = (args.t, args.x);
    let mut best = (f64::NEG_INFINITY, 0);
    for a in 0..problem.n_controls() {
        let mut v = problem.running(a, t, x) - problem.discount(a, t, x) * args.value;
        for (k, p) in args.second_diffs.iter().enumerate() {
            v += problem.diffusion(a, k, t, x) * p;
        }
        for (s, q) in args.first_diffs.iter().enumerate() {
            v += problem.drift(a, Direction::from_slot(s), t, x) * q;
        }
        if !v.is_finite() {
            return Err(Error::Evaluation {
                what: "Bellman expression",
                control: a,
                t,
                x: x.to_vec(),
            });
        }
        if v > best.0 {
            best = (v, a);
        }
    }
    Ok(best)
}

/// `L_h^α u` at `(t_j, node)`, with neighbors outside the box supplied by
/// `exterior`.
pub fn apply_l_h(
    problem: &ControlProblem,
    control: usize,
    u: &GridFunction,
    j: usize,
    node: usize,
    exterior: ExteriorPolicy,
) -> Result<f64> {
    let mesh = u.mesh();
    let (h, d1) = (mesh.h(), mesh.n_directions());
    let t = mesh.time_levels()[j];
    let x = mesh.position(node);
    let idx = mesh.multi_index(node);
    let g = |y: &[f64]| problem.terminal(y);
    let center = u.get(j, node);
    let nb: Vec<f64> = Direction::all(d1)
        .map(|dir| neighbor_value(u, j, &idx, dir, exterior, &g))
        .collect();

    let mut value = -problem.discount(control, t, x) * center;
    for k in 0..d1 {
        let a = problem.diffusion(control, k, t, x);
        value += a * second_diff(nb[2 * k + 1], center, nb[2 * k], h);
    }
    for dir in Direction::all(d1) {
        let b = problem.drift(control, dir, t, x);
        value += b * forward_diff(center, nb[dir.slot()], h);
    }
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation {
            what: "L_h",
            control,
            t,
            x: x.to_vec(),
        })
    }
}
