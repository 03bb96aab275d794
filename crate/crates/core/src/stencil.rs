//! Precomputed per-slice stencil data shared by the solvers.
//!
//! Coefficients are evaluated once per time level into a [`Snapshot`]; a
//! [`Weights`] table then holds, for every node and control, the nonnegative
//! weights of the monotone update
//!
//! ```text
//! w ↦ base + Σ_s p_s w(x + hℓ_s) + p_self w(x) + ε f
//! p_s = ε (a_k / h² + b_s / h),   p_self = 1 − ε·shift − Σ_s p_s − ε c
//! ```
//!
//! `shift` is `1/τ` for the implicit slice map and `0` otherwise.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lattice::{Direction, ExteriorPolicy, Mesh};
use crate::problems::ControlProblem;

/// Rounding slack allowed on `p_self` before it counts as negative.
const WEIGHT_SLACK: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Neighbor {
    Node(usize),
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct Neighbors {
    n_dirs: usize,
    table: Vec<Neighbor>,
}

impl Neighbors {
    pub(crate) fn new(mesh: &Mesh, exterior: ExteriorPolicy, problem: &ControlProblem) -> Self {
        let d1 = mesh.n_directions();
        let n_dirs = 2 * d1;
        let mut table = Vec::with_capacity(mesh.n_nodes() * n_dirs);
        for node in 0..mesh.n_nodes() {
            for dir in Direction::all(d1) {
                table.push(match mesh.neighbor(node, dir) {
                    Some(n) => Neighbor::Node(n),
                    None => match exterior {
                        // one step out of the box: the nearest in-box index is the node itself
                        ExteriorPolicy::Clamp => Neighbor::Node(node),
                        ExteriorPolicy::ExtendTerminal => {
                            Neighbor::Fixed(problem.terminal(&mesh.exterior_position(node, dir)))
                        }
                        ExteriorPolicy::Constant(v) => Neighbor::Fixed(v),
                    },
                });
            }
        }
        Neighbors { n_dirs, table }
    }

    #[inline]
    pub(crate) fn of(&self, node: usize) -> &[Neighbor] {
        &self.table[node * self.n_dirs..(node + 1) * self.n_dirs]
    }

}

/// Coefficients of every control at every node for one time `t`.
#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    pub(crate) n_ctrl: usize,
    pub(crate) d1: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    f: Vec<f64>,
}

impl Snapshot {
    pub(crate) fn evaluate(problem: &ControlProblem, mesh: &Mesh, t: f64) -> Result<Self> {
        let n_ctrl = problem.n_controls();
        if n_ctrl == 0 {
            return Err(Error::EmptyControlSet);
        }
        let d1 = mesh.n_directions();
        let n = mesh.n_nodes();
        let mut snap = Snapshot {
            n_ctrl,
            d1,
            a: Vec::with_capacity(n * n_ctrl * d1),
            b: Vec::with_capacity(n * n_ctrl * 2 * d1),
            c: Vec::with_capacity(n * n_ctrl),
            f: Vec::with_capacity(n * n_ctrl),
        };
        for node in 0..n {
            let x = mesh.position(node);
            for al in 0..n_ctrl {
                let bad = |what| Error::Evaluation {
                    what,
                    control: al,
                    t,
                    x: x.to_vec(),
                };
                for k in 0..d1 {
                    let a = problem.diffusion(al, k, t, x);
                    if !a.is_finite() {
                        return Err(bad("sigma"));
                    }
                    snap.a.push(a);
                }
                for dir in Direction::all(d1) {
                    let b = problem.drift(al, dir, t, x);
                    if !b.is_finite() {
                        return Err(bad("drift"));
                    }
                    snap.b.push(b);
                }
                let c = problem.discount(al, t, x);
                if !c.is_finite() {
                    return Err(bad("discount"));
                }
                let f = problem.running(al, t, x);
                if !f.is_finite() {
                    return Err(bad("running cost"));
                }
                snap.c.push(c);
                snap.f.push(f);
            }
        }
        Ok(snap)
    }

    /// `max_{node, α} [Σ_k 2a_k/h² + Σ_s |b_s|/h + c]`.
    pub(crate) fn max_rate(&self, h: f64) -> f64 {
        let (d1, nd) = (self.d1, 2 * self.d1);
        (0..self.c.len())
            .map(|i| {
                let a: f64 = self.a[i * d1..(i + 1) * d1].iter().sum();
                let b: f64 = self.b[i * nd..(i + 1) * nd].iter().map(|v| v.abs()).sum();
                2.0 * a / (h * h) + b / h + self.c[i]
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn max_diffusion(&self) -> f64 {
        self.a.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// Per-(node, control) weights: `n_dirs` neighbor weights, `p_self`, source.
#[derive(Debug, Clone)]
pub(crate) struct Weights {
    pub(crate) n_ctrl: usize,
    n_dirs: usize,
    stride: usize,
    w: Vec<f64>,
}

impl Weights {
    pub(crate) fn new(snap: &Snapshot, h: f64, eps: f64, shift: f64) -> Result<Self> {
        Self::build(snap, h, eps, shift, true)
    }

    /// Same table without the sign check on `p_self`, for evaluating
    /// `L_h u + f` as `update(u) − u` at `ε = 1`.
    pub(crate) fn unchecked(snap: &Snapshot, h: f64, eps: f64) -> Self {
        match Self::build(snap, h, eps, 0.0, false) {
            Ok(w) => w,
            Err(_) => unreachable!("unchecked weights cannot fail"),
        }
    }

    fn build(snap: &Snapshot, h: f64, eps: f64, shift: f64, check: bool) -> Result<Self> {
        let (d1, nd) = (snap.d1, 2 * snap.d1);
        let stride = nd + 2;
        let mut w = Vec::with_capacity(snap.c.len() * stride);
        for i in 0..snap.c.len() {
            let mut total = 0.0;
            for s in 0..nd {
                let k = s / 2;
                let p = eps * (snap.a[i * d1 + k] / (h * h) + snap.b[i * nd + s] / h);
                total += p;
                w.push(p);
            }
            let p_self = 1.0 - eps * shift - total - eps * snap.c[i];
            if !check {
                w.push(p_self);
                w.push(eps * snap.f[i]);
                continue;
            }
            if p_self < -WEIGHT_SLACK {
                return Err(Error::NegativeWeight {
                    weight: p_self,
                    node: i / snap.n_ctrl,
                    control: i % snap.n_ctrl,
                });
            }
            w.push(p_self.max(0.0));
            w.push(eps * snap.f[i]);
        }
        Ok(Weights {
            n_ctrl: snap.n_ctrl,
            n_dirs: nd,
            stride,
            w,
        })
    }

    #[inline]
    fn row(&self, node: usize, control: usize) -> &[f64] {
        let start = (node * self.n_ctrl + control) * self.stride;
        &self.w[start..start + self.stride]
    }

    #[inline]
    pub(crate) fn apply(&self, node: usize, control: usize, w: &[f64], nb: &Neighbors) -> f64 {
        let r = self.row(node, control);
        let mut v = r[self.n_dirs] * w[node] + r[self.n_dirs + 1];
        for (s, n) in nb.of(node).iter().enumerate() {
            let x = match *n {
                Neighbor::Node(m) => w[m],
                Neighbor::Fixed(x) => x,
            };
            v += r[s] * x;
        }
        v
    }

    /// `max_α [base + apply]`, ties to the lowest control.
    #[inline]
    pub(crate) fn best(&self, node: usize, w: &[f64], nb: &Neighbors, base: f64) -> (f64, usize) {
        let mut best = (base + self.apply(node, 0, w, nb), 0);
        for a in 1..self.n_ctrl {
            let v = base + self.apply(node, a, w, nb);
            if v > best.0 {
                best = (v, a);
            }
        }
        best
    }

    /// Node-wise exact solve of the frozen-control equation
    /// `w = base + Σ p_s w_nbr + p_self w + ε f` with neighbors from `w`.
    #[inline]
    pub(crate) fn jacobi(&self, node: usize, control: usize, w: &[f64], nb: &Neighbors, base: f64) -> f64 {
        let r = self.row(node, control);
        let mut diag = 1.0 - r[self.n_dirs];
        let mut rhs = base + r[self.n_dirs + 1];
        for (s, n) in nb.of(node).iter().enumerate() {
            match *n {
                Neighbor::Node(m) if m == node => diag -= r[s],
                Neighbor::Node(m) => rhs += r[s] * w[m],
                Neighbor::Fixed(x) => rhs += r[s] * x,
            }
        }
        rhs / diag
    }
}
