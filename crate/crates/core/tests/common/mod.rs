//! Reference computations that share no code with the solvers: a dense
//! linear solve for single-control slices and the global space-time
//! fixed-point iteration with a time weight.
#![allow(dead_code)]

use std::sync::Arc;

use bellman_fd_core::lattice::{Direction, Mesh, MeshSpec};
use bellman_fd_core::ControlProblem;
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn mesh(spec: MeshSpec) -> Arc<Mesh> {
    Arc::new(Mesh::new(spec).unwrap())
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Neighbor of `node` along `dir`, or the node itself outside the box.
fn clamped(mesh: &Mesh, node: usize, dir: Direction) -> usize {
    mesh.neighbor(node, dir).unwrap_or(node)
}

/// `Σ a_k Δ u + Σ b_s δ u − c u + f` for control `a` at `(t, node)`.
fn operator(p: &ControlProblem, mesh: &Mesh, a: usize, t: f64, node: usize, u: &[f64]) -> f64 {
    let x = mesh.position(node);
    let h = mesh.h();
    let mut v = -p.discount(a, t, x) * u[node] + p.running(a, t, x);
    for k in 0..mesh.n_directions() {
        let fwd = Direction { axis: k, forward: true };
        let bwd = Direction { axis: k, forward: false };
        let (up, um) = (u[clamped(mesh, node, fwd)], u[clamped(mesh, node, bwd)]);
        v += p.diffusion(a, k, t, x) * (up - 2.0 * u[node] + um) / (h * h);
        v += p.drift(a, fwd, t, x) * (up - u[node]) / h;
        v += p.drift(a, bwd, t, x) * (um - u[node]) / h;
    }
    v
}

/// One implicit level of a single-control problem solved as a dense system:
/// `(u_next − u)/τ + a Δ_h u + b δ_h u − c u + f = 0` at time `t_j`.
pub fn dense_slice(p: &ControlProblem, mesh: &Mesh, u_next: &[f64], j: usize) -> Vec<f64> {
    assert_eq!(p.n_controls(), 1);
    let n = mesh.n_nodes();
    let t = mesh.time_levels()[j];
    let (h, tau) = (mesh.h(), mesh.tau());
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..n {
        let x = mesh.position(i);
        m[(i, i)] -= 1.0 / tau + p.discount(0, t, x);
        rhs[i] = -u_next[i] / tau - p.running(0, t, x);
        for k in 0..mesh.n_directions() {
            let a = p.diffusion(0, k, t, x);
            for fwd in [true, false] {
                let dir = Direction { axis: k, forward: fwd };
                let w = a / (h * h) + p.drift(0, dir, t, x) / h;
                m[(i, clamped(mesh, i, dir))] += w;
                m[(i, i)] -= w;
            }
        }
    }
    m.lu().solve(&rhs).expect("nonsingular slice matrix").as_slice().to_vec()
}

/// Full field by backward dense slice solves.
pub fn dense_field(p: &ControlProblem, mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.n_time();
    let mut out = vec![Vec::new(); n + 1];
    out[n] = (0..mesh.n_nodes()).map(|i| p.terminal(mesh.position(i))).collect();
    for j in (0..n).rev() {
        out[j] = dense_slice(p, mesh, &out[j + 1], j);
    }
    out
}

/// The whole space-time scheme as one fixed point. With `u = ξ v`,
/// `ξ(t_j) = γ^{-(n-j)}`, iterate
/// `v ← v + ε ξ^{-1}(t)[δ_τ^T(ξ v) + sup_α(L^α(ξ v) + f^α)]` on every level
/// below `T` at once, starting from zero.
pub fn global_fixed_point(p: &ControlProblem, mesh: &Mesh, gamma: f64) -> Vec<Vec<f64>> {
    let n = mesh.n_time();
    let nodes = mesh.n_nodes();
    let levels = mesh.time_levels().to_vec();
    let (h, tau) = (mesh.h(), mesh.tau());
    let xi: Vec<f64> = (0..=n).map(|j| gamma.powi(-((n - j) as i32))).collect();

    let mut rate: f64 = 0.0;
    for &t in &levels[..n] {
        for i in 0..nodes {
            let x = mesh.position(i);
            for a in 0..p.n_controls() {
                let mut r = p.discount(a, t, x);
                for k in 0..mesh.n_directions() {
                    r += 2.0 * p.diffusion(a, k, t, x) / (h * h);
                    for fwd in [true, false] {
                        r += p.drift(a, Direction { axis: k, forward: fwd }, t, x) / h;
                    }
                }
                rate = rate.max(r);
            }
        }
    }
    let eps = 0.9 / (1.0 / tau + rate);

    let mut v = vec![vec![0.0; nodes]; n + 1];
    v[n] = (0..nodes).map(|i| p.terminal(mesh.position(i))).collect();
    for _ in 0..2_000_000 {
        let mut change: f64 = 0.0;
        let mut next = v.clone();
        for j in 0..n {
            let u: Vec<f64> = v[j].iter().map(|w| xi[j] * w).collect();
            for i in 0..nodes {
                let time = (xi[j + 1] * v[j + 1][i] - u[i]) / tau;
                let sup = (0..p.n_controls())
                    .map(|a| operator(p, mesh, a, levels[j], i, &u))
                    .fold(f64::NEG_INFINITY, f64::max);
                next[j][i] = v[j][i] + eps / xi[j] * (time + sup);
                change = change.max((next[j][i] - v[j][i]).abs());
            }
        }
        v = next;
        if change <= 1e-14 {
            break;
        }
    }
    (0..=n).map(|j| v[j].iter().map(|w| xi[j] * w).collect()).collect()
}

/// Smooth random coefficients with `a, b ≥ 0` and `c ≥ c_min`.
#[derive(Debug, Clone)]
pub struct RandomCoefficients {
    pub sigma: Vec<[f64; 3]>,
    pub drift: Vec<[f64; 4]>,
    pub discount: Vec<[f64; 3]>,
    pub running: Vec<[f64; 3]>,
    pub terminal: [f64; 3],
}

impl RandomCoefficients {
    pub fn draw(rng: &mut StdRng, n_controls: usize, c_min: f64) -> Self {
        let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let mut out = RandomCoefficients {
            sigma: vec![],
            drift: vec![],
            discount: vec![],
            running: vec![],
            terminal: [r(-1.0, 1.0), r(-1.0, 1.0), r(0.5, 2.0)],
        };
        for _ in 0..n_controls {
            out.sigma.push([r(0.0, 1.0), r(-0.5, 0.5), r(0.5, 2.0)]);
            out.drift.push([r(0.0, 0.8), r(0.0, 0.8), r(0.0, 0.3), r(0.5, 2.0)]);
            out.discount.push([c_min + r(0.0, 0.5), r(0.0, 0.5), r(0.5, 2.0)]);
            out.running.push([r(-1.0, 1.0), r(-1.0, 1.0), r(0.5, 2.0)]);
        }
        out
    }

    /// 1-d problem; coefficients oscillate in `x` and `t`.
    pub fn problem(&self, name: &str) -> ControlProblem {
        let (s, b, c, f, g) = (
            self.sigma.clone(),
            self.drift.clone(),
            self.discount.clone(),
            self.running.clone(),
            self.terminal,
        );
        ControlProblem::new(name, s.len())
            .with_sigma(move |a, _, t, x| s[a][0] + s[a][1] * (s[a][2] * x[0] + t).sin())
            .with_drift(move |a, dir, t, x| {
                let base = if dir.forward { b[a][0] } else { b[a][1] };
                base + b[a][2] * (1.0 + (b[a][3] * x[0] - t).cos())
            })
            .with_discount(move |a, t, x| c[a][0] + c[a][1] * (1.0 + (c[a][2] * x[0] + 2.0 * t).sin()))
            .with_running(move |a, t, x| f[a][0] + f[a][1] * (f[a][2] * x[0] + t).cos())
            .with_terminal(move |x| g[0] + g[1] * (g[2] * x[0]).sin())
            .with_constants(4.0, 0.0)
            .time_dependent()
    }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
