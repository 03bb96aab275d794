//! Space-time meshes generated by lattice directions, and grid functions on
//! them.
//!
//! The spatial part of a mesh is the set of points `x₀ + h Σ_k i_k ℓ_k` for
//! multi-indices `i` in the box `|i_k| ≤ R`. Time levels are `(jτ) ∧ T`, so
//! the last step may be shorter than `τ`. Only `ℓ_1..ℓ_{d₁}` are stored; the
//! backward directions are their negatives. The directions need not span the
//! ambient space, and the solver works purely in index space.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Relative tolerance used to decide whether `T` is a multiple of `τ`.
const LEVEL_TOL: f64 = 1e-12;

/// One of the `2 d₁` signed lattice directions `ℓ_{±k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction {
    pub axis: usize,
    pub forward: bool,
}

impl Direction {
    pub const fn forward(axis: usize) -> Self {
        Direction {
            axis,
            forward: true,
        }
    }

    pub const fn backward(axis: usize) -> Self {
        Direction {
            axis,
            forward: false,
        }
    }

    /// All signed directions for `d₁` axes, in slot order.
    pub fn all(d1: usize) -> impl Iterator<Item = Direction> {
        (0..2 * d1).map(Direction::from_slot)
    }

    /// Position in arrays indexed by signed direction: `ℓ_{+k}` then `ℓ_{−k}`.
    #[inline]
    pub const fn slot(self) -> usize {
        2 * self.axis + if self.forward { 0 } else { 1 }
    }

    #[inline]
    pub const fn from_slot(slot: usize) -> Self {
        Direction {
            axis: slot / 2,
            forward: slot.is_multiple_of(2),
        }
    }

    pub const fn reversed(self) -> Self {
        Direction {
            axis: self.axis,
            forward: !self.forward,
        }
    }

    #[inline]
    pub const fn sign(self) -> i64 {
        if self.forward {
            1
        } else {
            -1
        }
    }

    /// Signed one-based label `±k`, as used in messages.
    pub fn label(self) -> i32 {
        (self.axis as i32 + 1) * self.sign() as i32
    }
}

/// What a stencil sees when it steps outside the index box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExteriorPolicy {
    /// Copy the nearest in-box value.
    #[default]
    Clamp,
    /// Evaluate the terminal data at the exterior position.
    ExtendTerminal,
    /// Use a fixed value.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MeshSpec {
    /// Horizon `T`.
    pub horizon: f64,
    pub tau: f64,
    pub h: f64,
    /// `ℓ_1..ℓ_{d₁}`, each of length `d`.
    pub directions: Vec<Vec<f64>>,
    pub origin: Vec<f64>,
    pub index_radius: usize,
}

impl MeshSpec {
    /// One-dimensional mesh with `ℓ_1 = 1` centered at the origin.
    pub fn line(horizon: f64, tau: f64, h: f64, index_radius: usize) -> Self {
        MeshSpec {
            horizon,
            tau,
            h,
            directions: alloc::vec![alloc::vec![1.0]],
            origin: alloc::vec![0.0],
            index_radius,
        }
    }

    /// Mesh on the coordinate lattice of `ℝ^d`.
    pub fn cartesian(d: usize, horizon: f64, tau: f64, h: f64, index_radius: usize) -> Self {
        let directions = (0..d)
            .map(|k| {
                let mut e = alloc::vec![0.0; d];
                e[k] = 1.0;
                e
            })
            .collect();
        MeshSpec {
            horizon,
            tau,
            h,
            directions,
            origin: alloc::vec![0.0; d],
            index_radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    /// Same lattice with a different time grid.
    pub fn with_time(&self, horizon: f64, tau: f64) -> Self {
        MeshSpec {
            horizon,
            tau,
            ..self.clone()
        }
    }

    pub fn with_space_step(&self, h: f64, index_radius: usize) -> Self {
        MeshSpec {
            h,
            index_radius,
            ..self.clone()
        }
    }

    fn check(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.horizon) {
            return Err(Error::InvalidMesh(alloc::format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !positive(self.tau) {
            return Err(Error::InvalidMesh(alloc::format!(
                "time step must be positive, got {}",
                self.tau
            )));
        }
        if !positive(self.h) {
            return Err(Error::InvalidMesh(alloc::format!(
                "space step must be positive, got {}",
                self.h
            )));
        }
        if self.directions.is_empty() {
            return Err(Error::InvalidMesh("direction list is empty".into()));
        }
        if self.origin.is_empty() {
            return Err(Error::InvalidMesh("origin has dimension zero".into()));
        }
        if self.index_radius < 1 {
            return Err(Error::InvalidMesh("index radius must be at least 1".into()));
        }
        let d = self.dim();
        for (k, l) in self.directions.iter().enumerate() {
            if l.len() != d {
                return Err(Error::InvalidMesh(alloc::format!(
                    "direction {} has {} components, expected {d}",
                    k + 1,
                    l.len()
                )));
            }
            if l.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMesh(alloc::format!(
                    "direction {} is not finite",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// The discrete domain: time levels plus the spatial index box.
#[derive(Debug, Clone)]
pub struct Mesh {
    spec: MeshSpec,
    levels: Vec<f64>,
    side: usize,
    strides: Vec<usize>,
    n_nodes: usize,
    positions: Vec<f64>,
}

pub fn build_mesh(spec: MeshSpec) -> Result<Mesh> {
    Mesh::new(spec)
}

impl Mesh {
    pub fn new(spec: MeshSpec) -> Result<Self> {
        spec.check()?;
        let levels = time_levels(spec.horizon, spec.tau);
        let d1 = spec.n_directions();
        let side = 2 * spec.index_radius + 1;
        let n_nodes = side
            .checked_pow(d1 as u32)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| Error::InvalidMesh("index box too large".into()))?;
        let strides = (0..d1).map(|k| side.pow(k as u32)).collect();
        let mut mesh = Mesh {
            spec,
            levels,
            side,
            strides,
            n_nodes,
            positions: Vec::new(),
        };
        let d = mesh.dim();
        let mut positions = Vec::with_capacity(n_nodes * d);
        let mut idx = alloc::vec![0i64; d1];
        for node in 0..n_nodes {
            mesh.multi_index_into(node, &mut idx);
            positions.extend(mesh.position_of(&idx));
        }
        mesh.positions = positions;
        Ok(mesh)
    }

    pub fn spec(&self) -> &MeshSpec {
        &self.spec
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn tau(&self) -> f64 {
        self.spec.tau
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn n_directions(&self) -> usize {
        self.spec.n_directions()
    }

    pub fn index_radius(&self) -> usize {
        self.spec.index_radius
    }

    /// `t_0 = 0 < … < t_n = T`.
    pub fn time_levels(&self) -> &[f64] {
        &self.levels
    }

    /// Index `n` of the final level `T`; there are `n + 1` levels.
    pub fn n_time(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Nodes per axis, `2R + 1`.
    pub fn side(&self) -> usize {
        self.side
    }

    /// `τ_T(t) = τ ∧ (T − t)` for a level `t < T`.
    pub fn tau_t(&self, t: f64) -> Result<f64> {
        let j = self.level_index(t).ok_or(Error::Domain { t })?;
        if j == self.n_time() {
            return Err(Error::Domain { t });
        }
        Ok(self.step_after(j))
    }

    /// Length of the step from level `j` to `j + 1`.
    pub fn step_after(&self, j: usize) -> f64 {
        if j + 1 == self.n_time() {
            // keep (t + τ_T(t)) exactly equal to T
            self.spec.horizon - self.levels[j]
        } else {
            self.spec.tau.min(self.levels[j + 1] - self.levels[j])
        }
    }

    pub fn level_index(&self, t: f64) -> Option<usize> {
        let tol = LEVEL_TOL * self.spec.horizon.max(1.0);
        self.levels.iter().position(|&s| (s - t).abs() <= tol)
    }

    pub fn multi_index(&self, node: usize) -> Vec<i64> {
        let mut idx = alloc::vec![0; self.n_directions()];
        self.multi_index_into(node, &mut idx);
        idx
    }

    pub fn multi_index_into(&self, node: usize, out: &mut [i64]) {
        let r = self.spec.index_radius as i64;
        for (k, o) in out.iter_mut().enumerate() {
            *o = ((node / self.strides[k]) % self.side) as i64 - r;
        }
    }

    /// Flat node number of a multi-index, if it lies in the box.
    pub fn node_of(&self, idx: &[i64]) -> Option<usize> {
        let r = self.spec.index_radius as i64;
        let mut node = 0;
        for (k, &i) in idx.iter().enumerate() {
            if i.abs() > r {
                return None;
            }
            node += (i + r) as usize * self.strides[k];
        }
        Some(node)
    }

    /// `x₀ + h Σ_k i_k ℓ_k`, defined for any multi-index.
    pub fn position_of(&self, idx: &[i64]) -> Vec<f64> {
        let mut x = self.spec.origin.clone();
        for (k, &i) in idx.iter().enumerate() {
            let s = self.spec.h * i as f64;
            for (xc, lc) in x.iter_mut().zip(&self.spec.directions[k]) {
                *xc += s * lc;
            }
        }
        x
    }

    pub fn position(&self, node: usize) -> &[f64] {
        let d = self.dim();
        &self.positions[node * d..(node + 1) * d]
    }

    /// Neighbor of `node` one step along `dir`, if still in the box.
    #[inline]
    pub fn neighbor(&self, node: usize, dir: Direction) -> Option<usize> {
        let stride = self.strides[dir.axis];
        let coord = (node / stride) % self.side;
        if dir.forward {
            (coord + 1 < self.side).then(|| node + stride)
        } else {
            (coord > 0).then(|| node - stride)
        }
    }

    /// Index-box distance to the boundary: `R − max_k |i_k|`.
    pub fn depth(&self, node: usize) -> usize {
        let r = self.spec.index_radius;
        (0..self.n_directions())
            .map(|k| {
                let c = (node / self.strides[k]) % self.side;
                c.min(self.side - 1 - c)
            })
            .min()
            .unwrap_or(r)
    }

    /// Position of the exterior point one step from `node` along `dir`.
    pub fn exterior_position(&self, node: usize, dir: Direction) -> Vec<f64> {
        let mut x = self.position(node).to_vec();
        let s = self.spec.h * dir.sign() as f64;
        for (xc, lc) in x.iter_mut().zip(&self.spec.directions[dir.axis]) {
            *xc += s * lc;
        }
        x
    }

    pub fn direction_norm(&self, axis: usize) -> f64 {
        libm::sqrt(self.spec.directions[axis].iter().map(|c| c * c).sum())
    }
}

fn time_levels(horizon: f64, tau: f64) -> Vec<f64> {
    let tol = LEVEL_TOL * horizon;
    let mut levels = Vec::new();
    let mut j = 0usize;
    loop {
        let t = j as f64 * tau;
        if t < horizon - tol {
            levels.push(t);
            j += 1;
        } else {
            break;
        }
    }
    levels.push(horizon);
    levels
}

/// Values on every (time level, node) pair of a mesh, stored level by level.
#[derive(Debug, Clone)]
pub struct GridFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let len = (mesh.n_time() + 1) * mesh.n_nodes();
        GridFunction {
            mesh,
            values: alloc::vec![0.0; len],
        }
    }

    /// Samples `f(t, x)` on every mesh point.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let mut u = GridFunction::zeros(mesh);
        let n = u.mesh.n_nodes();
        for j in 0..=u.mesh.n_time() {
            let t = u.mesh.time_levels()[j];
            for node in 0..n {
                u.values[j * n + node] = f(t, u.mesh.position(node));
            }
        }
        u
    }

    pub fn from_values(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        let len = (mesh.n_time() + 1) * mesh.n_nodes();
        if values.len() != len {
            return Err(Error::InvalidMesh(alloc::format!(
                "grid function needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(GridFunction { mesh, values })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, j: usize, node: usize) -> f64 {
        self.values[j * self.mesh.n_nodes() + node]
    }

    pub fn set(&mut self, j: usize, node: usize, value: f64) {
        let n = self.mesh.n_nodes();
        self.values[j * n + node] = value;
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let n = self.mesh.n_nodes();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn slice_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.mesh.n_nodes();
        &mut self.values[j * n..(j + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Applies `f` value by value, keeping the mesh.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Value of `u` at `(t_j, i + e_dir)`, falling back to the exterior policy
/// outside the box. `terminal` is only consulted for
/// [`ExteriorPolicy::ExtendTerminal`].
pub fn neighbor_value(
    u: &GridFunction,
    j: usize,
    index: &[i64],
    dir: Direction,
    exterior: ExteriorPolicy,
    terminal: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    let mesh = u.mesh();
    let mut idx = index.to_vec();
    idx[dir.axis] += dir.sign();
    if let Some(node) = mesh.node_of(&idx) {
        return u.get(j, node);
    }
    match exterior {
        ExteriorPolicy::Clamp => {
            let r = mesh.index_radius() as i64;
            for i in idx.iter_mut() {
                *i = (*i).clamp(-r, r);
            }
            u.get(j, mesh.node_of(&idx).expect("clamped index in box"))
        }
        ExteriorPolicy::ExtendTerminal => terminal(&mesh.position_of(&idx)),
        ExteriorPolicy::Constant(v) => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-14)
    }

    #[test]
    fn levels_for_multiple_of_tau() {
        let mesh = Mesh::new(MeshSpec::line(1.0, 0.25, 0.5, 2)).unwrap();
        assert!(close(mesh.time_levels(), &[0.0, 0.25, 0.5, 0.75, 1.0]));
        assert_eq!(mesh.n_time(), 4);
    }

    #[test]
    fn levels_with_short_final_step() {
        let mesh = Mesh::new(MeshSpec::line(1.0, 0.4, 0.5, 2)).unwrap();
        assert!(close(mesh.time_levels(), &[0.0, 0.4, 0.8, 1.0]));
        assert!((mesh.step_after(2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn levels_do_not_add_zero_length_step() {
        // 0.1 * 10 is not exactly 1.0 in binary
        let mesh = Mesh::new(MeshSpec::line(1.0, 0.1, 0.5, 1)).unwrap();
        assert_eq!(mesh.n_time(), 10);
        assert_eq!(*mesh.time_levels().last().unwrap(), 1.0);
    }

    #[test]
    fn affine_positions() {
        let mesh = Mesh::new(MeshSpec::line(1.0, 0.25, 0.5, 2)).unwrap();
        let xs: Vec<f64> = (0..mesh.n_nodes()).map(|n| mesh.position(n)[0]).collect();
        assert!(close(&xs, &[-1.0, -0.5, 0.0, 0.5, 1.0]));
    }

    #[test]
    fn tau_t_values() {
        let mesh = Mesh::new(MeshSpec::line(1.0, 0.4, 0.5, 2)).unwrap();
        assert!((mesh.tau_t(0.4).unwrap() - 0.4).abs() < 1e-15);
        assert!((mesh.tau_t(0.8).unwrap() - 0.2).abs() < 1e-15);
        assert!((mesh.tau_t(0.0).unwrap() - 0.4).abs() < 1e-15);
        assert!((0.8 + mesh.tau_t(0.8).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mesh.tau_t(1.0), Err(Error::Domain { t: 1.0 }));
        assert_eq!(mesh.tau_t(0.3), Err(Error::Domain { t: 0.3 }));
    }

    #[test]
    fn rejects_bad_specs() {
        let ok = MeshSpec::line(1.0, 0.25, 0.5, 2);
        for bad in [
            MeshSpec { tau: 0.0, ..ok.clone() },
            MeshSpec { h: -1.0, ..ok.clone() },
            MeshSpec { horizon: 0.0, ..ok.clone() },
            MeshSpec { directions: Vec::new(), ..ok.clone() },
            MeshSpec { index_radius: 0, ..ok.clone() },
            MeshSpec { directions: alloc::vec![alloc::vec![1.0, 0.0]], ..ok.clone() },
        ] {
            assert!(matches!(Mesh::new(bad), Err(Error::InvalidMesh(_))));
        }
    }

    #[test]
    fn hyperplane_lattice() {
        // one direction in the plane: a line of nodes inside ℝ²
        let spec = MeshSpec {
            horizon: 1.0,
            tau: 0.5,
            h: 0.5,
            directions: alloc::vec![alloc::vec![1.0, 1.0]],
            origin: alloc::vec![0.0, 1.0],
            index_radius: 1,
        };
        let mesh = Mesh::new(spec).unwrap();
        assert_eq!(mesh.n_nodes(), 3);
        assert!(close(mesh.position(0), &[-0.5, 0.5]));
        assert!(close(mesh.position(2), &[0.5, 1.5]));
    }

    #[test]
    fn neighbor_policies() {
        let mesh = Arc::new(Mesh::new(MeshSpec::line(1.0, 0.5, 0.5, 2)).unwrap());
        let u = GridFunction::from_fn(mesh, |_, x| x[0] + 10.0);
        let g = |x: &[f64]| x[0] * 0.0;
        // interior
        assert_eq!(neighbor_value(&u, 0, &[0], Direction::forward(0), ExteriorPolicy::Clamp, &g), 10.5);
        // boundary
        let fwd = Direction::forward(0);
        assert_eq!(neighbor_value(&u, 0, &[2], fwd, ExteriorPolicy::Clamp, &g), 11.0);
        assert_eq!(neighbor_value(&u, 0, &[2], fwd, ExteriorPolicy::ExtendTerminal, &g), 0.0);
        assert_eq!(neighbor_value(&u, 0, &[2], fwd, ExteriorPolicy::Constant(-3.0), &g), -3.0);
        let g_pos = |x: &[f64]| x[0];
        assert_eq!(
            neighbor_value(&u, 0, &[-2], Direction::backward(0), ExteriorPolicy::ExtendTerminal, &g_pos),
            -1.5
        );
    }

    #[test]
    fn multi_index_round_trip_2d() {
        let mesh = Mesh::new(MeshSpec::cartesian(2, 1.0, 0.5, 0.25, 3)).unwrap();
        assert_eq!(mesh.n_nodes(), 49);
        for node in 0..mesh.n_nodes() {
            let idx = mesh.multi_index(node);
            assert_eq!(mesh.node_of(&idx), Some(node));
            for dir in Direction::all(2) {
                let mut j = idx.clone();
                j[dir.axis] += dir.sign();
                assert_eq!(mesh.neighbor(node, dir), mesh.node_of(&j));
            }
        }
    }

    #[test]
    fn spec_round_trip() {
        let spec = MeshSpec::line(2.0, 0.3, 0.1, 7);
        let mesh = Mesh::new(spec.clone()).unwrap();
        assert_eq!(mesh.spec(), &spec);
        assert_eq!((mesh.tau(), mesh.h(), mesh.horizon()), (0.3, 0.1, 2.0));
        assert_eq!(mesh.n_time(), 7);
    }
}
