//! Monotone finite-difference schemes for degenerate parabolic and elliptic
//! Bellman equations
//!
//! ```text
//! ∂_t u + sup_α [ a_k^α D²_{ℓ_k} u + b_k^α D_{ℓ_k} u − c^α u + f^α ] = 0,   u(T, ·) = g
//! ```
//!
//! posed on a lattice generated by a finite set of directions `ℓ_k`. The crate
//! is `no_std` (it needs `alloc`); enable `parallel` for rayon-backed node
//! sweeps and `serde` to derive serialization for report types.
//!
//! Layout:
//! - [`lattice`]: space-time meshes and grid functions.
//! - [`fd_ops`]: difference operators and the Bellman nonlinearity.
//! - [`problems`]: control problems and the built-in verification catalog.
//! - [`implicit`]: the implicit scheme, solved slice by slice with a
//!   contraction (or policy iteration).
//! - [`semidiscrete`], [`elliptic`]: method-of-lines and stationary solvers.
//! - [`perturbation`]: coefficient shaking.
//! - [`diagnostics`]: regularity, comparison and convergence measurements.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod fd_ops;
pub mod implicit;
pub mod lattice;
pub mod perturbation;
pub mod problems;
pub mod semidiscrete;

mod stencil;
mod sweep;

pub use error::{Error, Result};
pub use lattice::{Direction, ExteriorPolicy, GridFunction, Mesh, MeshSpec};
pub use problems::{ControlProblem, ExactSolution};
