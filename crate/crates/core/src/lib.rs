//! Numerical laboratory for equivariant p-energy minimizing maps into
//! White's manifold `(T^1 x R) x S^n` with metric
//! `d theta^2 + dy^2 + (B0 - V) g_0`.
//!
//! Equivariance reduces such a map to a curve `u = (theta, y)` in log-radius
//! time `t = ln r` minimizing `int l(u)^beta e^{alpha t} dt`. The crate
//! integrates that system and checks its structural properties: the
//! dissipation of the Hamiltonian, the monotonicity of the density ratio,
//! confinement of trajectories to strips of `{V != 0}` and the resulting
//! winding of the angle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod params;
pub mod potential;
pub mod quadrature;
pub mod dynamics;
pub mod energy;
pub mod analysis;

pub use error::{Error, Result};
pub use params::{derive, Derived, ModelParams};
pub use potential::TargetPoint;
pub use analysis::{seed, SeedSpec};
pub use dynamics::{integrate, EventSpec, IntegratorConfig, Model, State, Trajectory};
