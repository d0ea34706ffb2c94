//! Green-energy equilibrium problems with external fields and mass caps.
//!
//! The library solves, at desk scale, a family of non-standard energy
//! minimization problems on a compact set `K` inside a planar domain with a
//! closed-form Green function `g`:
//!
//! * the free discrete problem: minimize
//!   `E(z, m) = sum_{i != j} m_i m_j g(z_i, z_j) + 2 N sum_j m_j f(z_j)`
//!   over positions `z_j` in `K` and masses `m_j` in `[0, R]`;
//! * the prescribed-node problem: same energy, positions fixed, masses free
//!   (a box-constrained quadratic program with zero-diagonal kernel matrix);
//! * the greedy sequence: points and masses chosen one at a time by
//!   minimizing a two-variable functional over a candidate set;
//! * the continuous equilibrium problems they approximate, monitored through
//!   first-order (Frostman-type) inequalities, energy bounds and weak-star
//!   moment diagnostics.
//!
//! Everything is deterministic: all randomness flows through a seeded
//! generator, and repeated runs with identical inputs produce bitwise
//! identical results. Data types are immutable after construction and all
//! operations are pure, so callers may fan evaluations out across threads.

pub mod error;
pub mod field;
pub mod freesolve;
pub mod geometry;
pub mod greedy;
pub mod kernel;
pub mod massqp;
pub mod measure;
pub mod quad;
pub mod verify;

pub use error::{Error, Result};
pub use field::{ExternalField, FieldPiece, FieldValue};
pub use geometry::{CompactSet, Piece};
pub use kernel::{GreenDomain, KernelMatrix};
pub use measure::{Density, PartitionedSet, WeightedConfiguration};
pub use num_complex::Complex64;
