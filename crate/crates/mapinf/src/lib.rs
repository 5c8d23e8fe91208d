//! MAP inference toolkit for pairwise discrete graphical models.
//!
//! The crate covers exact solvers (dynamic programming on chains and
//! trees, min-cut reductions for submodular energies), relaxation-based
//! dual solvers (min-sum and anisotropic diffusion, SRMP/TRW-S,
//! subgradient ascent, Lagrange decomposition over tree slaves), primal
//! heuristics (ICM, block ICM, expansion, swap and fusion moves, QPBO
//! with persistency) and the verification machinery tying them together
//! (arc-consistency, epsilon-agreement, a brute-force oracle).

pub mod consistency;
pub mod decomposition;
pub mod dp;
pub mod dual_ascent;
pub mod error;
pub mod harness;
pub mod mincut;
pub mod model;
pub mod primal;

pub use error::{Error, Result};
pub use model::{CostVector, GraphicalModel, Labeling, RelaxedLabeling, Reparametrization, BIG};
