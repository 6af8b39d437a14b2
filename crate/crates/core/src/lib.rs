//! Solver library for Markov backward stochastic differential equations.
//!
//! The pipeline implemented here discretizes a diffusion-driven BSDE in space
//! so that it becomes a BSDE driven by a finite-state continuous-time Markov
//! chain — equivalently a large, stiff terminal-value ODE system
//!
//! ```text
//!     dU/dt + Q U + F(t, U) = 0,   U(T) = G,
//! ```
//!
//! integrates that system backward in time with multi-stage exponential
//! integrators whose coefficients are φ-function combinations evaluated
//! through Krylov subspace projection, and scales to higher dimensions with
//! the sparse-grid combination technique. A catalogue of option-pricing
//! models, analytic references and Monte Carlo cross-checks round out the
//! crate.

pub mod error;
pub mod expmv;
pub mod generator;
pub mod grid;
pub mod integrators;
pub mod io;
pub mod models;
pub mod montecarlo;
pub mod presets;
pub mod sparse;
pub mod sparsegrid;

pub use error::{Error, Result};
pub use expmv::{PhiCombination, PhiTerm};
pub use generator::{DifferenceSet, Generator, ValidityReport};
pub use grid::{Grid1D, TensorGrid};
pub use integrators::{BackwardProblem, ExpRkTableau, SchemeName, Trajectory};
pub use sparse::SparseMatrix;
pub use sparsegrid::{AxisFamily, CombinationSolution, LevelIndex};
