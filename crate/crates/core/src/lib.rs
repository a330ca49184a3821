//! Numerical laboratory for the local-sensing chemotaxis system
//!
//! ```text
//! ∂t u = Δ(φ(u) γ(v)),   ∂t v = Δv − v + u,   no-flux boundaries,
//! φ(s) = s^m,   γ(s) = a + b / (s + s0)^k.
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`motility`]: the power-law family and its closed-form analysis
//!   (monotonicity of φγ, the excitable set, Ψ, admissible exponents).
//! * [`field`]: grids, cell-centred scalar fields, norms and the no-flux
//!   Laplacian.
//! * [`poisson`]: the zero-mean inverse Neumann Laplacian `K`.
//! * [`solver`]: the conservative time stepper and linear stability.
//! * [`diagnostics`]: Liapunov functionals, dissipations and residuals of
//!   the integral identities along a trajectory.
//! * [`harness`]: configuration, presets, sweeps and file output.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::manual_clamp)]

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod harness;
pub mod motility;
pub mod poisson;
pub mod solver;

pub use diagnostics::{DiagnosticsRecord, DiagnosticsSampler, SamplerConfig};
pub use error::{Error, Result};
pub use field::{Grid, ScalarField};
pub use motility::{Motility, MotilityAnalysis, MotilityModel};
pub use poisson::PoissonSolver;
pub use solver::{SimState, SolverConfig, VScheme};
