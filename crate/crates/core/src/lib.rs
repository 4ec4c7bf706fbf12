//! Affine jump-diffusions on closed convex state spaces: generalized Riccati
//! equations, the affine transform formula, explosion and domain probing, and
//! Monte Carlo validation.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN. Index loops mirror the
// matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cone;
pub mod error;
pub mod linalg;
pub mod model;
pub mod num;
pub mod quad;
pub mod riccati;
pub mod rng;
pub mod simulate;
pub mod transform;

pub use error::{Error, Result};
pub use model::{AffineModel, JumpMeasure, StateSpace};
pub use num::Real;
pub use riccati::{explosion_time, solve_riccati, ExplosionTime, RiccatiSolution, SolverConfig, Verdict};
pub use simulate::{simulate_paths, McEstimate, PathEnsemble, SimConfig};
pub use transform::{transform, TransformValue};

pub type C64 = num_complex::Complex<f64>;
pub type AffineModel64 = AffineModel<f64>;
pub type StateSpace64 = StateSpace<f64>;
pub type JumpMeasure64 = JumpMeasure<f64>;
pub type RiccatiSolution64 = RiccatiSolution<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type TransformValue64 = TransformValue<f64>;
pub type PathEnsemble64 = PathEnsemble<f64>;
pub type SimConfig64 = SimConfig<f64>;
