//! Verification of stationarity conditions for optimal control problems
//! with a single scalar state constraint of order one.
//!
//! Given a problem and a reference trajectory whose constrained coordinate
//! lies on the boundary over exactly one interval `[t1, t2]`, the crate
//! reconstructs the adjoint variables, the state-constraint measure (its
//! density on the boundary arc and its atoms at the junctions) and the
//! control-constraint multiplier, and then checks every stationarity
//! condition against them by re-substitution.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, reports and
//! the command line live in the `statecon` companion crate.
//!
//! Module map:
//!
//! * [`expr`]: expression language with forward-mode differentiation.
//! * [`integrate`]: piecewise-uniform grids, RK4, interpolation, quadrature.
//! * [`model`]: problem descriptions, reference processes, regularity checks.
//! * [`stationarity`]: multiplier reconstruction and condition verification.
//! * [`reductions`]: time-replicated problem with mixed constraints and its
//!   condition oracle; change of variables for general state constraints.
//! * [`variations`]: variations concentrated on the boundary arc, the pairing
//!   identity and the first-order cost inequality.
#![no_std]
// `!(a > b)` is used on purpose so NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod expr;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod reductions;
pub mod report;
pub mod stationarity;
pub mod variations;

pub use error::{Error, Result};
pub use expr::{parse_expr, Expr};
pub use integrate::{GridSignal, Side};
pub use model::{ControlSystem, ProblemA, ProblemC, ReferenceProcess};
pub use report::{ConditionRecord, StationarityReport};
pub use stationarity::{Multipliers, Tolerances};
