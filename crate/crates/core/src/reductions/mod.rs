//! The two reductions: time replication of a Problem A instance into
//! Problem B, and the change of variables that turns a general state
//! constraint `Φ(y) ≥ 0` into the coordinate constraint `x ≥ 0`.

mod change_of_vars;
mod problem_b;

pub use change_of_vars::*;
pub use problem_b::*;
