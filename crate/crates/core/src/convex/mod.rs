//! Small dense cone programs (linear objective, linear and second-order-cone
//! constraints) solved by a log-barrier interior-point method.

mod program;
mod solver;

pub use program::{ConeProgram, SocConstraint};
pub use solver::{solve, Solution, SolveStatus, SolverConfig};
