//! Benders decomposition over graph-structured linear and mixed-binary
//! programs, with scenario subproblems optionally replaced by explicit
//! multi-parametric LP solutions.

pub mod lp;
pub mod graph;
pub mod milp;
pub mod mplp;
pub mod subproblem;
pub mod cep;
pub mod benders;
