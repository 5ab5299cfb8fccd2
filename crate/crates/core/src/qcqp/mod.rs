//! Quadratically constrained quadratic programs.
//!
//! Two solvers live here: a log-barrier interior-point method for convex
//! problems with any number of inequality constraints, and a whitening plus
//! secular-equation method for a single (possibly indefinite) equality
//! constraint.

mod convex;
mod equality;

pub use convex::{
    solve_convex_qcqp, BarrierOptions, ConvexQcqp, ConvexSolution, QuadConstraint, SolveStatus,
};
pub use equality::{
    secular_function, solve_single_equality_qcqp, whiten_pair, EqualitySolution, KktCase, SingleEqualityQcqp,
    WhitenedPair,
};
