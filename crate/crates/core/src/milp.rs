//! Branch-and-bound for linear programs with binary variables.
//!
//! Nodes are explored best-bound first. Each child re-solves the parent's
//! final basis with the dual simplex after tightening one binary's bounds.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DVector;
use thiserror::Error;

use crate::lp::simplex::{Engine, Outcome, Snapshot};
use crate::lp::{LpError, LpStatus, StandardLp};

/// Distance from {0, 1} below which a binary counts as integral.
pub const TOL_INT: f64 = 1e-6;
/// A node is pruned when its bound is within this margin of the incumbent.
pub const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("invalid binary variable: {0}")]
    InvalidBinary(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedBinaryLp {
    pub base: StandardLp,
    /// Sorted, duplicate-free column indices restricted to {0, 1}.
    pub binary_idx: Vec<usize>,
}

impl MixedBinaryLp {
    pub fn new(base: StandardLp, mut binary_idx: Vec<usize>) -> Self {
        binary_idx.sort_unstable();
        binary_idx.dedup();
        MixedBinaryLp { base, binary_idx }
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        self.base.validate()?;
        let n = self.base.num_vars();
        for &j in &self.binary_idx {
            if j >= n {
                return Err(MilpError::InvalidBinary(format!("index {j} out of range for {n} variables")));
            }
            let (lb, ub) = (self.base.lb[j], self.base.ub[j]);
            if !(lb >= 0.0 && ub <= 1.0 && lb <= ub) {
                return Err(MilpError::InvalidBinary(format!("variable {j} has bounds [{lb}, {ub}], expected within [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: LpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Number of LP relaxations solved.
    pub node_count: usize,
    /// Incumbent objective each time it improved, in order.
    pub incumbent_history: Vec<f64>,
}

impl MilpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

struct Node {
    bound: f64,
    seq: usize,
    fixings: Vec<(usize, f64)>,
    warm: Option<Snapshot>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Solves `p` to global optimality over all binary assignments.
pub fn solve_milp(p: &MixedBinaryLp) -> Result<MilpSolution, MilpError> {
    p.validate()?;
    let base = &p.base;
    let mut engine = Engine::new(base)?;
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, seq: 0, fixings: Vec::new(), warm: None });
    let mut seq = 1;
    let mut incumbent: Option<(f64, DVector<f64>)> = None;
    let mut history = Vec::new();
    let mut node_count = 0;

    while let Some(node) = heap.pop() {
        let cutoff = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        if node.bound >= cutoff - PRUNE_TOL {
            continue;
        }
        for &j in &p.binary_idx {
            engine.set_bounds(j, base.lb[j], base.ub[j]);
        }
        for &(j, v) in &node.fixings {
            engine.set_bounds(j, v, v);
        }
        node_count += 1;
        let outcome = match &node.warm {
            None => engine.solve_cold()?,
            Some(snap) => match engine.solve_warm(snap) {
                Ok(o) => o,
                Err(LpError::NumericalFailure(msg)) => {
                    log::debug!("warm start failed ({msg}); re-solving cold");
                    engine.solve_cold()?
                }
                Err(e) => return Err(e.into()),
            },
        };
        match outcome {
            Outcome::Infeasible => continue,
            Outcome::Unbounded(_) => {
                // An unbounded relaxation with some feasible binary completion
                // makes the whole problem unbounded.
                return Ok(MilpSolution {
                    status: LpStatus::Unbounded,
                    x: DVector::zeros(base.num_vars()),
                    objective: f64::NEG_INFINITY,
                    node_count,
                    incumbent_history: history,
                });
            }
            Outcome::Optimal => {}
        }
        let obj = engine.objective();
        if obj >= cutoff - PRUNE_TOL {
            continue;
        }
        let x = engine.structural_values();
        let mut branch: Option<(usize, f64)> = None;
        for &j in &p.binary_idx {
            let frac = (x[j] - x[j].round()).abs();
            if frac > TOL_INT && branch.is_none_or(|(_, f)| frac > f) {
                branch = Some((j, frac));
            }
        }
        match branch {
            None => {
                let mut xs = DVector::from_column_slice(x);
                for &j in &p.binary_idx {
                    xs[j] = xs[j].round();
                }
                history.push(obj);
                incumbent = Some((obj, xs));
            }
            Some((j, _)) => {
                let snap = engine.snapshot();
                for v in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, v));
                    heap.push(Node { bound: obj, seq, fixings, warm: Some(snap.clone()) });
                    seq += 1;
                }
            }
        }
    }

    Ok(match incumbent {
        Some((objective, x)) => MilpSolution { status: LpStatus::Optimal, x, objective, node_count, incumbent_history: history },
        None => MilpSolution {
            status: LpStatus::Infeasible,
            x: DVector::zeros(base.num_vars()),
            objective: f64::INFINITY,
            node_count,
            incumbent_history: history,
        },
    })
}
