//! Scenario subproblems in Benders form, with their uncertain data exposed as
//! parameter slots.
//!
//! A subproblem is
//!
//! ```text
//! min  (cost + Σ_s coeff_s·value_s·e_var(s))ᵀ x
//! s.t. ineq_x·x + ineq_z·z ≤ ineq_rhs + Σ_s coeff_s·value_s·e_row(s)
//!      eq_x·x   + eq_z·z   = eq_rhs   + (same for equality rhs slots)
//!      x_lb ≤ x ≤ x_ub,    z = x̄_m[coupled columns]
//! ```

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::lp::{solve_lp_fixed, FixedSolution, LpError, StandardLp};

/// A scalar of uncertain data: its realized value and the range it may take.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSlot {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Cost of `x[var]` gains `coeff·slot.value`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSlot {
    pub var: usize,
    pub coeff: f64,
    pub slot: ParamSlot,
}

/// Right-hand side of a row gains `coeff·slot.value`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsSlot {
    pub row: usize,
    /// Whether `row` indexes the equality block rather than the inequalities.
    pub equality: bool,
    pub coeff: f64,
    pub slot: ParamSlot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSubproblemSpec {
    pub name: String,
    pub scenario: usize,
    pub period: usize,
    pub x_names: Vec<String>,
    pub x_lb: Vec<f64>,
    pub x_ub: Vec<f64>,
    pub cost: Vec<f64>,
    pub cost_slots: Vec<CostSlot>,
    pub ineq_x: DMatrix<f64>,
    pub ineq_z: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub eq_x: DMatrix<f64>,
    pub eq_z: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub rhs_slots: Vec<RhsSlot>,
    /// Range of each copy variable, taken from the master variable it copies.
    pub z_lo: Vec<f64>,
    pub z_hi: Vec<f64>,
}

impl ScenarioSubproblemSpec {
    pub fn n_x(&self) -> usize {
        self.x_lb.len()
    }

    pub fn n_z(&self) -> usize {
        self.z_lo.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let (nx, nz) = (self.n_x(), self.n_z());
        let bad = |what: &str| Err(LpError::DimensionMismatch(format!("subproblem {}: {what}", self.name)));
        if self.x_ub.len() != nx || self.cost.len() != nx || self.x_names.len() != nx {
            return bad("per-variable vectors differ in length");
        }
        if self.z_hi.len() != nz {
            return bad("z range vectors differ in length");
        }
        let mi = self.ineq_rhs.len();
        if self.ineq_x.shape() != (mi, nx) || self.ineq_z.shape() != (mi, nz) {
            return bad("inequality block shape");
        }
        let me = self.eq_rhs.len();
        if self.eq_x.shape() != (me, nx) || self.eq_z.shape() != (me, nz) {
            return bad("equality block shape");
        }
        if self.cost_slots.iter().any(|s| s.var >= nx) {
            return bad("cost slot refers to a missing variable");
        }
        if self.rhs_slots.iter().any(|s| s.row >= if s.equality { me } else { mi }) {
            return bad("rhs slot refers to a missing row");
        }
        Ok(())
    }

    /// Cost vector with slot values applied.
    pub fn realized_cost(&self) -> Vec<f64> {
        let mut c = self.cost.clone();
        for s in &self.cost_slots {
            c[s.var] += s.coeff * s.slot.value;
        }
        c
    }

    /// The subproblem as an LP over `[x; z]` with `z` free. Slot values are
    /// plugged in.
    pub fn to_lp(&self) -> StandardLp {
        let (nx, nz) = (self.n_x(), self.n_z());
        let n = nx + nz;
        let mut lp = StandardLp::new(n);
        let c = self.realized_cost();
        for j in 0..nx {
            lp.c[j] = c[j];
            lp.lb[j] = self.x_lb[j];
            lp.ub[j] = self.x_ub[j];
        }
        let mi = self.ineq_rhs.len();
        let me = self.eq_rhs.len();
        let mut a_ub = DMatrix::zeros(mi, n);
        a_ub.view_mut((0, 0), (mi, nx)).copy_from(&self.ineq_x);
        a_ub.view_mut((0, nx), (mi, nz)).copy_from(&self.ineq_z);
        let mut a_eq = DMatrix::zeros(me, n);
        a_eq.view_mut((0, 0), (me, nx)).copy_from(&self.eq_x);
        a_eq.view_mut((0, nx), (me, nz)).copy_from(&self.eq_z);
        let mut b_ub = self.ineq_rhs.clone();
        let mut b_eq = self.eq_rhs.clone();
        for s in &self.rhs_slots {
            if s.equality {
                b_eq[s.row] += s.coeff * s.slot.value;
            } else {
                b_ub[s.row] += s.coeff * s.slot.value;
            }
        }
        lp.a_ub = a_ub;
        lp.b_ub = b_ub;
        lp.a_eq = a_eq;
        lp.b_eq = b_eq;
        lp
    }

    /// Solves the subproblem with the copy variables fixed at `z`.
    pub fn solve_at(&self, z: &[f64]) -> Result<FixedSolution, LpError> {
        self.solve_lp_at(&self.to_lp(), z)
    }

    /// Like [`solve_at`](Self::solve_at) with a prebuilt [`to_lp`](Self::to_lp).
    pub fn solve_lp_at(&self, lp: &StandardLp, z: &[f64]) -> Result<FixedSolution, LpError> {
        if z.len() != self.n_z() {
            return Err(LpError::DimensionMismatch(format!("expected {} copy values, got {}", self.n_z(), z.len())));
        }
        let nx = self.n_x();
        let fixed: BTreeMap<usize, f64> = z.iter().enumerate().map(|(i, &v)| (nx + i, v)).collect();
        solve_lp_fixed(lp, &fixed)
    }
}
