//! Dense linear-programming kernel.
//!
//! Problems are stated as
//!
//! ```text
//! min  cᵀx
//! s.t. A_ub x ≤ b_ub
//!      A_eq x = b_eq
//!      lb ≤ x ≤ ub          (bounds may be ±∞)
//! ```
//!
//! and solved with a bounded revised simplex method. Optimal results carry
//! KKT-consistent multipliers: `c + A_ubᵀ·dual_ub + A_eqᵀ·dual_eq − reduced = 0`,
//! with `dual_ub ≥ 0` and `reduced` holding the bound multipliers.

mod kkt;
pub(crate) mod simplex;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use kkt::KktReport;

/// Primal feasibility tolerance used when reporting and validating solutions.
pub const TOL_FEAS: f64 = 1e-7;
/// Tolerance on stationarity and complementary slackness residuals.
pub const TOL_KKT: f64 = 1e-7;
/// Smallest pivot magnitude accepted by the simplex kernel.
pub const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A linear program in inequality/equality/bounds form.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardLp {
    pub c: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl StandardLp {
    /// An LP over `n` free variables with no rows and zero cost.
    pub fn new(n: usize) -> Self {
        StandardLp {
            c: DVector::zeros(n),
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_ub(&self) -> usize {
        self.a_ub.nrows()
    }

    pub fn num_eq(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn with_cost(mut self, c: &[f64]) -> Self {
        self.c = DVector::from_column_slice(c);
        self
    }

    pub fn with_bounds(mut self, lb: &[f64], ub: &[f64]) -> Self {
        self.lb = DVector::from_column_slice(lb);
        self.ub = DVector::from_column_slice(ub);
        self
    }

    /// Appends the row `coeffs·x ≤ rhs`.
    pub fn push_ub(&mut self, coeffs: &[f64], rhs: f64) {
        push_row(&mut self.a_ub, &mut self.b_ub, coeffs, rhs);
    }

    /// Appends the row `coeffs·x = rhs`.
    pub fn push_eq(&mut self, coeffs: &[f64], rhs: f64) {
        push_row(&mut self.a_eq, &mut self.b_eq, coeffs, rhs);
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.c.len();
        let check = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(LpError::DimensionMismatch(format!("{what}: expected {want}, got {got}")))
            }
        };
        check("A_ub columns", self.a_ub.ncols(), n)?;
        check("A_eq columns", self.a_eq.ncols(), n)?;
        check("b_ub length", self.b_ub.len(), self.a_ub.nrows())?;
        check("b_eq length", self.b_eq.len(), self.a_eq.nrows())?;
        check("lb length", self.lb.len(), n)?;
        check("ub length", self.ub.len(), n)?;
        for j in 0..n {
            if self.lb[j].is_nan() || self.ub[j].is_nan() || self.lb[j] == f64::INFINITY || self.ub[j] == f64::NEG_INFINITY {
                return Err(LpError::DimensionMismatch(format!("invalid bounds on variable {j}")));
            }
        }
        let finite = self.c.iter().chain(self.a_ub.iter()).chain(self.b_ub.iter()).chain(self.a_eq.iter()).chain(self.b_eq.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(LpError::NumericalFailure("non-finite problem data".into()));
        }
        Ok(())
    }
}

fn push_row(a: &mut DMatrix<f64>, b: &mut DVector<f64>, coeffs: &[f64], rhs: f64) {
    assert_eq!(coeffs.len(), a.ncols(), "row length must equal the number of variables");
    let r = a.nrows();
    let taken = std::mem::replace(a, DMatrix::zeros(0, 0));
    *a = taken.insert_row(r, 0.0);
    for (j, &v) in coeffs.iter().enumerate() {
        a[(r, j)] = v;
    }
    let taken = std::mem::replace(b, DVector::zeros(0));
    *b = taken.insert_row(r, rhs);
}

/// Which columns and rows ended up nonbasic in the final simplex basis.
///
/// `nonbasic_rows` are inequality rows whose slack is nonbasic (binding);
/// together with the equality rows and the nonbasic structural bounds they
/// form a linearly independent active set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Basis {
    pub nonbasic_rows: Vec<usize>,
    pub nonbasic_cols: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of the inequality rows, nonnegative at optimality.
    pub dual_ub: DVector<f64>,
    /// Multipliers of the equality rows, free sign.
    pub dual_eq: DVector<f64>,
    /// Bound multipliers (reduced costs): positive at a lower bound, negative at an upper bound.
    pub reduced: DVector<f64>,
    /// Tight inequality rows followed by all equality rows (numbered `num_ub + k`).
    pub active_set: Vec<usize>,
    pub basis: Option<Basis>,
    /// Recession direction for unbounded problems.
    pub ray: Option<DVector<f64>>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub(crate) fn non_optimal(status: LpStatus, lp: &StandardLp, ray: Option<DVector<f64>>, iterations: usize) -> Self {
        let n = lp.num_vars();
        LpSolution {
            status,
            x: DVector::zeros(n),
            objective: match status {
                LpStatus::Infeasible => f64::INFINITY,
                LpStatus::Unbounded => f64::NEG_INFINITY,
                LpStatus::Optimal => 0.0,
            },
            dual_ub: DVector::zeros(lp.num_ub()),
            dual_eq: DVector::zeros(lp.num_eq()),
            reduced: DVector::zeros(n),
            active_set: Vec::new(),
            basis: None,
            ray,
            iterations,
        }
    }

    /// Residuals of the optimality conditions against `lp`.
    pub fn kkt(&self, lp: &StandardLp) -> KktReport {
        kkt::report(lp, self)
    }
}

/// Solves `lp` to optimality, or reports infeasibility / unboundedness.
pub fn solve_lp(lp: &StandardLp) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut engine = simplex::Engine::new(lp)?;
    let outcome = engine.solve_cold()?;
    Ok(engine.extract(lp, outcome))
}

/// Solution of an LP with some variables pinned by equality rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSolution {
    pub solution: LpSolution,
    /// Fixed variable indices, in ascending order.
    pub fixed_vars: Vec<usize>,
    /// Position in `solution.dual_eq` of each fixing row.
    pub fixing_rows: Vec<usize>,
}

impl FixedSolution {
    /// Equality multipliers of the fixing rows (KKT sign convention).
    pub fn fixing_duals(&self) -> Vec<f64> {
        self.fixing_rows.iter().map(|&r| self.solution.dual_eq[r]).collect()
    }

    /// Derivative of the optimal value with respect to each fixed value.
    ///
    /// Equal to the negated fixing dual. Under degeneracy this is one
    /// element of the subdifferential, the one supported by the final basis.
    pub fn sensitivities(&self) -> Vec<f64> {
        self.fixing_rows.iter().map(|&r| -self.solution.dual_eq[r]).collect()
    }
}

impl std::ops::Deref for FixedSolution {
    type Target = LpSolution;
    fn deref(&self) -> &LpSolution {
        &self.solution
    }
}

/// Solves `lp` with the extra equalities `x[j] = value` for every entry of `fixed`.
pub fn solve_lp_fixed(lp: &StandardLp, fixed: &BTreeMap<usize, f64>) -> Result<FixedSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    if let Some((&j, _)) = fixed.iter().find(|(&j, _)| j >= n) {
        return Err(LpError::DimensionMismatch(format!("fixed index {j} out of range for {n} variables")));
    }
    let mut aug = lp.clone();
    let base = lp.num_eq();
    let mut row = vec![0.0; n];
    for (&j, &v) in fixed {
        row[j] = 1.0;
        aug.push_eq(&row, v);
        row[j] = 0.0;
    }
    let solution = solve_lp(&aug)?;
    Ok(FixedSolution {
        solution,
        fixed_vars: fixed.keys().copied().collect(),
        fixing_rows: (base..base + fixed.len()).collect(),
    })
}
