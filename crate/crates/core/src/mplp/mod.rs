//! Multi-parametric linear programming.
//!
//! ```text
//! z(θ) = min_x (c + Hθ)ᵀx
//!        s.t.  A x ≤ b + Fθ
//!              A_eq x = b_eq + F_eq θ
//!        θ ∈ Θ = {θ : A_θ θ ≤ b_θ}
//! ```
//!
//! The explicit solution is a list of critical regions. In each region one
//! active set stays optimal, so the primal solution and the duals of the
//! active rows are affine in θ and the optimal value is `(c + Hθ)ᵀx(θ)`.

mod embed;
mod enumerate;
pub(crate) mod geometry;
mod io;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lp::{LpError, StandardLp};

pub use embed::{embed_subproblem, ThetaLayout};
pub use enumerate::{enumerate_regions, enumerate_regions_with, Strategy};
pub use io::{load_mp, save_mp, FORMAT_VERSION};

/// Membership slack for [`MpSolution::locate_region`].
pub const LOCATE_TOL: f64 = 1e-8;
/// Regions with an inscribed radius at or below this are discarded.
pub const MIN_RADIUS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parameter set is unbounded: {0}")]
    UnboundedParameterSpace(String),
    #[error("the LP is infeasible for every parameter in the parameter set")]
    EmptySolution,
    #[error("no critical region contains θ = {theta:?}")]
    NoRegionFound { theta: Vec<f64> },
    #[error("malformed mp solution at `{path}`: {message}")]
    Format { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpLp {
    pub c: DVector<f64>,
    pub h: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub f: DMatrix<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub f_eq: DMatrix<f64>,
    pub a_theta: DMatrix<f64>,
    pub b_theta: DVector<f64>,
}

impl MpLp {
    /// Problem over `n` free variables and a `q`-dimensional box `Θ = [lo, hi]`.
    pub fn new(n: usize, lo: &[f64], hi: &[f64]) -> Self {
        let q = lo.len();
        let mut a_theta = DMatrix::zeros(2 * q, q);
        let mut b_theta = DVector::zeros(2 * q);
        for k in 0..q {
            a_theta[(2 * k, k)] = 1.0;
            b_theta[2 * k] = hi[k];
            a_theta[(2 * k + 1, k)] = -1.0;
            b_theta[2 * k + 1] = -lo[k];
        }
        MpLp {
            c: DVector::zeros(n),
            h: DMatrix::zeros(n, q),
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            f: DMatrix::zeros(0, q),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            f_eq: DMatrix::zeros(0, q),
            a_theta,
            b_theta,
        }
    }

    pub fn x_dim(&self) -> usize {
        self.c.len()
    }

    pub fn theta_dim(&self) -> usize {
        self.a_theta.ncols()
    }

    /// Appends `row·x ≤ rhs + theta_row·θ`.
    pub fn push_ineq(&mut self, row: &[f64], rhs: f64, theta_row: &[f64]) {
        let m = self.a.nrows();
        self.a = std::mem::take(&mut self.a).insert_row(m, 0.0);
        self.f = std::mem::take(&mut self.f).insert_row(m, 0.0);
        self.b = std::mem::take(&mut self.b).insert_row(m, rhs);
        self.a.row_mut(m).copy_from_slice(row);
        self.f.row_mut(m).copy_from_slice(theta_row);
    }

    /// Appends `row·x = rhs + theta_row·θ`.
    pub fn push_eq(&mut self, row: &[f64], rhs: f64, theta_row: &[f64]) {
        let m = self.a_eq.nrows();
        self.a_eq = std::mem::take(&mut self.a_eq).insert_row(m, 0.0);
        self.f_eq = std::mem::take(&mut self.f_eq).insert_row(m, 0.0);
        self.b_eq = std::mem::take(&mut self.b_eq).insert_row(m, rhs);
        self.a_eq.row_mut(m).copy_from_slice(row);
        self.f_eq.row_mut(m).copy_from_slice(theta_row);
    }

    pub fn validate(&self) -> Result<(), MpError> {
        let (n, q) = (self.x_dim(), self.theta_dim());
        let check = |what: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(MpError::DimensionMismatch(format!("{what}: expected {want:?}, got {got:?}")))
            }
        };
        let m = self.a.nrows();
        let me = self.a_eq.nrows();
        check("H", self.h.shape(), (n, q))?;
        check("A", self.a.shape(), (m, n))?;
        check("b", (self.b.len(), 1), (m, 1))?;
        check("F", self.f.shape(), (m, q))?;
        check("A_eq", self.a_eq.shape(), (me, n))?;
        check("b_eq", (self.b_eq.len(), 1), (me, 1))?;
        check("F_eq", self.f_eq.shape(), (me, q))?;
        check("b_theta", (self.b_theta.len(), 1), (self.a_theta.nrows(), 1))?;
        if n == 0 {
            return Err(MpError::DimensionMismatch("the problem has no decision variables".into()));
        }
        let all = [&self.c, &self.b, &self.b_eq, &self.b_theta];
        let mats = [&self.h, &self.a, &self.f, &self.a_eq, &self.f_eq, &self.a_theta];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) || mats.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(MpError::DimensionMismatch("non-finite problem data".into()));
        }
        Ok(())
    }

    /// Implied bounds of every θ coordinate over Θ.
    pub fn theta_bounds(&self) -> Result<(Vec<f64>, Vec<f64>), MpError> {
        let q = self.theta_dim();
        let poly = self.theta_poly();
        if geometry::chebyshev(&poly, q, None).is_none() {
            return Err(MpError::EmptySolution);
        }
        let (lo, hi) = geometry::bounding_box(&poly, q);
        if let Some(k) = (0..q).find(|&k| !lo[k].is_finite() || !hi[k].is_finite()) {
            return Err(MpError::UnboundedParameterSpace(format!("θ[{k}] has no finite bound")));
        }
        Ok((lo, hi))
    }

    pub(crate) fn theta_poly(&self) -> geometry::Poly {
        let mut poly = geometry::Poly::default();
        for i in 0..self.a_theta.nrows() {
            poly.push(self.a_theta.row(i).iter().copied().collect(), self.b_theta[i], geometry::RowKind::Theta);
        }
        poly
    }

    pub fn theta_in_set(&self, theta: &[f64], tol: f64) -> bool {
        self.theta_poly().contains(theta, tol)
    }

    /// The LP obtained by fixing θ, over free variables.
    pub fn instance_lp(&self, theta: &[f64]) -> StandardLp {
        let t = DVector::from_column_slice(theta);
        let mut lp = StandardLp::new(self.x_dim());
        lp.c = &self.c + &self.h * &t;
        lp.a_ub = self.a.clone();
        lp.b_ub = &self.b + &self.f * &t;
        lp.a_eq = self.a_eq.clone();
        lp.b_eq = &self.b_eq + &self.f_eq * &t;
        lp
    }

    /// Largest violation of the constraints by `x` at `theta`.
    pub fn violation(&self, x: &DVector<f64>, theta: &[f64]) -> f64 {
        let lp = self.instance_lp(theta);
        let ub = (&lp.a_ub * x - &lp.b_ub).iter().fold(0.0f64, |m, v| m.max(*v));
        let eq = (&lp.a_eq * x - &lp.b_eq).amax();
        ub.max(eq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalRegion {
    /// Region polytope `E θ ≤ f`, rows of unit length.
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
    /// Primal map `x(θ) = A_aff θ + b_aff`.
    pub a_aff: DMatrix<f64>,
    pub b_aff: DVector<f64>,
    /// Dual map `λ(θ) = G θ + g`, one entry per element of `active_set`.
    pub dual_g: DMatrix<f64>,
    pub dual_c: DVector<f64>,
    /// Active inequality rows, followed by the equality rows used, numbered
    /// `num_ineq + k`.
    pub active_set: Vec<usize>,
    pub cheb_center: DVector<f64>,
    pub cheb_radius: f64,
    pub(crate) bbox_lo: Vec<f64>,
    pub(crate) bbox_hi: Vec<f64>,
}

impl CriticalRegion {
    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        if theta.iter().enumerate().any(|(k, &t)| t < self.bbox_lo[k] - tol || t > self.bbox_hi[k] + tol) {
            return false;
        }
        (0..self.e.nrows()).all(|i| {
            let s: f64 = self.e.row(i).iter().zip(theta).map(|(a, b)| a * b).sum();
            s <= self.f[i] + tol
        })
    }

    pub fn evaluate_primal(&self, theta: &[f64]) -> DVector<f64> {
        &self.a_aff * DVector::from_column_slice(theta) + &self.b_aff
    }

    /// Duals of `active_set`, in the sign convention of [`crate::lp::LpSolution`].
    pub fn evaluate_duals(&self, theta: &[f64]) -> DVector<f64> {
        &self.dual_g * DVector::from_column_slice(theta) + &self.dual_c
    }

    pub fn evaluate_value(&self, p: &MpLp, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        let cost = &p.c + &p.h * &t;
        cost.dot(&(&self.a_aff * &t + &self.b_aff))
    }

    /// Gradient of the optimal value with respect to θ.
    pub fn value_gradient(&self, p: &MpLp, theta: &[f64]) -> DVector<f64> {
        let t = DVector::from_column_slice(theta);
        let cost = &p.c + &p.h * &t;
        let x = &self.a_aff * &t + &self.b_aff;
        self.a_aff.tr_mul(&cost) + p.h.tr_mul(&x)
    }

    /// Gradient of the optimal value with respect to the master slots of θ.
    pub fn subgradient_wrt_master(&self, p: &MpLp, layout: &ThetaLayout, theta: &[f64]) -> Vec<f64> {
        let grad = self.value_gradient(p, theta);
        layout.master_idx.iter().map(|&k| grad[k]).collect()
    }

    /// Number of inequality rows in `active_set`.
    pub fn num_active_ineq(&self, p: &MpLp) -> usize {
        self.active_set.iter().filter(|&&i| i < p.a.nrows()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpSolution {
    pub problem: MpLp,
    pub regions: Vec<CriticalRegion>,
}

impl MpSolution {
    pub fn theta_dim(&self) -> usize {
        self.problem.theta_dim()
    }

    pub fn x_dim(&self) -> usize {
        self.problem.x_dim()
    }

    /// Smallest index of a region containing θ.
    pub fn locate_region(&self, theta: &[f64]) -> Result<usize, MpError> {
        if theta.len() != self.theta_dim() {
            return Err(MpError::DimensionMismatch(format!("θ has {} entries, expected {}", theta.len(), self.theta_dim())));
        }
        self.regions
            .iter()
            .position(|r| r.contains(theta, LOCATE_TOL))
            .ok_or_else(|| MpError::NoRegionFound { theta: theta.to_vec() })
    }

    /// Located region and optimal value at θ.
    pub fn value_at(&self, theta: &[f64]) -> Result<(usize, f64), MpError> {
        let r = self.locate_region(theta)?;
        Ok((r, self.regions[r].evaluate_value(&self.problem, theta)))
    }
}

#[cfg(test)]
mod tests;
