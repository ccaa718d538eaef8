//! Halfspace polytopes `{θ : a_iᵀθ ≤ b_i}` and the small LPs run on them.

use nalgebra::{DMatrix, DVector};

use crate::lp::{solve_lp, LpStatus, StandardLp};

/// Cap on the inscribed radius so Chebyshev LPs stay bounded.
pub(crate) const R_MAX: f64 = 1e6;
/// Rows whose maximum over the others exceeds their rhs by less than this are redundant.
const REDUNDANCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowKind {
    /// Feasibility of an inactive inequality row of the mp-LP.
    Primal(usize),
    /// Nonnegativity of the dual of the k-th active inequality row.
    Dual(usize),
    /// A row of the parameter set Θ.
    Theta,
    /// Added while carving a facet into pieces.
    Cut,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Poly {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub kind: Vec<RowKind>,
}

impl Poly {
    pub fn push(&mut self, row: Vec<f64>, rhs: f64, kind: RowKind) {
        self.rows.push(row);
        self.rhs.push(rhs);
        self.kind.push(kind);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        self.rows.iter().zip(&self.rhs).all(|(a, b)| dot(a, theta) <= b + tol)
    }

    /// Scales rows to unit length. Zero rows are dropped; returns false if one
    /// of them is violated (the polytope is empty).
    pub fn normalize(&mut self) -> bool {
        let mut out = Poly::default();
        for k in 0..self.len() {
            let norm = dot(&self.rows[k], &self.rows[k]).sqrt();
            if norm <= 1e-12 {
                if self.rhs[k] < -1e-9 {
                    return false;
                }
                continue;
            }
            out.push(self.rows[k].iter().map(|v| v / norm).collect(), self.rhs[k] / norm, self.kind[k]);
        }
        *self = out;
        true
    }

    fn matrix(&self, q: usize, extra_cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), q + extra_cols, |i, j| if j < q { self.rows[i][j] } else { 0.0 })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Center and radius of the largest ball inside `poly`, optionally restricted
/// to the hyperplane `nᵀθ = β` (with `n` of unit length).
pub(crate) fn chebyshev(poly: &Poly, q: usize, plane: Option<(&[f64], f64)>) -> Option<(Vec<f64>, f64)> {
    let mut lp = StandardLp::new(q + 1);
    lp.c[q] = -1.0;
    lp.lb[q] = 0.0;
    lp.ub[q] = R_MAX;
    let mut a = poly.matrix(q, 1);
    for i in 0..poly.len() {
        let row = &poly.rows[i];
        let norm = match plane {
            None => dot(row, row).sqrt(),
            Some((n, _)) => {
                let s = dot(row, n);
                (dot(row, row) - s * s).max(0.0).sqrt()
            }
        };
        a[(i, q)] = norm;
    }
    lp.a_ub = a;
    lp.b_ub = DVector::from_column_slice(&poly.rhs);
    if let Some((n, beta)) = plane {
        let mut row = n.to_vec();
        row.push(0.0);
        lp.push_eq(&row, beta);
    }
    let sol = solve_lp(&lp).ok()?;
    if sol.status != LpStatus::Optimal {
        return None;
    }
    Some((sol.x.as_slice()[..q].to_vec(), sol.x[q]))
}

/// `max objᵀθ` over `poly`: `None` if empty, `+∞` if unbounded.
pub(crate) fn maximize(poly: &Poly, q: usize, obj: &[f64]) -> Option<f64> {
    let mut lp = StandardLp::new(q);
    for j in 0..q {
        lp.c[j] = -obj[j];
    }
    lp.a_ub = poly.matrix(q, 0);
    lp.b_ub = DVector::from_column_slice(&poly.rhs);
    let sol = solve_lp(&lp).ok()?;
    match sol.status {
        LpStatus::Optimal => Some(-sol.objective),
        LpStatus::Unbounded => Some(f64::INFINITY),
        LpStatus::Infeasible => None,
    }
}

/// Drops rows implied by the remaining ones, scanning in order.
pub(crate) fn remove_redundant(poly: &mut Poly, q: usize) {
    let mut k = 0;
    while k < poly.len() {
        let row = poly.rows[k].clone();
        let b = poly.rhs[k];
        poly.rhs[k] = b + 1.0;
        let best = maximize(poly, q, &row);
        poly.rhs[k] = b;
        match best {
            Some(v) if v <= b + REDUNDANCY_TOL => {
                poly.rows.remove(k);
                poly.rhs.remove(k);
                poly.kind.remove(k);
            }
            _ => k += 1,
        }
    }
}

/// Coordinate-wise bounds of `poly`.
pub(crate) fn bounding_box(poly: &Poly, q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::NEG_INFINITY; q];
    let mut hi = vec![f64::INFINITY; q];
    let mut e = vec![0.0; q];
    for j in 0..q {
        e[j] = 1.0;
        if let Some(v) = maximize(poly, q, &e) {
            hi[j] = v;
        }
        e[j] = -1.0;
        if let Some(v) = maximize(poly, q, &e) {
            lo[j] = -v;
        }
        e[j] = 0.0;
    }
    (lo, hi)
}
