use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use super::geometry::{self, Poly, RowKind};
use super::{CriticalRegion, MpError, MpLp, MpSolution, MIN_RADIUS};
use crate::lp::{solve_lp, LpStatus, StandardLp};

/// Distance past a facet at which the neighbouring region is probed.
const FACET_STEP: f64 = 1e-6;
/// Pieces examined per facet before giving up on it.
const MAX_PIECES: usize = 400;
/// Relative pivot size below which an active set is treated as rank deficient.
const RANK_TOL: f64 = 1e-9;
/// Problems with at most this many inequality rows (after presolve) are
/// enumerated combinatorially by [`Strategy::Auto`].
pub const COMBINATORIAL_MAX_ROWS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Auto,
    /// Seed at an interior point, then cross facets breadth-first.
    Explore,
    /// Try every active set of the right size.
    Combinatorial,
}

/// Rows kept after removing implied inequalities and dependent equalities.
#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    pub ineq: Vec<usize>,
    pub eq: Vec<usize>,
}

struct Built {
    region: CriticalRegion,
    poly: Poly,
}

pub fn enumerate_regions(p: &MpLp) -> Result<MpSolution, MpError> {
    enumerate_regions_with(p, Strategy::Auto)
}

pub fn enumerate_regions_with(p: &MpLp, strategy: Strategy) -> Result<MpSolution, MpError> {
    p.validate()?;
    p.theta_bounds()?;
    let red = presolve(p)?;
    let strategy = match strategy {
        Strategy::Auto if red.ineq.len() <= COMBINATORIAL_MAX_ROWS => Strategy::Combinatorial,
        Strategy::Auto => Strategy::Explore,
        s => s,
    };
    log::debug!("enumerating with {strategy:?}: {} of {} inequality rows kept", red.ineq.len(), p.a.nrows());
    let built = match strategy {
        Strategy::Combinatorial => combinatorial(p, &red),
        _ => explore(p, &red),
    };
    if built.is_empty() {
        return Err(MpError::EmptySolution);
    }
    Ok(MpSolution { problem: p.clone(), regions: built.into_iter().map(|b| b.region).collect() })
}

fn residual(v: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut r = v.clone();
    for _ in 0..2 {
        for u in basis {
            let s = r.dot(u);
            r.axpy(-s, u, 1.0);
        }
    }
    r
}

/// Joint `(x, θ)` LP over the kept rows plus Θ.
fn joint_lp(p: &MpLp, ineq: &[usize], eq: &[usize]) -> StandardLp {
    let (n, q) = (p.x_dim(), p.theta_dim());
    let mut lp = StandardLp::new(n + q);
    let mut row = vec![0.0; n + q];
    for &i in ineq {
        for j in 0..n {
            row[j] = p.a[(i, j)];
        }
        for k in 0..q {
            row[n + k] = -p.f[(i, k)];
        }
        lp.push_ub(&row, p.b[i]);
    }
    row.fill(0.0);
    for i in 0..p.a_theta.nrows() {
        for k in 0..q {
            row[n + k] = p.a_theta[(i, k)];
        }
        lp.push_ub(&row, p.b_theta[i]);
    }
    for &i in eq {
        for j in 0..n {
            row[j] = p.a_eq[(i, j)];
        }
        for k in 0..q {
            row[n + k] = -p.f_eq[(i, k)];
        }
        lp.push_eq(&row, p.b_eq[i]);
    }
    lp
}

pub(crate) fn presolve(p: &MpLp) -> Result<Reduced, MpError> {
    let (n, q) = (p.x_dim(), p.theta_dim());
    let mut basis = Vec::new();
    let mut aug_basis = Vec::new();
    let mut eq = Vec::new();
    for i in 0..p.a_eq.nrows() {
        let a = DVector::from_iterator(n, p.a_eq.row(i).iter().copied());
        let aug = DVector::from_iterator(n + q + 1, a.iter().copied().chain(p.f_eq.row(i).iter().map(|v| -v)).chain([p.b_eq[i]]));
        let ra = residual(&a, &basis);
        let raug = residual(&aug, &aug_basis);
        let aug_free = raug.norm() > RANK_TOL * aug.norm().max(1.0);
        if ra.norm() > RANK_TOL * a.norm().max(1.0) {
            eq.push(i);
            basis.push(ra.normalize());
            aug_basis.push(raug.normalize());
        } else if aug_free {
            // Dependent in x but not in (θ, rhs): feasible only on a lower
            // dimensional set of parameters.
            log::warn!("equality row {i} restricts θ to a lower dimensional set");
            return Err(MpError::EmptySolution);
        }
    }

    let mut ineq: Vec<usize> = (0..p.a.nrows()).collect();
    let full = solve_lp(&joint_lp(p, &ineq, &eq))?;
    if full.status == LpStatus::Infeasible {
        return Err(MpError::EmptySolution);
    }
    let mut k = 0;
    while k < ineq.len() {
        let i = ineq[k];
        let mut lp = joint_lp(p, &ineq, &eq);
        lp.b_ub[k] += 1.0;
        for j in 0..n {
            lp.c[j] = -p.a[(i, j)];
        }
        for t in 0..q {
            lp.c[n + t] = p.f[(i, t)];
        }
        let sol = solve_lp(&lp)?;
        if sol.status == LpStatus::Optimal && -sol.objective <= p.b[i] + 1e-9 * (1.0 + p.b[i].abs()) {
            ineq.remove(k);
        } else {
            k += 1;
        }
    }
    Ok(Reduced { ineq, eq })
}

fn region_from_active_set(p: &MpLp, red: &Reduced, active: &[usize]) -> Option<Built> {
    let (n, q, m) = (p.x_dim(), p.theta_dim(), p.a.nrows());
    if active.len() + red.eq.len() != n {
        return None;
    }
    let mut active = active.to_vec();
    active.sort_unstable();
    let mut mat = DMatrix::zeros(n, n);
    let mut fm = DMatrix::zeros(n, q);
    let mut bm = DVector::zeros(n);
    for (r, &i) in active.iter().enumerate() {
        mat.row_mut(r).copy_from(&p.a.row(i));
        fm.row_mut(r).copy_from(&p.f.row(i));
        bm[r] = p.b[i];
    }
    for (r, &i) in red.eq.iter().enumerate() {
        let r = active.len() + r;
        mat.row_mut(r).copy_from(&p.a_eq.row(i));
        fm.row_mut(r).copy_from(&p.f_eq.row(i));
        bm[r] = p.b_eq[i];
    }
    let lu = mat.full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..n).map(|k| u[(k, k)].abs()).collect();
    let big = diag.iter().fold(0.0f64, |a, &b| a.max(b));
    if n > 0 && diag.iter().any(|&d| d <= RANK_TOL * big.max(1.0)) {
        return None;
    }
    let inv = lu.try_inverse()?;
    let a_aff = &inv * &fm;
    let b_aff = &inv * &bm;
    let inv_t = inv.transpose();
    let dual_g = -(&inv_t * &p.h);
    let dual_c = -(&inv_t * &p.c);

    let mut poly = Poly::default();
    for &i in &red.ineq {
        if active.binary_search(&i).is_ok() {
            continue;
        }
        let ai = p.a.row(i);
        let row: Vec<f64> = (0..q).map(|k| (ai * a_aff.column(k))[0] - p.f[(i, k)]).collect();
        let rhs = p.b[i] - (ai * &b_aff)[0];
        poly.push(row, rhs, RowKind::Primal(i));
    }
    for r in 0..active.len() {
        poly.push(dual_g.row(r).iter().map(|v| -v).collect(), dual_c[r], RowKind::Dual(r));
    }
    let theta = p.theta_poly();
    for k in 0..theta.len() {
        poly.push(theta.rows[k].clone(), theta.rhs[k], RowKind::Theta);
    }
    if !poly.normalize() {
        return None;
    }
    let (_, radius) = geometry::chebyshev(&poly, q, None)?;
    if radius <= MIN_RADIUS {
        return None;
    }
    geometry::remove_redundant(&mut poly, q);
    let (center, radius) = geometry::chebyshev(&poly, q, None)?;
    if radius <= MIN_RADIUS {
        return None;
    }
    let (bbox_lo, bbox_hi) = geometry::bounding_box(&poly, q);
    let e = DMatrix::from_fn(poly.len(), q, |i, k| poly.rows[i][k]);
    let f = DVector::from_column_slice(&poly.rhs);
    let active_set = active.iter().copied().chain(red.eq.iter().map(|&k| m + k)).collect();
    Some(Built {
        region: CriticalRegion {
            e,
            f,
            a_aff,
            b_aff,
            dual_g,
            dual_c,
            active_set,
            cheb_center: DVector::from_vec(center),
            cheb_radius: radius,
            bbox_lo,
            bbox_hi,
        },
        poly,
    })
}

/// Visits every `k`-subset of `0..m` in lexicographic order.
fn for_each_combination(m: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        visit(&combo);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if combo[i] < m - k + i {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn binomial(m: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

fn combinatorial(p: &MpLp, red: &Reduced) -> Vec<Built> {
    let k = p.x_dim().saturating_sub(red.eq.len());
    let mut out = Vec::new();
    for_each_combination(red.ineq.len(), k, |combo| {
        let active: Vec<usize> = combo.iter().map(|&c| red.ineq[c]).collect();
        if let Some(b) = region_from_active_set(p, red, &active) {
            out.push(b);
        }
    });
    out
}

/// The LP at θ over the kept rows.
fn reduced_instance(p: &MpLp, red: &Reduced, theta: &[f64]) -> StandardLp {
    let t = DVector::from_column_slice(theta);
    let n = p.x_dim();
    let mut lp = StandardLp::new(n);
    lp.c = &p.c + &p.h * &t;
    lp.a_ub = p.a.select_rows(red.ineq.iter());
    lp.b_ub = DVector::from_iterator(red.ineq.len(), red.ineq.iter().map(|&i| p.b[i] + (p.f.row(i) * &t)[0]));
    lp.a_eq = p.a_eq.select_rows(red.eq.iter());
    lp.b_eq = DVector::from_iterator(red.eq.len(), red.eq.iter().map(|&i| p.b_eq[i] + (p.f_eq.row(i) * &t)[0]));
    lp
}

/// Critical region containing θ, built from the optimal active set at θ.
fn region_at(p: &MpLp, red: &Reduced, theta: &[f64]) -> Option<Built> {
    let lp = reduced_instance(p, red, theta);
    let sol = solve_lp(&lp).ok()?;
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let accept = |active: &[usize]| region_from_active_set(p, red, active).filter(|b| b.poly.contains(theta, 1e-7));
    if let Some(basis) = &sol.basis {
        if basis.nonbasic_cols.is_empty() {
            let active: Vec<usize> = basis.nonbasic_rows.iter().map(|&r| red.ineq[r]).collect();
            if let Some(b) = accept(&active) {
                return Some(b);
            }
        }
    }

    // Degenerate vertex: retry with a slightly perturbed right-hand side.
    let mut pert = lp.clone();
    for k in 0..pert.b_ub.len() {
        pert.b_ub[k] += 1e-9 * (1 + (7 * k) % 5) as f64 / 5.0;
    }
    if let Ok(ps) = solve_lp(&pert) {
        if let Some(basis) = ps.basis.filter(|b| b.nonbasic_cols.is_empty()) {
            let active: Vec<usize> = basis.nonbasic_rows.iter().map(|&r| red.ineq[r]).collect();
            if let Some(b) = accept(&active) {
                return Some(b);
            }
        }
    }

    // Last resort: every subset of the rows tight at the solution.
    let k = p.x_dim().saturating_sub(red.eq.len());
    let ax = &lp.a_ub * &sol.x;
    let tight: Vec<usize> = (0..red.ineq.len()).filter(|&r| lp.b_ub[r] - ax[r] <= 1e-7 * (1.0 + lp.b_ub[r].abs())).collect();
    if binomial(tight.len(), k) > 20_000.0 {
        return None;
    }
    let mut found = None;
    for_each_combination(tight.len(), k, |combo| {
        if found.is_none() {
            let active: Vec<usize> = combo.iter().map(|&c| red.ineq[tight[c]]).collect();
            found = accept(&active);
        }
    });
    found
}

/// A point of Θ with the most slack in the joint `(x, θ)` system.
fn joint_interior(p: &MpLp, red: &Reduced) -> Option<Vec<f64>> {
    let (n, q) = (p.x_dim(), p.theta_dim());
    let base = joint_lp(p, &red.ineq, &red.eq);
    let nv = n + q + 1;
    let mut lp = StandardLp::new(nv);
    lp.c[n + q] = -1.0;
    lp.lb[n + q] = 0.0;
    lp.ub[n + q] = 1.0;
    lp.a_ub = DMatrix::from_fn(base.num_ub(), nv, |i, j| {
        if j < n + q {
            base.a_ub[(i, j)]
        } else {
            base.a_ub.row(i).norm()
        }
    });
    lp.b_ub = base.b_ub.clone();
    lp.a_eq = base.a_eq.clone().insert_column(n + q, 0.0);
    lp.b_eq = base.b_eq.clone();
    let sol = solve_lp(&lp).ok()?;
    (sol.status == LpStatus::Optimal).then(|| sol.x.as_slice()[n..n + q].to_vec())
}

fn explore(p: &MpLp, red: &Reduced) -> Vec<Built> {
    let q = p.theta_dim();
    let theta_poly = p.theta_poly();
    let mut seeds = Vec::new();
    if let Some((c, _)) = geometry::chebyshev(&theta_poly, q, None) {
        seeds.push(c);
    }
    if let Some(c) = joint_interior(p, red) {
        seeds.push(c);
    }
    let Some(first) = seeds.iter().find_map(|s| region_at(p, red, s)) else {
        return Vec::new();
    };

    let mut by_signature: HashMap<Vec<usize>, usize> = HashMap::new();
    by_signature.insert(first.region.active_set.clone(), 0);
    let mut regions = vec![first];
    let mut queue = VecDeque::from([0usize]);
    while let Some(ri) = queue.pop_front() {
        let facets: Vec<usize> = (0..regions[ri].poly.len()).filter(|&k| regions[ri].poly.kind[k] != RowKind::Theta).collect();
        for k in facets {
            let normal = regions[ri].poly.rows[k].clone();
            let beta = regions[ri].poly.rhs[k] + FACET_STEP;
            let mut base = theta_poly.clone();
            {
                let src = &regions[ri].poly;
                for j in (0..src.len()).filter(|&j| j != k) {
                    base.push(src.rows[j].clone(), src.rhs[j], RowKind::Cut);
                }
            }
            let mut pieces = vec![base];
            let mut examined = 0;
            while let Some(piece) = pieces.pop() {
                examined += 1;
                if examined > MAX_PIECES {
                    log::warn!("region {ri} facet {k}: piece limit reached, facet only partially explored");
                    break;
                }
                let Some((c, radius)) = geometry::chebyshev(&piece, q, Some((&normal, beta))) else {
                    continue;
                };
                if radius <= MIN_RADIUS {
                    continue;
                }
                let idx = match regions.iter().position(|r| r.poly.contains(&c, 1e-9)) {
                    Some(i) => i,
                    None => {
                        let Some(b) = region_at(p, red, &c) else {
                            continue;
                        };
                        match by_signature.get(&b.region.active_set) {
                            Some(&i) => i,
                            None => {
                                let i = regions.len();
                                by_signature.insert(b.region.active_set.clone(), i);
                                regions.push(b);
                                queue.push_back(i);
                                i
                            }
                        }
                    }
                };
                if !regions[idx].poly.contains(&c, 1e-7) {
                    continue;
                }
                // Remove the located region from the piece; what remains is
                // a union of pieces, each violating one of its rows.
                let other = &regions[idx].poly;
                let mut acc = piece;
                for j in 0..other.len() {
                    if other.kind[j] != RowKind::Theta {
                        let mut child = acc.clone();
                        child.push(other.rows[j].iter().map(|v| -v).collect(), -other.rhs[j], RowKind::Cut);
                        pieces.push(child);
                    }
                    acc.push(other.rows[j].clone(), other.rhs[j], RowKind::Cut);
                }
            }
        }
    }
    regions
}

#[cfg(test)]
pub(crate) fn presolve_for_tests(p: &MpLp) -> Result<(Vec<usize>, Vec<usize>), MpError> {
    presolve(p).map(|r| (r.ineq, r.eq))
}

