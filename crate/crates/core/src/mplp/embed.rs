use nalgebra::DMatrix;

use super::{MpError, MpLp};
use crate::subproblem::ScenarioSubproblemSpec;

/// Positions in θ of the master copies, the uncertain costs and the uncertain
/// right-hand sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaLayout {
    pub master_idx: Vec<usize>,
    pub cost_idx: Vec<usize>,
    pub rhs_idx: Vec<usize>,
}

impl ThetaLayout {
    pub fn theta_dim(&self) -> usize {
        self.master_idx.len() + self.cost_idx.len() + self.rhs_idx.len()
    }

    /// θ for a subproblem whose copies take the values `z`.
    pub fn theta(&self, spec: &ScenarioSubproblemSpec, z: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.theta_dim()];
        for (&k, &v) in self.master_idx.iter().zip(z) {
            theta[k] = v;
        }
        for (&k, s) in self.cost_idx.iter().zip(&spec.cost_slots) {
            theta[k] = s.slot.value;
        }
        for (&k, s) in self.rhs_idx.iter().zip(&spec.rhs_slots) {
            theta[k] = s.slot.value;
        }
        theta
    }
}

/// Rewrites a scenario subproblem as an mp-LP over `[x; z]` whose parameter is
/// `θ = [z̄; cost slots; rhs slots]`.
///
/// Variable bounds become rows (a fixed variable becomes an equality), the
/// copy variables are pinned by `z = θ_master`, and Θ is the box spanned by
/// the slot ranges.
pub fn embed_subproblem(sub: &ScenarioSubproblemSpec) -> Result<(MpLp, ThetaLayout), MpError> {
    sub.validate()?;
    let (nx, nz) = (sub.n_x(), sub.n_z());
    let (nc, nr) = (sub.cost_slots.len(), sub.rhs_slots.len());
    let n = nx + nz;
    let q = nz + nc + nr;
    let layout = ThetaLayout {
        master_idx: (0..nz).collect(),
        cost_idx: (nz..nz + nc).collect(),
        rhs_idx: (nz + nc..q).collect(),
    };

    let mut lo = sub.z_lo.clone();
    let mut hi = sub.z_hi.clone();
    for s in &sub.cost_slots {
        lo.push(s.slot.lo);
        hi.push(s.slot.hi);
    }
    for s in &sub.rhs_slots {
        lo.push(s.slot.lo);
        hi.push(s.slot.hi);
    }
    if let Some(k) = (0..q).find(|&k| !lo[k].is_finite() || !hi[k].is_finite() || lo[k] > hi[k]) {
        return Err(MpError::UnboundedParameterSpace(format!("θ[{k}] has range [{}, {}]", lo[k], hi[k])));
    }

    let mut p = MpLp::new(n, &lo, &hi);
    for j in 0..nx {
        p.c[j] = sub.cost[j];
    }
    for (k, s) in sub.cost_slots.iter().enumerate() {
        p.h[(s.var, nz + k)] += s.coeff;
    }

    let mut row = vec![0.0; n];
    let mut theta_row = vec![0.0; q];
    let set_row = |row: &mut Vec<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>, i: usize| {
        for j in 0..nx {
            row[j] = x[(i, j)];
        }
        for j in 0..nz {
            row[nx + j] = z[(i, j)];
        }
    };
    for i in 0..sub.ineq_rhs.len() {
        set_row(&mut row, &sub.ineq_x, &sub.ineq_z, i);
        theta_row.fill(0.0);
        for (k, s) in sub.rhs_slots.iter().enumerate() {
            if !s.equality && s.row == i {
                theta_row[nz + nc + k] += s.coeff;
            }
        }
        p.push_ineq(&row, sub.ineq_rhs[i], &theta_row);
    }
    let mut eq_rows = Vec::new();
    for i in 0..sub.eq_rhs.len() {
        set_row(&mut row, &sub.eq_x, &sub.eq_z, i);
        theta_row.fill(0.0);
        for (k, s) in sub.rhs_slots.iter().enumerate() {
            if s.equality && s.row == i {
                theta_row[nz + nc + k] += s.coeff;
            }
        }
        eq_rows.push((row.clone(), sub.eq_rhs[i], theta_row.clone()));
    }

    theta_row.fill(0.0);
    for j in 0..nx {
        row.fill(0.0);
        let (l, u) = (sub.x_lb[j], sub.x_ub[j]);
        if l == u {
            row[j] = 1.0;
            eq_rows.push((row.clone(), l, theta_row.clone()));
            continue;
        }
        if l.is_finite() {
            row[j] = -1.0;
            p.push_ineq(&row, -l, &theta_row);
        }
        if u.is_finite() {
            row[j] = 1.0;
            p.push_ineq(&row, u, &theta_row);
        }
    }
    for i in 0..nz {
        row.fill(0.0);
        row[nx + i] = 1.0;
        let mut t = vec![0.0; q];
        t[i] = 1.0;
        eq_rows.push((row.clone(), 0.0, t));
    }
    for (r, b, t) in eq_rows {
        p.push_eq(&r, b, &t);
    }
    Ok((p, layout))
}
