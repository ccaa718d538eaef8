//! Bounded revised simplex with an explicit dense basis inverse.
//!
//! Columns are the structural variables, one slack per inequality row and one
//! artificial per row. Slack and artificial columns are signed unit vectors
//! and are never stored. The basis inverse is kept row-major and updated with
//! product-form pivots; refactorization only inverts the block of the basis
//! formed by structural columns.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Basis, LpError, LpSolution, LpStatus, StandardLp, PIVOT_TOL, TOL_FEAS};

/// Minimum number of basis updates between refactorizations; large bases
/// refactor every `m / 2` updates, since the refactor cost grows cubically.
const REFACTOR_EVERY: usize = 64;
/// Bases up to this size keep their inverse in snapshots.
const SNAPSHOT_BINV_MAX_ROWS: usize = 4000;
const DUAL_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Free variable held nonbasic at zero.
    AtZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

#[derive(Debug, Clone)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Unbounded(DVector<f64>),
}

/// Basis snapshot used to warm start a related problem.
#[derive(Debug, Clone)]
pub(crate) struct Snapshot {
    head: Vec<usize>,
    state: Vec<VarState>,
    art_sign: Vec<f64>,
    /// Basis inverse and its update count, shared between sibling nodes.
    binv: Option<(Arc<Vec<f64>>, usize)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Engine {
    m: usize,
    n: usize,
    m_ub: usize,
    /// Structural columns, column-major (m × n).
    a: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    art_sign: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    /// Basis inverse, row-major (m × m); row p belongs to basis position p.
    binv: Vec<f64>,
    updates: usize,
    bland: bool,
    iterations: usize,
    iter_cap: usize,
}

impl Engine {
    pub fn new(lp: &StandardLp) -> Result<Self, LpError> {
        lp.validate()?;
        let n = lp.num_vars();
        let m_ub = lp.num_ub();
        let m = m_ub + lp.num_eq();
        let mut a = vec![0.0; m * n];
        for j in 0..n {
            for i in 0..m_ub {
                a[j * m + i] = lp.a_ub[(i, j)];
            }
            for i in 0..lp.num_eq() {
                a[j * m + m_ub + i] = lp.a_eq[(i, j)];
            }
        }
        let ncols = n + m_ub + m;
        let mut cost = vec![0.0; ncols];
        let mut lb = vec![0.0; ncols];
        let mut ub = vec![f64::INFINITY; ncols];
        for j in 0..n {
            cost[j] = lp.c[j];
            lb[j] = lp.lb[j];
            ub[j] = lp.ub[j];
        }
        let rhs: Vec<f64> = lp.b_ub.iter().chain(lp.b_eq.iter()).copied().collect();
        Ok(Engine {
            m,
            n,
            m_ub,
            a,
            rhs,
            cost,
            lb,
            ub,
            art_sign: vec![1.0; m],
            head: Vec::new(),
            pos: vec![usize::MAX; ncols],
            state: vec![VarState::AtLower; ncols],
            x: vec![0.0; ncols],
            binv: Vec::new(),
            updates: 0,
            bland: false,
            iterations: 0,
            iter_cap: 50 * (m + ncols) + 5000,
        })
    }

    fn ncols(&self) -> usize {
        self.n + self.m_ub + self.m
    }

    fn kind(&self, j: usize) -> ColKind {
        if j < self.n {
            ColKind::Structural
        } else if j < self.n + self.m_ub {
            ColKind::Slack
        } else {
            ColKind::Artificial
        }
    }

    /// Row and sign of a unit column.
    fn unit(&self, j: usize) -> Option<(usize, f64)> {
        match self.kind(j) {
            ColKind::Structural => None,
            ColKind::Slack => Some((j - self.n, 1.0)),
            ColKind::Artificial => {
                let i = j - self.n - self.m_ub;
                Some((i, self.art_sign[i]))
            }
        }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.a[j * self.m..(j + 1) * self.m]
    }

    fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        match self.unit(j) {
            Some((i, s)) => s * y[i],
            None => self.col(j).iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lb[j],
            VarState::AtUpper => self.ub[j],
            VarState::AtZero => 0.0,
            VarState::Basic => self.x[j],
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.ub[j] - self.lb[j] <= 0.0
    }

    pub fn set_bounds(&mut self, j: usize, lb: f64, ub: f64) {
        self.lb[j] = lb;
        self.ub[j] = ub;
        if self.state[j] != VarState::Basic {
            self.state[j] = self.default_state(j);
            self.x[j] = self.nonbasic_value(j);
        }
    }

    fn default_state(&self, j: usize) -> VarState {
        if self.lb[j].is_finite() {
            VarState::AtLower
        } else if self.ub[j].is_finite() {
            VarState::AtUpper
        } else {
            VarState::AtZero
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let binv = (self.m <= SNAPSHOT_BINV_MAX_ROWS && self.binv.len() == self.m * self.m).then(|| (Arc::new(self.binv.clone()), self.updates));
        Snapshot { head: self.head.clone(), state: self.state.clone(), art_sign: self.art_sign.clone(), binv }
    }

    // ----- factorization -------------------------------------------------

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut covered = vec![usize::MAX; m];
        let mut struct_pos = Vec::new();
        for (p, &j) in self.head.iter().enumerate() {
            match self.unit(j) {
                Some((i, _)) => {
                    if covered[i] != usize::MAX {
                        return Err(LpError::NumericalFailure("singular basis: repeated unit column".into()));
                    }
                    covered[i] = p;
                }
                None => struct_pos.push(p),
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&i| covered[i] == usize::MAX).collect();
        let k = struct_pos.len();
        if free_rows.len() != k {
            return Err(LpError::NumericalFailure("singular basis: shape".into()));
        }
        let mut binv = vec![0.0; m * m];
        let mut inv_block = DMatrix::<f64>::zeros(k, k);
        if k > 0 {
            let block = DMatrix::from_fn(k, k, |r, c| self.col(self.head[struct_pos[c]])[free_rows[r]]);
            let lu = block.full_piv_lu();
            let u = lu.u();
            let max_u = u.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let min_u = u.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
            if min_u <= 1e-11 * max_u.max(1.0) {
                return Err(LpError::NumericalFailure("singular basis".into()));
            }
            inv_block = lu.try_inverse().ok_or_else(|| LpError::NumericalFailure("singular basis".into()))?;
        }
        // Structural positions: rows of the inverted block over the free rows.
        for (l, &p) in struct_pos.iter().enumerate() {
            for (c, &i) in free_rows.iter().enumerate() {
                binv[p * m + i] = inv_block[(l, c)];
            }
        }
        // Unit positions: (e_i − A[i, J]·Binv[J, :]) / sign.
        for i in 0..m {
            let p = covered[i];
            if p == usize::MAX {
                continue;
            }
            let (_, s) = self.unit(self.head[p]).expect("unit column");
            let mut row = vec![0.0; m];
            row[i] = 1.0;
            for (l, &q) in struct_pos.iter().enumerate() {
                let aij = self.col(self.head[q])[i];
                if aij != 0.0 {
                    for (c, &fr) in free_rows.iter().enumerate() {
                        row[fr] -= aij * inv_block[(l, c)];
                    }
                }
            }
            for c in 0..m {
                binv[p * m + c] = row[c] / s;
            }
        }
        self.binv = binv;
        self.updates = 0;
        Ok(())
    }

    /// Recomputes basic values from the nonbasic ones.
    fn compute_xb(&mut self) {
        let m = self.m;
        let mut r = self.rhs.clone();
        for j in 0..self.ncols() {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v == 0.0 {
                continue;
            }
            match self.unit(j) {
                Some((i, s)) => r[i] -= s * v,
                None => {
                    for (ri, a) in r.iter_mut().zip(self.col(j)) {
                        *ri -= a * v;
                    }
                }
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            self.x[self.head[p]] = row.iter().zip(&r).map(|(a, b)| a * b).sum();
        }
    }

    /// `B⁻¹·a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        match self.unit(j) {
            Some((i, s)) => (0..m).map(|p| s * self.binv[p * m + i]).collect(),
            None => {
                let a = self.col(j);
                (0..m).map(|p| self.binv[p * m..(p + 1) * m].iter().zip(a).map(|(u, v)| u * v).sum()).collect()
            }
        }
    }

    /// Simplex multipliers `yᵀ = c_Bᵀ·B⁻¹` for the given cost vector.
    fn btran_cost(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let cb = cost[self.head[p]];
            if cb != 0.0 {
                for (yi, b) in y.iter_mut().zip(&self.binv[p * m..(p + 1) * m]) {
                    *yi += cb * b;
                }
            }
        }
        y
    }

    fn pivot(&mut self, r: usize, q: usize, w: &[f64]) -> Result<(), LpError> {
        let m = self.m;
        let wr = w[r];
        if wr.abs() < 1e-12 {
            return Err(LpError::NumericalFailure("pivot element vanished".into()));
        }
        let leaving = self.head[r];
        {
            let (before, rest) = self.binv.split_at_mut(r * m);
            let (row_r, after) = rest.split_at_mut(m);
            for v in row_r.iter_mut() {
                *v /= wr;
            }
            for (p, chunk) in before.chunks_mut(m).enumerate() {
                let f = w[p];
                if f != 0.0 {
                    for (a, b) in chunk.iter_mut().zip(row_r.iter()) {
                        *a -= f * b;
                    }
                }
            }
            for (off, chunk) in after.chunks_mut(m).enumerate() {
                let f = w[r + 1 + off];
                if f != 0.0 {
                    for (a, b) in chunk.iter_mut().zip(row_r.iter()) {
                        *a -= f * b;
                    }
                }
            }
        }
        self.head[r] = q;
        self.pos[q] = r;
        self.pos[leaving] = usize::MAX;
        self.state[q] = VarState::Basic;
        self.updates += 1;
        if self.updates >= REFACTOR_EVERY.max(self.m / 2) {
            self.refactor()?;
            self.compute_xb();
        }
        Ok(())
    }

    // ----- cold start -----------------------------------------------------

    pub fn solve_cold(&mut self) -> Result<Outcome, LpError> {
        let (m, n, m_ub) = (self.m, self.n, self.m_ub);
        self.bland = false;
        self.iterations = 0;
        for j in 0..n {
            self.state[j] = self.default_state(j);
            self.x[j] = self.nonbasic_value(j);
            self.pos[j] = usize::MAX;
        }
        let mut r = self.rhs.clone();
        for j in 0..n {
            let v = self.x[j];
            if v != 0.0 {
                for (ri, a) in r.iter_mut().zip(self.col(j)) {
                    *ri -= a * v;
                }
            }
        }
        self.head = vec![0; m];
        for i in 0..m {
            let slack = n + i;
            let art = n + m_ub + i;
            if i < m_ub {
                self.lb[slack] = 0.0;
                self.ub[slack] = f64::INFINITY;
            }
            if i < m_ub && r[i] >= 0.0 {
                self.head[i] = slack;
                self.state[slack] = VarState::Basic;
                self.pos[slack] = i;
                self.x[slack] = r[i];
                self.art_sign[i] = 1.0;
                self.lb[art] = 0.0;
                self.ub[art] = 0.0;
                self.state[art] = VarState::AtLower;
                self.pos[art] = usize::MAX;
                self.x[art] = 0.0;
            } else {
                if i < m_ub {
                    self.state[slack] = VarState::AtLower;
                    self.pos[slack] = usize::MAX;
                    self.x[slack] = 0.0;
                }
                self.art_sign[i] = if r[i] >= 0.0 { 1.0 } else { -1.0 };
                self.lb[art] = 0.0;
                self.ub[art] = f64::INFINITY;
                self.head[i] = art;
                self.state[art] = VarState::Basic;
                self.pos[art] = i;
                self.x[art] = r[i].abs();
            }
        }
        self.refactor()?;
        self.compute_xb();

        let needs_phase1 = (0..m).any(|i| self.head[i] >= n + m_ub);
        if needs_phase1 {
            let mut phase1 = vec![0.0; self.ncols()];
            for i in 0..m {
                if self.ub[n + m_ub + i] > 0.0 {
                    phase1[n + m_ub + i] = 1.0;
                }
            }
            match self.primal(&phase1)? {
                Outcome::Optimal => {}
                _ => return Err(LpError::NumericalFailure("phase 1 unbounded".into())),
            }
            let infeas: f64 = (0..m).map(|i| self.x[n + m_ub + i].max(0.0)).sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeas > TOL_FEAS * scale {
                return Ok(Outcome::Infeasible);
            }
            self.drive_out_artificials()?;
            for i in 0..m {
                let art = n + m_ub + i;
                self.lb[art] = 0.0;
                self.ub[art] = 0.0;
                if self.state[art] != VarState::Basic {
                    self.state[art] = VarState::AtLower;
                }
            }
            self.refactor()?;
            self.compute_xb();
        }
        self.bland = false;
        let cost = self.cost.clone();
        let outcome = self.primal(&cost)?;
        if let Outcome::Optimal = outcome {
            self.complete_free_columns()?;
        }
        Ok(outcome)
    }

    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let (m, n, m_ub) = (self.m, self.n, self.m_ub);
        for r in 0..m {
            let j = self.head[r];
            if j < n + m_ub {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for q in 0..n + m_ub {
                if self.state[q] == VarState::Basic || self.is_fixed(q) {
                    continue;
                }
                let alpha = self.dot_col(q, &row).abs();
                if alpha > 1e-7 && best.is_none_or(|(_, b)| alpha > b) {
                    best = Some((q, alpha));
                }
            }
            if let Some((q, _)) = best {
                let w = self.ftran(q);
                let art = self.head[r];
                self.x[q] = self.nonbasic_value(q);
                self.state[art] = VarState::AtLower;
                self.x[art] = 0.0;
                self.pivot(r, q, &w)?;
            }
        }
        Ok(())
    }

    /// Moves free nonbasic structurals into the basis along zero-cost directions.
    fn complete_free_columns(&mut self) -> Result<(), LpError> {
        for q in 0..self.n {
            if self.state[q] != VarState::AtZero {
                continue;
            }
            let w = self.ftran(q);
            for dir in [1.0, -1.0] {
                if let Some((r, t)) = self.ratio_exact(&w, dir) {
                    self.apply_step(q, dir, t, &w);
                    let leaving = self.head[r];
                    self.set_leaving_state(leaving, -dir * w[r]);
                    self.pivot(r, q, &w)?;
                    break;
                }
            }
        }
        Ok(())
    }

    // ----- primal simplex ------------------------------------------------

    fn primal(&mut self, cost: &[f64]) -> Result<Outcome, LpError> {
        let mut degenerate = 0usize;
        let bland_after = 3 * (self.m + self.ncols());
        loop {
            self.bump()?;
            let y = self.btran_cost(cost);
            let Some((q, dir)) = self.choose_entering(cost, &y) else {
                return Ok(Outcome::Optimal);
            };
            let w = self.ftran(q);
            let own_range = self.ub[q] - self.lb[q];
            let leave = if self.bland { self.ratio_exact(&w, dir) } else { self.ratio_harris(&w, dir) };
            match leave {
                None if !own_range.is_finite() => {
                    let mut ray = DVector::zeros(self.n);
                    for p in 0..self.m {
                        let j = self.head[p];
                        if j < self.n {
                            ray[j] = -dir * w[p];
                        }
                    }
                    if q < self.n {
                        ray[q] = dir;
                    }
                    return Ok(Outcome::Unbounded(ray));
                }
                Some((_, t)) if own_range.is_finite() && own_range <= t => {
                    self.bound_flip(q, dir, own_range, &w);
                    degenerate = 0;
                }
                None => {
                    self.bound_flip(q, dir, own_range, &w);
                    degenerate = 0;
                }
                Some((r, t)) => {
                    self.apply_step(q, dir, t, &w);
                    let leaving = self.head[r];
                    self.set_leaving_state(leaving, -dir * w[r]);
                    self.pivot(r, q, &w)?;
                    if t <= 1e-12 {
                        degenerate += 1;
                        if degenerate > bland_after {
                            self.bland = true;
                        }
                    } else {
                        degenerate = 0;
                    }
                }
            }
        }
    }

    fn bump(&mut self) -> Result<(), LpError> {
        self.iterations += 1;
        if self.iterations > self.iter_cap {
            return Err(LpError::NumericalFailure(format!("iteration cap {} exceeded", self.iter_cap)));
        }
        Ok(())
    }

    fn choose_entering(&self, cost: &[f64], y: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols() {
            let st = self.state[j];
            if st == VarState::Basic || self.is_fixed(j) {
                continue;
            }
            let d = cost[j] - self.dot_col(j, y);
            let (score, dir) = match st {
                VarState::AtLower if d < -DUAL_TOL => (-d, 1.0),
                VarState::AtUpper if d > DUAL_TOL => (d, -1.0),
                VarState::AtZero if d.abs() > DUAL_TOL => (d.abs(), -d.signum()),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((j, score, dir));
            }
        }
        best.map(|(j, _, dir)| (j, dir))
    }

    /// Textbook minimum ratio, ties broken by smallest variable index.
    fn ratio_exact(&self, w: &[f64], dir: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for p in 0..self.m {
            let j = self.head[p];
            let delta = -dir * w[p];
            let ratio = if delta < -PIVOT_TOL && self.lb[j].is_finite() {
                ((self.x[j] - self.lb[j]) / -delta).max(0.0)
            } else if delta > PIVOT_TOL && self.ub[j].is_finite() {
                ((self.ub[j] - self.x[j]) / delta).max(0.0)
            } else {
                continue;
            };
            let better = match best {
                None => true,
                Some((bp, bt)) => ratio < bt - 1e-12 || (ratio <= bt + 1e-12 && j < self.head[bp]),
            };
            if better {
                best = Some((p, ratio));
            }
        }
        best
    }

    /// Two-pass Harris ratio test preferring large pivots.
    fn ratio_harris(&self, w: &[f64], dir: f64) -> Option<(usize, f64)> {
        let mut t_max = f64::INFINITY;
        for p in 0..self.m {
            let j = self.head[p];
            let delta = -dir * w[p];
            if delta < -PIVOT_TOL && self.lb[j].is_finite() {
                t_max = t_max.min((self.x[j] - self.lb[j] + PRIMAL_TOL) / -delta);
            } else if delta > PIVOT_TOL && self.ub[j].is_finite() {
                t_max = t_max.min((self.ub[j] - self.x[j] + PRIMAL_TOL) / delta);
            }
        }
        if !t_max.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for p in 0..self.m {
            let j = self.head[p];
            let delta = -dir * w[p];
            let ratio = if delta < -PIVOT_TOL && self.lb[j].is_finite() {
                (self.x[j] - self.lb[j]) / -delta
            } else if delta > PIVOT_TOL && self.ub[j].is_finite() {
                (self.ub[j] - self.x[j]) / delta
            } else {
                continue;
            };
            if ratio <= t_max && best.is_none_or(|(_, _, mag)| delta.abs() > mag) {
                best = Some((p, ratio.max(0.0), delta.abs()));
            }
        }
        best.map(|(p, t, _)| (p, t))
    }

    fn apply_step(&mut self, q: usize, dir: f64, t: f64, w: &[f64]) {
        if t != 0.0 {
            for p in 0..self.m {
                let j = self.head[p];
                self.x[j] -= dir * t * w[p];
            }
        }
        self.x[q] = self.nonbasic_value(q) + dir * t;
    }

    fn bound_flip(&mut self, q: usize, dir: f64, range: f64, w: &[f64]) {
        self.apply_step(q, dir, range, w);
        self.state[q] = if dir > 0.0 { VarState::AtUpper } else { VarState::AtLower };
        self.x[q] = self.nonbasic_value(q);
    }

    /// Leaving variable moves to the bound it was heading toward.
    fn set_leaving_state(&mut self, j: usize, delta: f64) {
        let st = if self.lb[j] == self.ub[j] {
            VarState::AtLower
        } else if delta < 0.0 {
            if self.lb[j].is_finite() {
                VarState::AtLower
            } else {
                VarState::AtUpper
            }
        } else if self.ub[j].is_finite() {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
        self.state[j] = if !self.lb[j].is_finite() && !self.ub[j].is_finite() { VarState::AtZero } else { st };
        self.x[j] = self.nonbasic_value(j);
    }

    // ----- dual simplex (warm starts) --------------------------------------

    /// Re-solves after bound changes starting from a prior optimal basis.
    pub fn solve_warm(&mut self, snap: &Snapshot) -> Result<Outcome, LpError> {
        self.iterations = 0;
        self.head = snap.head.clone();
        self.art_sign = snap.art_sign.clone();
        for j in 0..self.ncols() {
            self.pos[j] = usize::MAX;
            self.state[j] = snap.state[j];
            if self.state[j] != VarState::Basic {
                // Bounds may have moved underneath a nonbasic variable.
                let ok = match self.state[j] {
                    VarState::AtLower => self.lb[j].is_finite(),
                    VarState::AtUpper => self.ub[j].is_finite(),
                    VarState::AtZero => !self.lb[j].is_finite() && !self.ub[j].is_finite(),
                    VarState::Basic => true,
                };
                if !ok {
                    self.state[j] = self.default_state(j);
                }
            }
        }
        for (p, &j) in self.head.iter().enumerate() {
            self.pos[j] = p;
        }
        self.bland = false;
        match &snap.binv {
            Some((binv, updates)) => {
                self.binv.clone_from(binv);
                self.updates = *updates;
            }
            None => self.refactor()?,
        }
        self.compute_xb();
        let cost = self.cost.clone();
        match self.dual(&cost)? {
            Outcome::Optimal => {}
            other => return Ok(other),
        }
        let outcome = self.primal(&cost)?;
        if let Outcome::Optimal = outcome {
            self.complete_free_columns()?;
        }
        Ok(outcome)
    }

    fn dual(&mut self, cost: &[f64]) -> Result<Outcome, LpError> {
        let m = self.m;
        let mut stalled = 0usize;
        let bland_after = 3 * (self.m + self.ncols());
        loop {
            self.bump()?;
            // Leaving row: largest bound violation.
            let mut leave: Option<(usize, f64)> = None;
            for p in 0..m {
                let j = self.head[p];
                let v = if self.x[j] < self.lb[j] - PRIMAL_TOL {
                    self.lb[j] - self.x[j]
                } else if self.x[j] > self.ub[j] + PRIMAL_TOL {
                    self.x[j] - self.ub[j]
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((bp, bv)) => {
                        if self.bland {
                            j < self.head[bp]
                        } else {
                            v > bv
                        }
                    }
                };
                if better {
                    leave = Some((p, v));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(Outcome::Optimal);
            };
            let jr = self.head[r];
            let below = self.x[jr] < self.lb[jr];
            let target = if below { self.lb[jr] } else { self.ub[jr] };
            let y = self.btran_cost(cost);
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..self.ncols() {
                let st = self.state[j];
                if st == VarState::Basic || self.is_fixed(j) {
                    continue;
                }
                let alpha = self.dot_col(j, &rho);
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let eligible = match st {
                    VarState::AtLower => (below && alpha < 0.0) || (!below && alpha > 0.0),
                    VarState::AtUpper => (below && alpha > 0.0) || (!below && alpha < 0.0),
                    VarState::AtZero => true,
                    VarState::Basic => false,
                };
                if !eligible {
                    continue;
                }
                let d = cost[j] - self.dot_col(j, &y);
                let ratio = (d / alpha).abs();
                let better = match best {
                    None => true,
                    Some((bj, bt, ba)) => {
                        if self.bland {
                            ratio < bt - 1e-12 || (ratio <= bt + 1e-12 && j < bj)
                        } else {
                            ratio < bt - DUAL_TOL || (ratio <= bt + DUAL_TOL && alpha.abs() > ba)
                        }
                    }
                };
                if better {
                    best = Some((j, ratio, alpha.abs()));
                }
            }
            let Some((q, ratio, _)) = best else {
                return Ok(Outcome::Infeasible);
            };
            let w = self.ftran(q);
            let delta = (self.x[jr] - target) / w[r];
            for p in 0..m {
                let j = self.head[p];
                self.x[j] -= w[p] * delta;
            }
            self.x[q] = self.nonbasic_value(q) + delta;
            self.state[jr] = if below { VarState::AtLower } else { VarState::AtUpper };
            self.pivot(r, q, &w)?;
            self.x[jr] = target;
            if ratio <= 1e-12 {
                stalled += 1;
                if stalled > bland_after {
                    self.bland = true;
                }
            } else {
                stalled = 0;
            }
        }
    }

    // ----- results -------------------------------------------------------

    pub fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    pub fn structural_values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn extract(&self, lp: &StandardLp, outcome: Outcome) -> LpSolution {
        let (m, n, m_ub) = (self.m, self.n, self.m_ub);
        match outcome {
            Outcome::Infeasible => return LpSolution::non_optimal(LpStatus::Infeasible, lp, None, self.iterations),
            Outcome::Unbounded(ray) => return LpSolution::non_optimal(LpStatus::Unbounded, lp, Some(ray), self.iterations),
            Outcome::Optimal => {}
        }
        let y = self.btran_cost(&self.cost);
        let x = DVector::from_column_slice(&self.x[..n]);
        let dual_ub = DVector::from_iterator(m_ub, y[..m_ub].iter().map(|v| -v));
        let dual_eq = DVector::from_iterator(m - m_ub, y[m_ub..].iter().map(|v| -v));
        let reduced = DVector::from_iterator(n, (0..n).map(|j| {
            if self.state[j] == VarState::Basic {
                0.0
            } else {
                self.cost[j] - self.dot_col(j, &y)
            }
        }));
        let mut active_set = Vec::new();
        for i in 0..m_ub {
            let slack = lp.b_ub[i] - (0..n).map(|j| lp.a_ub[(i, j)] * x[j]).sum::<f64>();
            if slack <= TOL_FEAS * (1.0 + lp.b_ub[i].abs()) {
                active_set.push(i);
            }
        }
        active_set.extend(m_ub..m);
        let basis = Basis {
            nonbasic_rows: (0..m_ub).filter(|&i| self.state[n + i] != VarState::Basic).collect(),
            nonbasic_cols: (0..n).filter(|&j| self.state[j] != VarState::Basic).collect(),
        };
        LpSolution {
            status: LpStatus::Optimal,
            objective: (0..n).map(|j| lp.c[j] * x[j]).sum(),
            x,
            dual_ub,
            dual_eq,
            reduced,
            active_set,
            basis: Some(basis),
            ray: None,
            iterations: self.iterations,
        }
    }
}
