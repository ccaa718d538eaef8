use super::{LpSolution, LpStatus, StandardLp};

/// Worst-case residuals of the KKT system for an optimal LP solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// Largest violation of rows or bounds.
    pub primal: f64,
    /// `‖c + A_ubᵀu + A_eqᵀv − r‖∞`.
    pub stationarity: f64,
    /// Largest negative inequality multiplier or wrong-signed bound multiplier.
    pub dual_sign: f64,
    /// Largest `|u_i·slack_i|` or `|r_j·distance to bound|`.
    pub complementarity: f64,
    /// `|cᵀx − (−b_ubᵀu − b_eqᵀv + Σ r_j·x_j)|`.
    pub duality_gap: f64,
}

impl KktReport {
    pub fn within(&self, tol: f64) -> bool {
        self.primal <= tol && self.stationarity <= tol && self.dual_sign <= tol && self.complementarity <= tol
    }

    pub fn worst(&self) -> f64 {
        self.primal.max(self.stationarity).max(self.dual_sign).max(self.complementarity)
    }
}

pub(super) fn report(lp: &StandardLp, sol: &LpSolution) -> KktReport {
    if sol.status != LpStatus::Optimal {
        return KktReport { primal: f64::INFINITY, ..Default::default() };
    }
    let x = &sol.x;
    let mut out = KktReport::default();
    let ax_ub = &lp.a_ub * x;
    for i in 0..lp.num_ub() {
        let slack = lp.b_ub[i] - ax_ub[i];
        out.primal = out.primal.max(-slack);
        out.dual_sign = out.dual_sign.max(-sol.dual_ub[i]);
        out.complementarity = out.complementarity.max((sol.dual_ub[i] * slack).abs());
    }
    let ax_eq = &lp.a_eq * x;
    for i in 0..lp.num_eq() {
        out.primal = out.primal.max((ax_eq[i] - lp.b_eq[i]).abs());
    }
    let mut bound_term = 0.0;
    for j in 0..lp.num_vars() {
        out.primal = out.primal.max(lp.lb[j] - x[j]).max(x[j] - lp.ub[j]);
        let r = sol.reduced[j];
        let to_lb = if lp.lb[j].is_finite() { x[j] - lp.lb[j] } else { f64::INFINITY };
        let to_ub = if lp.ub[j].is_finite() { lp.ub[j] - x[j] } else { f64::INFINITY };
        if r > 0.0 {
            out.complementarity = out.complementarity.max(if to_lb.is_finite() { (r * to_lb).abs() } else { r });
        } else if r < 0.0 {
            out.complementarity = out.complementarity.max(if to_ub.is_finite() { (r * to_ub).abs() } else { -r });
        }
        bound_term += r * x[j];
    }
    let grad = &lp.c + lp.a_ub.transpose() * &sol.dual_ub + lp.a_eq.transpose() * &sol.dual_eq - &sol.reduced;
    out.stationarity = grad.amax();
    let dual_obj = -lp.b_ub.dot(&sol.dual_ub) - lp.b_eq.dot(&sol.dual_eq) + bound_term;
    out.duality_gap = (sol.objective - dual_obj).abs();
    out
}
