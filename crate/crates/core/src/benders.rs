//! Benders decomposition driver with pluggable subproblem oracles.
//!
//! Each iteration solves the master (first-stage problem plus cuts) to
//! optimality, evaluates every subproblem at the master's copy values,
//! tightens the bounds and adds one optimality cut per subproblem
//! (multi-cut) or one probability-weighted cut (single-cut).

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{BendersPartition, GraphError, ModelGraph};
use crate::lp::{LpStatus, StandardLp};
use crate::milp::{solve_milp, MilpError, MilpSolution, MixedBinaryLp};
use crate::mplp::{embed_subproblem, MpError, MpSolution, ThetaLayout};
use crate::subproblem::ScenarioSubproblemSpec;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_ALPHA_LOWER_BOUND: f64 = -1e9;
/// A cut is added only if the master underestimates the subproblem value by
/// more than this, relative to `max(1, |value|)`.
const CUT_VIOLATION_TOL: f64 = 1e-9;
/// Cuts within this relative slack of binding stay in the next master.
const BINDING_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum BendersError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("master problem is infeasible")]
    MasterInfeasible,
    #[error("master problem is unbounded; raise alpha_lower_bound")]
    MasterUnbounded,
    #[error("subproblem {sub} failed at theta {theta:?}: {message}")]
    OracleFailure { sub: usize, theta: Vec<f64>, message: String },
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Mp(#[from] MpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutMode {
    MultiCut,
    SingleCut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Exact,
    MpSurrogate,
    MpWithExactFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendersConfig {
    pub cut_mode: CutMode,
    pub oracle_mode: OracleMode,
    pub tol: f64,
    pub max_iter: usize,
    pub alpha_lower_bound: f64,
    /// Scenario probabilities; empty means the graph's own.
    pub probabilities: Vec<f64>,
}

impl Default for BendersConfig {
    fn default() -> Self {
        BendersConfig {
            cut_mode: CutMode::MultiCut,
            oracle_mode: OracleMode::Exact,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            alpha_lower_bound: DEFAULT_ALPHA_LOWER_BOUND,
            probabilities: Vec::new(),
        }
    }
}

impl BendersConfig {
    pub fn validate(&self) -> Result<(), BendersError> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(BendersError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(BendersError::Config("max_iter must be at least 1".into()));
        }
        if !self.alpha_lower_bound.is_finite() {
            return Err(BendersError::Config("alpha_lower_bound must be finite".into()));
        }
        if !self.probabilities.is_empty() {
            check_probabilities(&self.probabilities)?;
        }
        Ok(())
    }
}

fn check_probabilities(p: &[f64]) -> Result<(), BendersError> {
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(BendersError::Config("probabilities must lie in [0, 1]".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(BendersError::Config(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutScope {
    Sub(usize),
    Aggregate,
}

/// Optimality cut `α ≥ intercept + coeffsᵀ(x − anchor)` over the master columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub scope: CutScope,
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    pub anchor: Vec<f64>,
    pub iteration: usize,
}

impl Cut {
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.intercept + self.coeffs.iter().zip(x).zip(&self.anchor).map(|((c, x), a)| c * (x - a)).sum::<f64>()
    }
}

/// Value and subgradient of one subproblem at fixed copy values.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// Derivative of `value` with respect to each copy variable.
    pub subgradient: Vec<f64>,
    pub region: Option<usize>,
    /// Parameter vector the evaluation used; the copy values for exact solves.
    pub theta: Vec<f64>,
}

pub trait SubproblemOracle: Sync {
    fn evaluate(&self, sub: usize, z: &[f64]) -> Result<Evaluation, BendersError>;
}

/// Solves each subproblem LP with its copy variables fixed.
pub struct ExactOracle<'a> {
    specs: &'a [ScenarioSubproblemSpec],
    lps: Vec<StandardLp>,
}

impl<'a> ExactOracle<'a> {
    pub fn new(specs: &'a [ScenarioSubproblemSpec]) -> Self {
        ExactOracle { specs, lps: specs.iter().map(|s| s.to_lp()).collect() }
    }
}

impl SubproblemOracle for ExactOracle<'_> {
    fn evaluate(&self, sub: usize, z: &[f64]) -> Result<Evaluation, BendersError> {
        let fail = |message: String| BendersError::OracleFailure { sub, theta: z.to_vec(), message };
        let sol = self.specs[sub].solve_lp_at(&self.lps[sub], z).map_err(|e| fail(e.to_string()))?;
        if sol.solution.status != LpStatus::Optimal {
            return Err(fail(format!("subproblem LP is {:?}", sol.solution.status)));
        }
        Ok(Evaluation { value: sol.solution.objective, subgradient: sol.sensitivities(), region: None, theta: z.to_vec() })
    }
}

/// Looks subproblems up in an explicit mp-LP solution shared by all of them.
pub struct MpOracle<'a> {
    sol: &'a MpSolution,
    layout: ThetaLayout,
    specs: &'a [ScenarioSubproblemSpec],
    fallback: Option<ExactOracle<'a>>,
}

impl<'a> MpOracle<'a> {
    /// Fails unless every subproblem embeds to exactly the problem `sol` solves.
    pub fn new(sol: &'a MpSolution, specs: &'a [ScenarioSubproblemSpec], fallback: bool) -> Result<Self, BendersError> {
        let mut layout = None;
        for (w, spec) in specs.iter().enumerate() {
            let (mp, l) = embed_subproblem(spec)?;
            if mp != sol.problem {
                return Err(BendersError::Config(format!("subproblem {w} ({}) does not match the mp solution's problem", spec.name)));
            }
            layout.get_or_insert(l);
        }
        let layout = match layout {
            Some(l) => l,
            None => ThetaLayout { master_idx: Vec::new(), cost_idx: Vec::new(), rhs_idx: Vec::new() },
        };
        Ok(MpOracle { sol, layout, specs, fallback: fallback.then(|| ExactOracle::new(specs)) })
    }

    pub fn layout(&self) -> &ThetaLayout {
        &self.layout
    }
}

impl SubproblemOracle for MpOracle<'_> {
    fn evaluate(&self, sub: usize, z: &[f64]) -> Result<Evaluation, BendersError> {
        let theta = self.layout.theta(&self.specs[sub], z);
        match self.sol.locate_region(&theta) {
            Ok(r) => {
                let region = &self.sol.regions[r];
                Ok(Evaluation {
                    value: region.evaluate_value(&self.sol.problem, &theta),
                    subgradient: region.subgradient_wrt_master(&self.sol.problem, &self.layout, &theta),
                    region: Some(r),
                    theta,
                })
            }
            Err(MpError::NoRegionFound { .. }) if self.fallback.is_some() => {
                log::debug!("subproblem {sub}: no region at theta, solving exactly");
                let mut ev = self.fallback.as_ref().unwrap().evaluate(sub, z)?;
                ev.theta = theta;
                Ok(ev)
            }
            Err(e) => Err(BendersError::OracleFailure { sub, theta, message: e.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "LB")]
    pub lb: f64,
    #[serde(rename = "UB")]
    pub ub: f64,
    pub rel_gap: f64,
    pub master_time_s: f64,
    pub sub_time_s: f64,
    pub cuts_added: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub sub: usize,
    pub scenario: usize,
    pub period: usize,
    pub region: Option<usize>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BendersState {
    pub iteration: usize,
    pub lb: f64,
    pub ub: f64,
    /// Master solution attaining `ub`, over the master columns.
    pub incumbent: Vec<f64>,
    /// Subproblem values at the incumbent.
    pub sub_values: Vec<f64>,
    pub cuts: Vec<Cut>,
    pub log: Vec<IterationRecord>,
    pub trajectory: Vec<TrajectoryRow>,
    pub converged: bool,
    /// Oracle evaluations made and the summed time spent inside them.
    pub evaluations: usize,
    pub eval_time_s: f64,
}

impl BendersState {
    pub fn rel_gap(&self) -> f64 {
        rel_gap(self.lb, self.ub)
    }
}

pub fn rel_gap(lb: f64, ub: f64) -> f64 {
    if ub == f64::INFINITY {
        return f64::INFINITY;
    }
    (ub - lb) / ub.abs().max(1.0)
}

/// Master problem over `[x_m; α]` with every cut as a row
/// `coeffsᵀx − α ≤ coeffsᵀanchor − intercept`.
pub fn build_master_with_cuts(part: &BendersPartition, weights: &[f64], cuts: &[Cut], cfg: &BendersConfig) -> MixedBinaryLp {
    let base = &part.master.base;
    let nm = base.num_vars();
    let n_alpha = match cfg.cut_mode {
        CutMode::MultiCut => part.subproblems.len(),
        CutMode::SingleCut => usize::from(!part.subproblems.is_empty()),
    };
    let n = nm + n_alpha;
    let mut lp = StandardLp::new(n);
    lp.c.rows_mut(0, nm).copy_from(&base.c);
    lp.lb.rows_mut(0, nm).copy_from(&base.lb);
    lp.ub.rows_mut(0, nm).copy_from(&base.ub);
    for a in 0..n_alpha {
        lp.c[nm + a] = match cfg.cut_mode {
            CutMode::MultiCut => weights[a],
            CutMode::SingleCut => 1.0,
        };
        lp.lb[nm + a] = cfg.alpha_lower_bound;
    }
    let m0 = base.num_ub();
    let mut a_ub = DMatrix::zeros(m0 + cuts.len(), n);
    a_ub.view_mut((0, 0), (m0, nm)).copy_from(&base.a_ub);
    let mut b_ub = DVector::zeros(m0 + cuts.len());
    b_ub.rows_mut(0, m0).copy_from(&base.b_ub);
    for (i, cut) in cuts.iter().enumerate() {
        let row = m0 + i;
        for (j, &c) in cut.coeffs.iter().enumerate() {
            a_ub[(row, j)] = c;
        }
        let alpha = match cut.scope {
            CutScope::Sub(w) => w,
            CutScope::Aggregate => 0,
        };
        a_ub[(row, nm + alpha)] = -1.0;
        b_ub[row] = cut.coeffs.iter().zip(&cut.anchor).map(|(c, a)| c * a).sum::<f64>() - cut.intercept;
    }
    lp.a_ub = a_ub;
    lp.b_ub = b_ub;
    let me = base.num_eq();
    let mut a_eq = DMatrix::zeros(me, n);
    a_eq.view_mut((0, 0), (me, nm)).copy_from(&base.a_eq);
    lp.a_eq = a_eq;
    lp.b_eq = base.b_eq.clone();
    MixedBinaryLp::new(lp, part.master.binary_idx.clone())
}

/// Extracts the partition of `g` and runs with the oracle `cfg.oracle_mode`
/// asks for. The mp modes need `mp`.
pub fn solve(g: &ModelGraph, cfg: &BendersConfig, mp: Option<&MpSolution>) -> Result<BendersState, BendersError> {
    let part = g.extract_benders_partition()?;
    let probs = if cfg.probabilities.is_empty() { g.scenario_probabilities.clone() } else { cfg.probabilities.clone() };
    match cfg.oracle_mode {
        OracleMode::Exact => run_partition(&part, &probs, cfg, &ExactOracle::new(&part.subproblems)),
        mode => {
            let sol = mp.ok_or_else(|| BendersError::Config("the mp oracle needs an mp solution".into()))?;
            let oracle = MpOracle::new(sol, &part.subproblems, mode == OracleMode::MpWithExactFallback)?;
            run_partition(&part, &probs, cfg, &oracle)
        }
    }
}

/// Runs on the partition of `g` with the given oracle.
pub fn run(g: &ModelGraph, cfg: &BendersConfig, oracle: &dyn SubproblemOracle) -> Result<BendersState, BendersError> {
    let part = g.extract_benders_partition()?;
    let probs = if cfg.probabilities.is_empty() { g.scenario_probabilities.clone() } else { cfg.probabilities.clone() };
    run_partition(&part, &probs, cfg, oracle)
}

pub fn run_partition(
    part: &BendersPartition,
    probabilities: &[f64],
    cfg: &BendersConfig,
    oracle: &dyn SubproblemOracle,
) -> Result<BendersState, BendersError> {
    cfg.validate()?;
    if !probabilities.is_empty() {
        check_probabilities(probabilities)?;
    }
    if let Some(s) = part.scenario_tags.iter().flatten().find(|&&s| !probabilities.is_empty() && s >= probabilities.len()) {
        return Err(BendersError::Config(format!("no probability for scenario {s}")));
    }
    let weights = part.weights(probabilities);
    let nm = part.master.base.num_vars();
    let nsub = part.subproblems.len();
    let mut active: Vec<bool> = Vec::new();
    let mut state = BendersState {
        iteration: 0,
        lb: f64::NEG_INFINITY,
        ub: f64::INFINITY,
        incumbent: Vec::new(),
        sub_values: Vec::new(),
        cuts: Vec::new(),
        log: Vec::new(),
        trajectory: Vec::new(),
        converged: false,
        evaluations: 0,
        eval_time_s: 0.0,
    };

    loop {
        state.iteration += 1;
        let iter = state.iteration;

        let t0 = Instant::now();
        active.resize(state.cuts.len(), true);
        let sol = solve_master(part, &weights, &state.cuts, &mut active, cfg)?;
        let master_time = t0.elapsed().as_secs_f64();
        state.lb = state.lb.max(sol.objective);
        let x: Vec<f64> = sol.x.as_slice()[..nm].to_vec();
        let alpha: Vec<f64> = sol.x.as_slice()[nm..].to_vec();

        let t1 = Instant::now();
        let results: Vec<Result<(Evaluation, f64), BendersError>> = (0..nsub)
            .into_par_iter()
            .map(|w| {
                let z: Vec<f64> = part.coupling[w].iter().map(|&j| x[j]).collect();
                let t = Instant::now();
                let ev = oracle.evaluate(w, &z)?;
                Ok((ev, t.elapsed().as_secs_f64()))
            })
            .collect();
        let sub_time = t1.elapsed().as_secs_f64();
        let mut evals = Vec::with_capacity(nsub);
        for r in results {
            let (ev, dt) = r?;
            state.evaluations += 1;
            state.eval_time_s += dt;
            evals.push(ev);
        }

        let first_stage: f64 = part.master.base.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        let recourse: f64 = evals.iter().zip(&weights).map(|(e, w)| w * e.value).sum();
        if first_stage + recourse < state.ub {
            state.ub = first_stage + recourse;
            state.incumbent = x.clone();
            state.sub_values = evals.iter().map(|e| e.value).collect();
        }

        let cuts_added = add_cuts(part, &weights, cfg, &x, &alpha, &evals, iter, &mut state.cuts);
        for (w, ev) in evals.iter().enumerate() {
            let spec = &part.subproblems[w];
            state.trajectory.push(TrajectoryRow {
                iter,
                sub: w,
                scenario: spec.scenario,
                period: spec.period,
                region: ev.region,
                theta: ev.theta.clone(),
            });
        }
        // A master that rounds slightly above the true bound must not cross UB.
        state.lb = state.lb.min(state.ub);
        let gap = state.rel_gap();
        state.log.push(IterationRecord {
            iter,
            lb: state.lb,
            ub: state.ub,
            rel_gap: gap,
            master_time_s: master_time,
            sub_time_s: sub_time,
            cuts_added,
        });
        log::info!("iter {iter}: LB {:.9e} UB {:.9e} gap {gap:.3e} cuts {cuts_added}", state.lb, state.ub);

        if gap <= cfg.tol {
            state.converged = true;
            break;
        }
        if cuts_added == 0 {
            log::warn!("no violated cut at iteration {iter} with gap {gap:.3e}; stopping");
            break;
        }
        if iter >= cfg.max_iter {
            break;
        }
    }
    Ok(state)
}

/// Solves the master over every cut in the pool, enforcing only the
/// `active` ones and activating stored cuts the solution violates until none
/// is. On return `active` marks the cuts binding at the optimum.
fn solve_master(
    part: &BendersPartition,
    weights: &[f64],
    cuts: &[Cut],
    active: &mut [bool],
    cfg: &BendersConfig,
) -> Result<MilpSolution, BendersError> {
    let nm = part.master.base.num_vars();
    let alpha_of = |c: &Cut, x: &[f64]| match c.scope {
        CutScope::Sub(w) => x[nm + w],
        CutScope::Aggregate => x[nm],
    };
    loop {
        let enforced: Vec<Cut> = cuts.iter().zip(active.iter()).filter(|(_, &a)| a).map(|(c, _)| c.clone()).collect();
        let t = Instant::now();
        let sol = solve_milp(&build_master_with_cuts(part, weights, &enforced, cfg))?;
        log::debug!("master with {} of {} cuts: {} nodes in {:.3}s", enforced.len(), cuts.len(), sol.node_count, t.elapsed().as_secs_f64());
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(BendersError::MasterInfeasible),
            LpStatus::Unbounded => return Err(BendersError::MasterUnbounded),
        }
        let x = sol.x.as_slice();
        let mut added = false;
        for (c, a) in cuts.iter().zip(active.iter_mut()) {
            let v = c.value_at(&x[..nm]);
            let slack = alpha_of(c, x) - v;
            if !*a && slack < -CUT_VIOLATION_TOL * v.abs().max(1.0) {
                *a = true;
                added = true;
            }
        }
        if added {
            continue;
        }
        for (c, a) in cuts.iter().zip(active.iter_mut()) {
            let v = c.value_at(&x[..nm]);
            *a = alpha_of(c, x) - v <= BINDING_TOL * v.abs().max(1.0);
        }
        return Ok(sol);
    }
}

#[allow(clippy::too_many_arguments)]
fn add_cuts(
    part: &BendersPartition,
    weights: &[f64],
    cfg: &BendersConfig,
    x: &[f64],
    alpha: &[f64],
    evals: &[Evaluation],
    iteration: usize,
    cuts: &mut Vec<Cut>,
) -> usize {
    let nm = x.len();
    let violated = |alpha: f64, value: f64| alpha < value - CUT_VIOLATION_TOL * value.abs().max(1.0);
    let dense = |w: usize, ev: &Evaluation| {
        let mut coeffs = vec![0.0; nm];
        for (&j, &g) in part.coupling[w].iter().zip(&ev.subgradient) {
            coeffs[j] += g;
        }
        coeffs
    };
    match cfg.cut_mode {
        CutMode::MultiCut => {
            let before = cuts.len();
            for (w, ev) in evals.iter().enumerate() {
                if violated(alpha[w], ev.value) {
                    cuts.push(Cut { scope: CutScope::Sub(w), intercept: ev.value, coeffs: dense(w, ev), anchor: x.to_vec(), iteration });
                }
            }
            cuts.len() - before
        }
        CutMode::SingleCut => {
            if evals.is_empty() {
                return 0;
            }
            let mut coeffs = vec![0.0; nm];
            let mut intercept = 0.0;
            for (w, ev) in evals.iter().enumerate() {
                intercept += weights[w] * ev.value;
                for (c, d) in coeffs.iter_mut().zip(dense(w, ev)) {
                    *c += weights[w] * d;
                }
            }
            if !violated(alpha[0], intercept) {
                return 0;
            }
            cuts.push(Cut { scope: CutScope::Aggregate, intercept, coeffs, anchor: x.to_vec(), iteration });
            1
        }
    }
}

/// Writes the iteration log as comma-separated text.
pub fn write_iteration_log<W: Write>(log: &[IterationRecord], sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in log {
        w.serialize(r)?;
    }
    if log.is_empty() {
        w.write_record(["iter", "LB", "UB", "rel_gap", "master_time_s", "sub_time_s", "cuts_added"])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the trajectory as comma-separated text, one row per oracle
/// evaluation, followed by the parameter vector. Exact evaluations leave
/// `region_id` empty.
pub fn write_trajectory<W: Write>(rows: &[TrajectoryRow], sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let q = rows.iter().map(|r| r.theta.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["iter", "sub", "scenario", "period", "region_id"].iter().map(|s| s.to_string()).collect();
    header.extend((0..q).map(|i| format!("theta_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.iter.to_string(), r.sub.to_string(), r.scenario.to_string(), r.period.to_string()];
        rec.push(r.region.map(|v| v.to_string()).unwrap_or_default());
        rec.extend(r.theta.iter().map(|v| format!("{v:e}")));
        rec.resize(header.len(), String::new());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
