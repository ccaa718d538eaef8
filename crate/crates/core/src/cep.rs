//! Stochastic capacity-expansion planning for a three-process, three-chemical
//! plant.
//!
//! First stage, per period t and process p: expansion `x`, expansion
//! indicator `y` and cumulative capacity `q`. Second stage, per scenario k and
//! period t: production `p`, sales `b` and purchases `s`, with
//!
//! ```text
//! min  σᵀp + φᵀs − γᵀb
//! s.t. p ≤ q̄,  s ≤ A,  b ≤ D,  Σ_p (μ_jp − η_jp) p_p − b_j + s_j = 0,  p, b, s ≥ 0
//! ```
//!
//! Availabilities, demands and prices with a nonzero mean are sampled per
//! (k, t); quantities with zero mean are held at 0 through variable bounds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::{ModelGraph, Sense, VarRef, Variable};
use crate::subproblem::{ParamSlot, ScenarioSubproblemSpec};

pub const P: usize = 3;
pub const J: usize = 3;
/// Standard deviation of every sampled quantity, relative to its mean.
pub const REL_STD: f64 = 0.1;
/// Half-width of each parameter range, in standard deviations.
pub const THETA_SIGMAS: f64 = 5.0;

const ALPHA: [[f64; 4]; P] = [[1.38, 1.67, 2.22, 3.58], [2.72, 3.291, 4.381, 7.055], [1.76, 2.13, 2.834, 4.565]];
const BETA: [[f64; 4]; P] = [[85.0, 102.85, 136.89, 220.46], [73.0, 88.33, 117.56, 189.34], [110.0, 133.10, 177.15, 285.31]];
const SIGMA: [[f64; 4]; P] = [[0.40, 0.48, 0.64, 1.03], [0.60, 0.72, 0.96, 1.55], [0.50, 0.60, 0.80, 1.29]];
const AVAIL: [[f64; 4]; J] = [[6.00, 7.26, 9.66, 15.56], [20.00, 24.20, 32.21, 51.87], [0.0; 4]];
const DEMAND: [[f64; 4]; J] = [[0.0; 4], [0.0; 4], [30.00, 36.30, 48.31, 77.81]];
const GAMMA: [[f64; 4]; J] = [[0.0; 4], [0.0; 4], [26.20, 31.70, 42.19, 67.95]];
const PHI: [[f64; 4]; J] = [[4.00, 4.84, 6.44, 10.37], [9.60, 11.61, 15.46, 24.90], [0.0; 4]];
const E_LO: [f64; P] = [1.0, 10.0, 10.0];
const E_HI: [f64; P] = [6.0, 30.0, 30.0];
const Q_HI: [f64; P] = [100.0, 100.0, 100.0];
const ETA: [[f64; P]; J] = [[1.11, 0.0, 0.0], [0.0, 1.22, 1.05], [0.0, 0.0, 0.0]];
const MU: [[f64; P]; J] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 1.0]];

/// Mean data over a horizon of `t` periods; rows are processes or chemicals,
/// columns are periods.
#[derive(Debug, Clone, PartialEq)]
pub struct CepData {
    pub horizon: usize,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub avail: Vec<Vec<f64>>,
    pub demand: Vec<Vec<f64>>,
    /// Sale price.
    pub gamma: Vec<Vec<f64>>,
    /// Purchase price.
    pub phi: Vec<Vec<f64>>,
    pub e_lo: [f64; P],
    pub e_hi: [f64; P],
    pub q_hi: [f64; P],
    pub eta: [[f64; P]; J],
    pub mu: [[f64; P]; J],
}

/// Table rows extended past period 4 with the ratio of the last two entries.
fn extend(rows: &[[f64; 4]], horizon: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let ratio = if r[2] != 0.0 { r[3] / r[2] } else { 0.0 };
            let mut out: Vec<f64> = r.iter().copied().take(horizon).collect();
            while out.len() < horizon {
                let last = *out.last().unwrap();
                out.push(last * ratio);
            }
            out
        })
        .collect()
}

pub fn default_data(horizon: usize) -> CepData {
    assert!(horizon >= 1, "horizon must be at least one period");
    CepData {
        horizon,
        alpha: extend(&ALPHA, horizon),
        beta: extend(&BETA, horizon),
        sigma: extend(&SIGMA, horizon),
        avail: extend(&AVAIL, horizon),
        demand: extend(&DEMAND, horizon),
        gamma: extend(&GAMMA, horizon),
        phi: extend(&PHI, horizon),
        e_lo: E_LO,
        e_hi: E_HI,
        q_hi: Q_HI,
        eta: ETA,
        mu: MU,
    }
}

/// The six sampled market quantities of one (scenario, period).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketSample {
    pub avail1: f64,
    pub avail2: f64,
    pub demand3: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub gamma3: f64,
}

impl MarketSample {
    pub fn mean(data: &CepData, t: usize) -> Self {
        MarketSample {
            avail1: data.avail[0][t],
            avail2: data.avail[1][t],
            demand3: data.demand[2][t],
            phi1: data.phi[0][t],
            phi2: data.phi[1][t],
            gamma3: data.gamma[2][t],
        }
    }

    fn as_array(&self) -> [f64; 6] {
        [self.avail1, self.avail2, self.demand3, self.phi1, self.phi2, self.gamma3]
    }

    fn from_array(v: [f64; 6]) -> Self {
        MarketSample { avail1: v[0], avail2: v[1], demand3: v[2], phi1: v[3], phi2: v[4], gamma3: v[5] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    /// `samples[k][t]`.
    pub samples: Vec<Vec<MarketSample>>,
    pub probabilities: Vec<f64>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// A single scenario at the mean values.
    pub fn mean(data: &CepData) -> Self {
        ScenarioSet { samples: vec![(0..data.horizon).map(|t| MarketSample::mean(data, t)).collect()], probabilities: vec![1.0] }
    }
}

/// Draws `k` equally likely scenarios. Each quantity is normal with standard
/// deviation `0.1·mean`, resampled while negative (100 tries, then clamped to 0).
/// Draws are made scenario by scenario, period by period, in the field order
/// of [`MarketSample`].
pub fn sample_scenarios(data: &CepData, k: usize, seed: u64) -> ScenarioSet {
    assert!(k >= 1, "at least one scenario is required");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(k);
    for _ in 0..k {
        let mut row = Vec::with_capacity(data.horizon);
        for t in 0..data.horizon {
            let means = MarketSample::mean(data, t).as_array();
            let mut v = [0.0; 6];
            for (slot, &mu) in means.iter().enumerate() {
                v[slot] = draw(&mut rng, mu);
            }
            row.push(MarketSample::from_array(v));
        }
        samples.push(row);
    }
    ScenarioSet { samples, probabilities: vec![1.0 / k as f64; k] }
}

fn draw(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(mean, REL_STD * mean.abs()).expect("finite mean");
    for _ in 0..100 {
        let v = normal.sample(rng);
        if v >= 0.0 {
            return v;
        }
    }
    0.0
}

/// Parameter range covering `mean ± 5σ` over every period, floored at zero.
fn slot_range(means: &[f64]) -> (f64, f64) {
    let lo = means.iter().map(|&m| (m - THETA_SIGMAS * REL_STD * m).max(0.0)).fold(f64::INFINITY, f64::min);
    let hi = means.iter().map(|&m| m + THETA_SIGMAS * REL_STD * m).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn slot(name: &str, value: f64, means: &[f64]) -> ParamSlot {
    let (lo, hi) = slot_range(means);
    ParamSlot { name: name.into(), value, lo, hi }
}

/// Master node of period `t`: columns x1..3, y1..3, q1..3.
fn master_node(g: &mut ModelGraph, data: &CepData, t: usize) -> usize {
    let id = g.add_node(format!("master_t{}", t + 1));
    let node = g.node_mut(id);
    for p in 0..P {
        node.add_var(Variable::continuous(format!("x{}", p + 1), 0.0, f64::INFINITY, data.alpha[p][t]));
    }
    for p in 0..P {
        node.add_var(Variable::binary(format!("y{}", p + 1), data.beta[p][t]));
    }
    for p in 0..P {
        node.add_var(Variable::continuous(format!("q{}", p + 1), 0.0, data.q_hi[p], 0.0));
    }
    for p in 0..P {
        node.add_row(vec![(P + p, data.e_lo[p]), (p, -1.0)], Sense::Le, 0.0);
        node.add_row(vec![(p, 1.0), (P + p, -data.e_hi[p])], Sense::Le, 0.0);
    }
    if t == 0 {
        for p in 0..P {
            node.add_row(vec![(2 * P + p, 1.0), (p, -1.0)], Sense::Eq, 0.0);
        }
    }
    id
}

/// Recourse node for one (scenario, period): columns p1..3, b1..3, s1..3.
fn scenario_node(g: &mut ModelGraph, data: &CepData, sample: &MarketSample, k: usize, t: usize) -> usize {
    let id = g.add_node(format!("k{}_t{}", k + 1, t + 1));
    let node = g.node_mut(id);
    for p in 0..P {
        let v = Variable::continuous(format!("p{}", p + 1), 0.0, f64::INFINITY, 0.0);
        node.add_var(v.with_cost_param(1.0, slot(&format!("sigma{}", p + 1), data.sigma[p][t], &data.sigma[p])));
    }
    // Sales.
    node.add_var(Variable::continuous("b1", 0.0, 0.0, 0.0));
    node.add_var(Variable::continuous("b2", 0.0, 0.0, 0.0));
    node.add_var(Variable::continuous("b3", 0.0, f64::INFINITY, 0.0).with_cost_param(-1.0, slot("gamma3", sample.gamma3, &data.gamma[2])));
    // Purchases.
    node.add_var(Variable::continuous("s1", 0.0, f64::INFINITY, 0.0).with_cost_param(1.0, slot("phi1", sample.phi1, &data.phi[0])));
    node.add_var(Variable::continuous("s2", 0.0, f64::INFINITY, 0.0).with_cost_param(1.0, slot("phi2", sample.phi2, &data.phi[1])));
    node.add_var(Variable::continuous("s3", 0.0, 0.0, 0.0));
    for j in 0..J {
        let mut terms: Vec<(usize, f64)> = (0..P).filter(|&p| data.mu[j][p] != data.eta[j][p]).map(|p| (p, data.mu[j][p] - data.eta[j][p])).collect();
        terms.push((P + j, -1.0));
        terms.push((2 * P + j, 1.0));
        node.add_row(terms, Sense::Eq, 0.0);
    }
    node.add_param_row(vec![(2 * P, 1.0)], Sense::Le, 0.0, 1.0, slot("avail1", sample.avail1, &data.avail[0]));
    node.add_param_row(vec![(2 * P + 1, 1.0)], Sense::Le, 0.0, 1.0, slot("avail2", sample.avail2, &data.avail[1]));
    node.add_param_row(vec![(P + 2, 1.0)], Sense::Le, 0.0, 1.0, slot("demand3", sample.demand3, &data.demand[2]));
    id
}

fn link_capacity(g: &mut ModelGraph, master: usize, sub: usize) {
    for p in 0..P {
        g.add_link(vec![(VarRef { node: sub, var: p }, 1.0), (VarRef { node: master, var: 2 * P + p }, -1.0)], Sense::Le, 0.0)
            .expect("links join two nodes");
    }
}

/// Master subgraph with one node per period, then one single-node subgraph
/// per (scenario, period) in scenario-major order.
pub fn build_graph(data: &CepData, scenarios: &ScenarioSet) -> ModelGraph {
    let mut g = ModelGraph::new();
    let masters: Vec<usize> = (0..data.horizon).map(|t| master_node(&mut g, data, t)).collect();
    for t in 1..data.horizon {
        for p in 0..P {
            let terms = vec![
                (VarRef { node: masters[t], var: 2 * P + p }, 1.0),
                (VarRef { node: masters[t - 1], var: 2 * P + p }, -1.0),
                (VarRef { node: masters[t], var: p }, -1.0),
            ];
            g.add_link(terms, Sense::Eq, 0.0).expect("links join two nodes");
        }
    }
    let m = g.add_subgraph("master", masters.clone(), None, None);
    g.set_master(m);
    for (k, row) in scenarios.samples.iter().enumerate() {
        for (t, sample) in row.iter().enumerate() {
            let id = scenario_node(&mut g, data, sample, k, t);
            link_capacity(&mut g, masters[t], id);
            g.add_subgraph(format!("k{}_t{}", k + 1, t + 1), vec![id], Some(k), Some(t));
        }
    }
    g.scenario_probabilities = scenarios.probabilities.clone();
    g
}

/// The recourse problem of one (scenario, period) with the given market data.
pub fn build_subproblem_spec(data: &CepData, sample: &MarketSample, k: usize, t: usize) -> ScenarioSubproblemSpec {
    let mut g = ModelGraph::new();
    let master = master_node(&mut g, data, t);
    let sub = scenario_node(&mut g, data, sample, k, t);
    link_capacity(&mut g, master, sub);
    let m = g.add_subgraph("master", vec![master], None, None);
    g.set_master(m);
    g.add_subgraph(format!("k{}_t{}", k + 1, t + 1), vec![sub], Some(k), Some(t));
    let mut part = g.extract_benders_partition().expect("valid by construction");
    part.subproblems.pop().expect("one subproblem")
}
