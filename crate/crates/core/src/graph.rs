//! Graph-structured models: nodes own variables, local rows and objective
//! terms; edges hold linking constraints between nodes; subgraphs group nodes.
//!
//! Flattening follows the ordering (subgraph, node id, declaration order).
//! Linking rows with `≥` or `=` sense are rewritten as `≤` rows, equalities as
//! a pair. Local node rows keep their equality form.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lp::StandardLp;
use crate::milp::MixedBinaryLp;
use crate::subproblem::{CostSlot, ParamSlot, RhsSlot, ScenarioSubproblemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("graph is not in Benders form: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarRef {
    pub node: usize,
    pub var: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// An uncertain scalar scaled by `coeff` where it enters the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTerm {
    pub coeff: f64,
    pub param: ParamSlot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub binary: bool,
    pub cost: f64,
    pub cost_param: Option<ParamTerm>,
}

impl Variable {
    pub fn continuous(name: impl Into<String>, lb: f64, ub: f64, cost: f64) -> Self {
        Variable { name: name.into(), lb, ub, binary: false, cost, cost_param: None }
    }

    pub fn binary(name: impl Into<String>, cost: f64) -> Self {
        Variable { name: name.into(), lb: 0.0, ub: 1.0, binary: true, cost, cost_param: None }
    }

    pub fn with_cost_param(mut self, coeff: f64, param: ParamSlot) -> Self {
        self.cost_param = Some(ParamTerm { coeff, param });
        self
    }

    fn realized_cost(&self) -> f64 {
        self.cost + self.cost_param.as_ref().map_or(0.0, |p| p.coeff * p.param.value)
    }
}

/// Local row over the variables of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub rhs_param: Option<ParamTerm>,
}

impl LocalRow {
    fn realized_rhs(&self) -> f64 {
        self.rhs + self.rhs_param.as_ref().map_or(0.0, |p| p.coeff * p.param.value)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelNode {
    pub name: String,
    pub vars: Vec<Variable>,
    pub rows: Vec<LocalRow>,
}

impl ModelNode {
    pub fn add_var(&mut self, v: Variable) -> usize {
        self.vars.push(v);
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(LocalRow { terms, sense, rhs, rhs_param: None });
        self.rows.len() - 1
    }

    pub fn add_param_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64, coeff: f64, param: ParamSlot) -> usize {
        self.rows.push(LocalRow { terms, sense, rhs, rhs_param: Some(ParamTerm { coeff, param }) });
        self.rows.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConstraint {
    pub terms: Vec<(VarRef, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub name: String,
    pub nodes: Vec<usize>,
    pub scenario: Option<usize>,
    pub period: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelGraph {
    pub nodes: Vec<ModelNode>,
    pub edges: Vec<LinkConstraint>,
    pub subgraphs: Vec<Subgraph>,
    pub master: Option<usize>,
    /// Probability of each scenario tag; objectives of tagged subgraphs are
    /// weighted by it. Untagged subgraphs have weight 1.
    pub scenario_probabilities: Vec<f64>,
}

/// A flattened graph with the column of every node variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Monolithic {
    pub problem: MixedBinaryLp,
    pub columns: BTreeMap<VarRef, usize>,
}

/// Master problem, one subproblem per non-master subgraph, and the map from
/// each subproblem's copy variables to master columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BendersPartition {
    pub master: MixedBinaryLp,
    pub master_vars: Vec<VarRef>,
    pub subproblems: Vec<ScenarioSubproblemSpec>,
    pub coupling: Vec<Vec<usize>>,
    /// Scenario tag of each subproblem's subgraph.
    pub scenario_tags: Vec<Option<usize>>,
}

impl BendersPartition {
    /// Objective weight of each subproblem under the given scenario probabilities.
    pub fn weights(&self, probabilities: &[f64]) -> Vec<f64> {
        self.scenario_tags
            .iter()
            .map(|tag| match tag {
                Some(s) if !probabilities.is_empty() => probabilities[*s],
                _ => 1.0,
            })
            .collect()
    }
}

impl ModelGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> usize {
        self.nodes.push(ModelNode { name: name.into(), ..Default::default() });
        self.nodes.len() - 1
    }

    pub fn node_mut(&mut self, id: usize) -> &mut ModelNode {
        &mut self.nodes[id]
    }

    pub fn add_subgraph(&mut self, name: impl Into<String>, nodes: Vec<usize>, scenario: Option<usize>, period: Option<usize>) -> usize {
        self.subgraphs.push(Subgraph { name: name.into(), nodes, scenario, period });
        self.subgraphs.len() - 1
    }

    pub fn set_master(&mut self, subgraph: usize) {
        self.master = Some(subgraph);
    }

    /// Adds a linking constraint; it must reference at least two distinct nodes.
    pub fn add_link(&mut self, terms: Vec<(VarRef, f64)>, sense: Sense, rhs: f64) -> Result<usize, GraphError> {
        let distinct: BTreeSet<usize> = terms.iter().map(|(r, _)| r.node).collect();
        if distinct.len() < 2 {
            return Err(GraphError::Invalid("a link constraint must reference at least two nodes; use a local row".into()));
        }
        self.edges.push(LinkConstraint { terms, sense, rhs });
        Ok(self.edges.len() - 1)
    }

    /// Subgraph owning each node.
    fn owners(&self) -> Result<Vec<usize>, GraphError> {
        let mut owner = vec![usize::MAX; self.nodes.len()];
        for (s, sg) in self.subgraphs.iter().enumerate() {
            for &n in &sg.nodes {
                if n >= self.nodes.len() {
                    return Err(GraphError::Invalid(format!("subgraph {} lists missing node {n}", sg.name)));
                }
                if owner[n] != usize::MAX {
                    return Err(GraphError::Invalid(format!("node {n} belongs to more than one subgraph")));
                }
                owner[n] = s;
            }
        }
        if let Some(n) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(GraphError::Invalid(format!("node {n} belongs to no subgraph")));
        }
        Ok(owner)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        self.owners()?;
        for (id, node) in self.nodes.iter().enumerate() {
            for v in &node.vars {
                if v.lb.is_nan() || v.ub.is_nan() || v.lb > v.ub {
                    return Err(GraphError::Invalid(format!("node {id} variable {} has bounds [{}, {}]", v.name, v.lb, v.ub)));
                }
                if v.binary && (v.lb < 0.0 || v.ub > 1.0) {
                    return Err(GraphError::Invalid(format!("binary variable {} must lie in [0, 1]", v.name)));
                }
            }
            for row in &node.rows {
                if row.terms.iter().any(|&(j, _)| j >= node.vars.len()) {
                    return Err(GraphError::Invalid(format!("node {id} row references a missing variable")));
                }
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            for (r, _) in &edge.terms {
                if r.node >= self.nodes.len() || r.var >= self.nodes[r.node].vars.len() {
                    return Err(GraphError::Invalid(format!("edge {e} references missing variable {r:?}")));
                }
            }
        }
        if let Some(m) = self.master {
            if m >= self.subgraphs.len() {
                return Err(GraphError::Invalid(format!("master subgraph {m} does not exist")));
            }
        }
        if !self.scenario_probabilities.is_empty() {
            let total: f64 = self.scenario_probabilities.iter().sum();
            if (total - 1.0).abs() > 1e-9 || self.scenario_probabilities.iter().any(|&p| p < 0.0) {
                return Err(GraphError::Invalid(format!("scenario probabilities sum to {total}")));
            }
            for sg in &self.subgraphs {
                if sg.scenario.is_some_and(|s| s >= self.scenario_probabilities.len()) {
                    return Err(GraphError::Invalid(format!("subgraph {} has no scenario probability", sg.name)));
                }
            }
        }
        Ok(())
    }

    fn weight(&self, sg: &Subgraph) -> f64 {
        match sg.scenario {
            Some(s) if !self.scenario_probabilities.is_empty() => self.scenario_probabilities[s],
            _ => 1.0,
        }
    }

    fn sorted_nodes(sg: &Subgraph) -> Vec<usize> {
        let mut nodes = sg.nodes.clone();
        nodes.sort_unstable();
        nodes
    }

    /// Flattens the graph into one mixed-binary LP.
    pub fn assemble_monolithic(&self) -> Result<Monolithic, GraphError> {
        self.validate()?;
        let mut columns = BTreeMap::new();
        let mut order = Vec::new();
        for sg in &self.subgraphs {
            let w = self.weight(sg);
            for n in Self::sorted_nodes(sg) {
                for j in 0..self.nodes[n].vars.len() {
                    columns.insert(VarRef { node: n, var: j }, order.len());
                    order.push((VarRef { node: n, var: j }, w));
                }
            }
        }
        let ncols = order.len();
        let mut lp = StandardLp::new(ncols);
        let mut binaries = Vec::new();
        for (col, (r, w)) in order.iter().enumerate() {
            let v = &self.nodes[r.node].vars[r.var];
            lp.c[col] = w * v.realized_cost();
            lp.lb[col] = v.lb;
            lp.ub[col] = v.ub;
            if v.binary {
                binaries.push(col);
            }
        }
        let mut ub_rows = Rows::new(ncols);
        let mut eq_rows = Rows::new(ncols);
        for sg in &self.subgraphs {
            for n in Self::sorted_nodes(sg) {
                for row in &self.nodes[n].rows {
                    let terms: Vec<(usize, f64)> = row.terms.iter().map(|&(j, a)| (columns[&VarRef { node: n, var: j }], a)).collect();
                    let rhs = row.realized_rhs();
                    match row.sense {
                        Sense::Le => ub_rows.push(&terms, 1.0, rhs),
                        Sense::Ge => ub_rows.push(&terms, -1.0, -rhs),
                        Sense::Eq => eq_rows.push(&terms, 1.0, rhs),
                    }
                }
            }
        }
        for edge in &self.edges {
            let terms: Vec<(usize, f64)> = edge.terms.iter().map(|(r, a)| (columns[r], *a)).collect();
            push_link(&mut ub_rows, &terms, edge.sense, edge.rhs);
        }
        (lp.a_ub, lp.b_ub) = ub_rows.finish();
        (lp.a_eq, lp.b_eq) = eq_rows.finish();
        Ok(Monolithic { problem: MixedBinaryLp::new(lp, binaries), columns })
    }

    /// Splits the graph into a master problem and one subproblem per
    /// non-master subgraph.
    pub fn extract_benders_partition(&self) -> Result<BendersPartition, GraphError> {
        self.validate()?;
        let master = self.master.ok_or_else(|| GraphError::Shape("no master subgraph designated".into()))?;
        let owner = self.owners()?;

        // Classify edges: inside the master, inside one subgraph, or between
        // the master and one other subgraph.
        let mut master_edges = Vec::new();
        let mut sub_edges: Vec<Vec<usize>> = vec![Vec::new(); self.subgraphs.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            let groups: BTreeSet<usize> = edge.terms.iter().map(|(r, _)| owner[r.node]).collect();
            let others: Vec<usize> = groups.iter().copied().filter(|&s| s != master).collect();
            match others.as_slice() {
                [] => master_edges.push(e),
                [s] => sub_edges[*s].push(e),
                _ => {
                    return Err(GraphError::Shape(format!(
                        "edge {e} couples subgraphs {:?}, which are not the master",
                        others.iter().map(|&s| self.subgraphs[s].name.as_str()).collect::<Vec<_>>()
                    )))
                }
            }
        }

        // Master problem.
        let msg = &self.subgraphs[master];
        let mut master_cols = BTreeMap::new();
        let mut master_vars = Vec::new();
        for n in Self::sorted_nodes(msg) {
            for j in 0..self.nodes[n].vars.len() {
                master_cols.insert(VarRef { node: n, var: j }, master_vars.len());
                master_vars.push(VarRef { node: n, var: j });
            }
        }
        let nm = master_vars.len();
        let mut lp = StandardLp::new(nm);
        let mut binaries = Vec::new();
        let wm = self.weight(msg);
        for (col, r) in master_vars.iter().enumerate() {
            let v = &self.nodes[r.node].vars[r.var];
            lp.c[col] = wm * v.realized_cost();
            lp.lb[col] = v.lb;
            lp.ub[col] = v.ub;
            if v.binary {
                binaries.push(col);
            }
        }
        let mut ub_rows = Rows::new(nm);
        let mut eq_rows = Rows::new(nm);
        for n in Self::sorted_nodes(msg) {
            for row in &self.nodes[n].rows {
                let terms: Vec<(usize, f64)> = row.terms.iter().map(|&(j, a)| (master_cols[&VarRef { node: n, var: j }], a)).collect();
                let rhs = row.realized_rhs();
                match row.sense {
                    Sense::Le => ub_rows.push(&terms, 1.0, rhs),
                    Sense::Ge => ub_rows.push(&terms, -1.0, -rhs),
                    Sense::Eq => eq_rows.push(&terms, 1.0, rhs),
                }
            }
        }
        for &e in &master_edges {
            let terms: Vec<(usize, f64)> = self.edges[e].terms.iter().map(|(r, a)| (master_cols[r], *a)).collect();
            push_link(&mut ub_rows, &terms, self.edges[e].sense, self.edges[e].rhs);
        }
        (lp.a_ub, lp.b_ub) = ub_rows.finish();
        (lp.a_eq, lp.b_eq) = eq_rows.finish();
        let master_problem = MixedBinaryLp::new(lp, binaries);

        let mut subproblems = Vec::new();
        let mut coupling = Vec::new();
        let mut scenario_tags = Vec::new();
        for (s, sg) in self.subgraphs.iter().enumerate() {
            if s == master {
                continue;
            }
            let (spec, map) = self.subproblem(s, sg, &sub_edges[s], &owner, master, &master_cols)?;
            subproblems.push(spec);
            coupling.push(map);
            scenario_tags.push(sg.scenario);
        }
        Ok(BendersPartition { master: master_problem, master_vars, subproblems, coupling, scenario_tags })
    }

    fn subproblem(
        &self,
        s: usize,
        sg: &Subgraph,
        edges: &[usize],
        owner: &[usize],
        master: usize,
        master_cols: &BTreeMap<VarRef, usize>,
    ) -> Result<(ScenarioSubproblemSpec, Vec<usize>), GraphError> {
        let mut cols = BTreeMap::new();
        let mut x_names = Vec::new();
        let (mut x_lb, mut x_ub, mut cost) = (Vec::new(), Vec::new(), Vec::new());
        let mut cost_slots = Vec::new();
        for n in Self::sorted_nodes(sg) {
            for (j, v) in self.nodes[n].vars.iter().enumerate() {
                if v.binary {
                    return Err(GraphError::Shape(format!("subgraph {} holds binary variable {}", sg.name, v.name)));
                }
                let col = x_names.len();
                cols.insert(VarRef { node: n, var: j }, col);
                x_names.push(format!("{}.{}", self.nodes[n].name, v.name));
                x_lb.push(v.lb);
                x_ub.push(v.ub);
                cost.push(v.cost);
                if let Some(p) = &v.cost_param {
                    cost_slots.push(CostSlot { var: col, coeff: p.coeff, slot: p.param.clone() });
                }
            }
        }
        let nx = x_names.len();

        // Copy variables: distinct master variables in order of first use.
        let mut z_of: BTreeMap<VarRef, usize> = BTreeMap::new();
        let mut z_refs = Vec::new();
        for &e in edges {
            for (r, _) in &self.edges[e].terms {
                if owner[r.node] == master && !z_of.contains_key(r) {
                    z_of.insert(*r, z_refs.len());
                    z_refs.push(*r);
                }
            }
        }
        let z_cols: Vec<usize> = z_refs.iter().map(|r| master_cols[r]).collect();
        let nz = z_cols.len();
        let z_lo: Vec<f64> = z_refs.iter().map(|r| self.nodes[r.node].vars[r.var].lb).collect();
        let z_hi: Vec<f64> = z_refs.iter().map(|r| self.nodes[r.node].vars[r.var].ub).collect();

        let n = nx + nz;
        let mut ub_rows = Rows::new(n);
        let mut eq_rows = Rows::new(n);
        let mut rhs_slots = Vec::new();
        for node in Self::sorted_nodes(sg) {
            for row in &self.nodes[node].rows {
                let terms: Vec<(usize, f64)> = row.terms.iter().map(|&(j, a)| (cols[&VarRef { node, var: j }], a)).collect();
                let (rows, sign, equality) = match row.sense {
                    Sense::Le => (&mut ub_rows, 1.0, false),
                    Sense::Ge => (&mut ub_rows, -1.0, false),
                    Sense::Eq => (&mut eq_rows, 1.0, true),
                };
                rows.push(&terms, sign, sign * row.rhs);
                if let Some(p) = &row.rhs_param {
                    rhs_slots.push(RhsSlot { row: rows.len() - 1, equality, coeff: sign * p.coeff, slot: p.param.clone() });
                }
            }
        }
        for &e in edges {
            let edge = &self.edges[e];
            let terms: Vec<(usize, f64)> = edge
                .terms
                .iter()
                .map(|(r, a)| if owner[r.node] == master { (nx + z_of[r], *a) } else { (cols[r], *a) })
                .collect();
            push_link(&mut ub_rows, &terms, edge.sense, edge.rhs);
        }
        let (a_ub, b_ub) = ub_rows.finish();
        let (a_eq, b_eq) = eq_rows.finish();
        let spec = ScenarioSubproblemSpec {
            name: sg.name.clone(),
            scenario: sg.scenario.unwrap_or(0),
            period: sg.period.unwrap_or(s),
            x_names,
            x_lb,
            x_ub,
            cost,
            cost_slots,
            ineq_x: a_ub.columns(0, nx).into_owned(),
            ineq_z: a_ub.columns(nx, nz).into_owned(),
            ineq_rhs: b_ub,
            eq_x: a_eq.columns(0, nx).into_owned(),
            eq_z: a_eq.columns(nx, nz).into_owned(),
            eq_rhs: b_eq,
            rhs_slots,
            z_lo,
            z_hi,
        };
        Ok((spec, z_cols))
    }
}

fn push_link(rows: &mut Rows, terms: &[(usize, f64)], sense: Sense, rhs: f64) {
    match sense {
        Sense::Le => rows.push(terms, 1.0, rhs),
        Sense::Ge => rows.push(terms, -1.0, -rhs),
        Sense::Eq => {
            rows.push(terms, 1.0, rhs);
            rows.push(terms, -1.0, -rhs);
        }
    }
}

/// Row accumulator; repeated terms on one column are summed.
struct Rows {
    ncols: usize,
    data: Vec<f64>,
    rhs: Vec<f64>,
}

impl Rows {
    fn new(ncols: usize) -> Self {
        Rows { ncols, data: Vec::new(), rhs: Vec::new() }
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn push(&mut self, terms: &[(usize, f64)], sign: f64, rhs: f64) {
        let start = self.data.len();
        self.data.resize(start + self.ncols, 0.0);
        for &(j, a) in terms {
            self.data[start + j] += sign * a;
        }
        self.rhs.push(rhs);
    }

    fn finish(self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.rhs.len();
        (DMatrix::from_row_slice(m, self.ncols, &self.data), DVector::from_vec(self.rhs))
    }
}
