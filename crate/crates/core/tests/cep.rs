use mpbenders::cep::{build_graph, build_subproblem_spec, default_data, sample_scenarios, MarketSample, ScenarioSet, REL_STD};
use mpbenders::lp::{solve_lp, LpStatus};
use mpbenders::milp::solve_milp;
use mpbenders::mplp::{embed_subproblem, enumerate_regions};

#[test]
fn table_values() {
    let d = default_data(4);
    assert_eq!(d.alpha[0][0], 1.38);
    assert_eq!(d.alpha[0][3], 3.58);
    assert_eq!(d.e_lo, [1.0, 10.0, 10.0]);
    assert_eq!(d.e_hi, [6.0, 30.0, 30.0]);
    assert_eq!(d.q_hi, [100.0; 3]);
    // η_{2,3}: chemical 2 consumed by process 3; μ_{3,2}: chemical 3 made by process 2.
    assert_eq!(d.eta[1][2], 1.05);
    assert_eq!(d.mu[2][1], 1.0);
    assert_eq!(d.gamma[2], vec![26.20, 31.70, 42.19, 67.95]);
    for table in [&d.alpha, &d.beta, &d.sigma, &d.avail, &d.demand, &d.gamma, &d.phi] {
        assert!(table.iter().flatten().all(|&v| v >= 0.0));
    }
}

#[test]
fn horizon_extends_geometrically() {
    let d = default_data(6);
    let r = 3.58 / 2.22;
    assert!((d.alpha[0][4] - 3.58 * r).abs() < 1e-12);
    assert!((d.alpha[0][5] - 3.58 * r * r).abs() < 1e-12);
    assert_eq!(d.avail[2], vec![0.0; 6]);
    assert_eq!(default_data(2).alpha[1], vec![2.72, 3.291]);
}

#[test]
fn sampling_is_deterministic_and_nonnegative() {
    let d = default_data(4);
    let a = sample_scenarios(&d, 20, 7);
    assert_eq!(a, sample_scenarios(&d, 20, 7));
    assert_ne!(a, sample_scenarios(&d, 20, 8));
    assert!((a.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for s in a.samples.iter().flatten() {
        for v in [s.avail1, s.avail2, s.demand3, s.phi1, s.phi2, s.gamma3] {
            assert!(v >= 0.0);
        }
    }
}

#[test]
fn sample_statistics_match_relative_std() {
    let d = default_data(1);
    let k = 10_000;
    let set = sample_scenarios(&d, k, 42);
    let xs: Vec<f64> = set.samples.iter().map(|row| row[0].gamma3).collect();
    let mean = xs.iter().sum::<f64>() / k as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    assert!((25.9..=26.5).contains(&mean), "mean {mean}");
    let target = REL_STD * 26.20;
    assert!((target - 2.620).abs() < 1e-12);
    assert!((var.sqrt() - target).abs() < 0.1, "std {}", var.sqrt());
}

#[test]
fn graph_counts() {
    let d = default_data(5);
    let g = build_graph(&d, &sample_scenarios(&d, 500, 1));
    assert_eq!(g.subgraphs.len(), 1 + 2500);
    let part = g.extract_benders_partition().unwrap();
    assert_eq!(part.subproblems.len(), 2500);

    let d = default_data(1);
    let g = build_graph(&d, &ScenarioSet::mean(&d));
    assert_eq!(g.nodes.len(), 2);
    assert_eq!(g.edges.len(), 3);

    let d = default_data(4);
    let g = build_graph(&d, &ScenarioSet::mean(&d));
    let mono = g.assemble_monolithic().unwrap();
    let master = g.subgraphs[g.master.unwrap()].nodes.clone();
    let count = |prefix: char| {
        mono.columns.keys().filter(|v| master.contains(&v.node) && g.nodes[v.node].vars[v.var].name.starts_with(prefix)).count()
    };
    assert_eq!((count('x'), count('y'), count('q')), (12, 12, 12));
    assert_eq!(mono.problem.binary_idx.len(), 12);
}

#[test]
fn monolithic_plan_is_profitable() {
    let d = default_data(4);
    let g = build_graph(&d, &sample_scenarios(&d, 2, 1));
    let mono = g.assemble_monolithic().unwrap();
    let sol = solve_milp(&mono.problem).unwrap();
    assert!(sol.is_optimal());
    assert!(sol.objective.is_finite() && sol.objective < 0.0, "{}", sol.objective);
}

#[test]
fn subproblem_layout_and_values() {
    let d = default_data(4);
    let spec = build_subproblem_spec(&d, &MarketSample::mean(&d, 0), 0, 0);
    assert_eq!(spec.n_z(), 3);
    assert_eq!(spec.n_z() + spec.cost_slots.len() + spec.rhs_slots.len(), 12);

    let idle = spec.solve_at(&[0.0; 3]).unwrap();
    assert_eq!(idle.solution.status, LpStatus::Optimal);
    assert!(idle.solution.objective.abs() < 1e-12);

    let full = spec.solve_at(&[6.0, 30.0, 30.0]).unwrap();
    assert_eq!(full.solution.status, LpStatus::Optimal);
    let x = &full.solution.x;
    let name = |n: &str| spec.x_names.iter().position(|v| v.ends_with(&format!(".{n}"))).unwrap();
    // Purchases of chemical 1 cover the consumption of process 1.
    assert!((x[name("s1")] - 1.11 * x[name("p1")]).abs() < 1e-9);
    assert!(full.solution.objective < 0.0);

    let (mp, layout) = embed_subproblem(&spec).unwrap();
    let sol = enumerate_regions(&mp).unwrap();
    let theta = layout.theta(&spec, &[6.0, 30.0, 30.0]);
    let (_, v) = sol.value_at(&theta).unwrap();
    assert!((v - full.solution.objective).abs() < 1e-6, "{v} vs {}", full.solution.objective);
    let direct = solve_lp(&mp.instance_lp(&theta)).unwrap();
    assert!((direct.objective - v).abs() < 1e-6);
}

#[test]
fn every_subproblem_shares_one_parameterization() {
    let d = default_data(4);
    let set = sample_scenarios(&d, 3, 9);
    let part = build_graph(&d, &set).extract_benders_partition().unwrap();
    let (first, layout) = embed_subproblem(&part.subproblems[0]).unwrap();
    for (w, spec) in part.subproblems.iter().enumerate() {
        let (mp, l) = embed_subproblem(spec).unwrap();
        assert_eq!(mp, first, "subproblem {w}");
        assert_eq!(l, layout);
        assert_eq!((spec.scenario, spec.period), (w / 4, w % 4));
    }
}

#[test]
fn scenario_order_does_not_change_objective() {
    let d = default_data(2);
    let set = sample_scenarios(&d, 3, 4);
    let mut rev = set.clone();
    rev.samples.reverse();
    let solve = |s: &ScenarioSet| solve_milp(&build_graph(&d, s).assemble_monolithic().unwrap().problem).unwrap().objective;
    let (a, b) = (solve(&set), solve(&rev));
    assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
}
