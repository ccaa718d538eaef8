use mpbenders::benders::{ExactOracle, MpOracle, SubproblemOracle};
use mpbenders::cep::{build_graph, default_data, sample_scenarios};
use mpbenders::graph::BendersPartition;
use mpbenders::lp::{solve_lp, StandardLp};
use mpbenders::mplp::{embed_subproblem, enumerate_regions, MpSolution};
use proptest::prelude::*;
use std::sync::OnceLock;

fn cep() -> &'static (BendersPartition, MpSolution) {
    static CELL: OnceLock<(BendersPartition, MpSolution)> = OnceLock::new();
    CELL.get_or_init(|| {
        let d = default_data(3);
        let part = build_graph(&d, &sample_scenarios(&d, 4, 11)).extract_benders_partition().unwrap();
        let (mp, _) = embed_subproblem(&part.subproblems[0]).unwrap();
        let sol = enumerate_regions(&mp).unwrap();
        (part, sol)
    })
}

/// Feasible by construction: every row holds at `x0` and `x0` lies inside the box.
fn feasible_lp() -> impl Strategy<Value = StandardLp> {
    (2usize..7, 1usize..7)
        .prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(-3.0..3.0f64, n),
                prop::collection::vec(-2.0..2.0f64, n),
                prop::collection::vec(0.0..4.0f64, 2 * n),
                prop::collection::vec(-3.0..3.0f64, m * n),
                prop::collection::vec(0.0..2.0f64, m),
            )
        })
        .prop_map(|(x0, c, widths, a, slack)| {
            let n = x0.len();
            let mut lp = StandardLp::new(n);
            for j in 0..n {
                lp.c[j] = c[j];
                lp.lb[j] = x0[j] - widths[j];
                lp.ub[j] = x0[j] + widths[n + j];
            }
            for (i, s) in slack.iter().enumerate() {
                let row = &a[i * n..(i + 1) * n];
                let ax: f64 = row.iter().zip(&x0).map(|(p, q)| p * q).sum();
                lp.push_ub(row, ax + s);
            }
            lp
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bounded_feasible_lps_satisfy_kkt(lp in feasible_lp()) {
        let sol = solve_lp(&lp).unwrap();
        prop_assert!(sol.is_optimal());
        let r = sol.kkt(&lp);
        prop_assert!(r.within(1e-7), "{r:?}");
    }

    #[test]
    fn cuts_underestimate_the_recourse_value(
        w in 0usize..12,
        z0 in prop::collection::vec(0.0..60.0f64, 3),
        z1 in prop::collection::vec(0.0..60.0f64, 3),
    ) {
        let (part, _) = cep();
        let oracle = ExactOracle::new(&part.subproblems);
        let e0 = oracle.evaluate(w, &z0).unwrap();
        let e1 = oracle.evaluate(w, &z1).unwrap();
        let cut: f64 = e0.value + e0.subgradient.iter().zip(z1.iter().zip(&z0)).map(|(g, (a, b))| g * (a - b)).sum::<f64>();
        prop_assert!(cut <= e1.value + 1e-7 * (1.0 + e1.value.abs()));
    }

    #[test]
    fn surrogate_matches_exact_value(w in 0usize..12, z in prop::collection::vec(0.0..60.0f64, 3)) {
        let (part, sol) = cep();
        let exact = ExactOracle::new(&part.subproblems).evaluate(w, &z).unwrap();
        let mp = MpOracle::new(sol, &part.subproblems, false).unwrap().evaluate(w, &z).unwrap();
        prop_assert!((exact.value - mp.value).abs() <= 1e-7 * (1.0 + exact.value.abs()));
    }
}
