use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::enumerate::presolve_for_tests;
use super::*;
use crate::lp::{solve_lp, LpStatus};

/// min x  s.t.  x ≥ θ, x ≤ 10,  θ ∈ [0, 1].
fn lower_bound_tracking() -> MpLp {
    let mut p = MpLp::new(1, &[0.0], &[1.0]);
    p.c[0] = 1.0;
    p.push_ineq(&[-1.0], 0.0, &[-1.0]);
    p.push_ineq(&[1.0], 10.0, &[0.0]);
    p
}

/// min θ·x  s.t.  0 ≤ x ≤ 1,  θ ∈ [−1, 1].
fn cost_switch() -> MpLp {
    let mut p = MpLp::new(1, &[-1.0], &[1.0]);
    p.h[(0, 0)] = 1.0;
    p.push_ineq(&[-1.0], 0.0, &[0.0]);
    p.push_ineq(&[1.0], 1.0, &[0.0]);
    p
}

/// min x1 + x2  s.t.  x1 ≥ θ1, x2 ≥ θ2, x1 + x2 ≥ 1,  Θ = [0, 1]².
fn two_dim() -> MpLp {
    let mut p = MpLp::new(2, &[0.0, 0.0], &[1.0, 1.0]);
    p.c = DVector::from_vec(vec![1.0, 1.0]);
    p.push_ineq(&[-1.0, 0.0], 0.0, &[-1.0, 0.0]);
    p.push_ineq(&[0.0, -1.0], 0.0, &[0.0, -1.0]);
    p.push_ineq(&[-1.0, -1.0], -1.0, &[0.0, 0.0]);
    p
}

fn lp_value(p: &MpLp, theta: &[f64]) -> Option<f64> {
    let sol = solve_lp(&p.instance_lp(theta)).unwrap();
    (sol.status == LpStatus::Optimal).then_some(sol.objective)
}

#[test]
fn single_region_tracks_parameter() {
    let p = lower_bound_tracking();
    let sol = enumerate_regions(&p).unwrap();
    assert_eq!(sol.regions.len(), 1);
    let r = &sol.regions[0];
    assert!((r.evaluate_primal(&[0.4])[0] - 0.4).abs() < 1e-12);
    assert!((r.evaluate_value(&p, &[0.4]) - 0.4).abs() < 1e-12);
    let duals = r.evaluate_duals(&[0.4]);
    assert_eq!(r.active_set, vec![0]);
    assert!((duals[0] - 1.0).abs() < 1e-12);
}

#[test]
fn cost_sign_splits_parameter_space() {
    let p = cost_switch();
    for strategy in [Strategy::Explore, Strategy::Combinatorial] {
        let sol = enumerate_regions_with(&p, strategy).unwrap();
        assert_eq!(sol.regions.len(), 2, "{strategy:?}");
        for i in 0..=100 {
            let theta = [-1.0 + 0.02 * i as f64];
            let (r, v) = sol.value_at(&theta).unwrap();
            let exact = lp_value(&p, &theta).unwrap();
            assert!((v - exact).abs() < 1e-9, "θ={theta:?}");
            let x = sol.regions[r].evaluate_primal(&theta)[0];
            if theta[0] < -1e-9 {
                assert!((x - 1.0).abs() < 1e-12);
                // Active row x ≤ 1 carries dual −θ.
                let duals = sol.regions[r].evaluate_duals(&theta);
                assert!((duals[0] + theta[0]).abs() < 1e-12);
            } else if theta[0] > 1e-9 {
                assert!(x.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn two_dimensional_example_value() {
    let p = two_dim();
    let sol = enumerate_regions(&p).unwrap();
    let theta = [0.7, 0.6];
    let r = sol.locate_region(&theta).unwrap();
    let x = sol.regions[r].evaluate_primal(&theta);
    assert!((x[0] - 0.7).abs() < 1e-12 && (x[1] - 0.6).abs() < 1e-12);
    assert!((sol.regions[r].evaluate_value(&p, &theta) - 1.3).abs() < 1e-12);
    assert!((lp_value(&p, &theta).unwrap() - 1.3).abs() < 1e-12);
}

#[test]
fn locate_rules() {
    let p = cost_switch();
    let sol = enumerate_regions(&p).unwrap();
    for (v, r) in sol.regions.iter().enumerate() {
        assert_eq!(sol.locate_region(r.cheb_center.as_slice()).unwrap(), v);
    }
    // θ = 0 lies on the shared facet; the lowest index wins.
    assert_eq!(sol.locate_region(&[0.0]).unwrap(), 0);
    assert!(matches!(sol.locate_region(&[1.5]), Err(MpError::NoRegionFound { .. })));
    assert!(matches!(sol.locate_region(&[0.0, 0.0]), Err(MpError::DimensionMismatch(_))));
}

#[test]
fn constant_primal_map() {
    let p = cost_switch();
    let sol = enumerate_regions(&p).unwrap();
    for r in &sol.regions {
        assert!(r.a_aff.iter().all(|v| *v == 0.0));
        let grad = r.value_gradient(&p, r.cheb_center.as_slice());
        // With x constant the value is θ·x, so the gradient is x.
        assert!((grad[0] - r.b_aff[0]).abs() < 1e-12);
    }
}

#[test]
fn empty_and_unbounded_parameter_sets() {
    let mut p = MpLp::new(1, &[0.0], &[1.0]);
    p.push_ineq(&[1.0], -1.0, &[0.0]);
    p.push_ineq(&[-1.0], 0.0, &[0.0]);
    assert!(matches!(enumerate_regions(&p), Err(MpError::EmptySolution)));

    let mut p = lower_bound_tracking();
    p.a_theta = p.a_theta.rows(0, 1).into_owned();
    p.b_theta = p.b_theta.rows(0, 1).into_owned();
    assert!(matches!(enumerate_regions(&p), Err(MpError::UnboundedParameterSpace(_))));
}

#[test]
fn presolve_drops_implied_rows() {
    let mut p = two_dim();
    // x1 ≥ θ1 − 1 is implied by x1 ≥ θ1.
    p.push_ineq(&[-1.0, 0.0], 1.0, &[-1.0, 0.0]);
    // A duplicate equality pair.
    p.push_eq(&[1.0, -1.0], 0.0, &[1.0, -1.0]);
    p.push_eq(&[2.0, -2.0], 0.0, &[2.0, -2.0]);
    let (ineq, eq) = presolve_for_tests(&p).unwrap();
    assert!(!ineq.contains(&3));
    assert_eq!(eq, vec![0]);
}

/// Random mp-LP with bounded x, parameters in rhs and cost.
pub(crate) fn random_mplp(rng: &mut ChaCha8Rng, n: usize, q: usize, m: usize) -> MpLp {
    let lo = vec![-1.0; q];
    let hi = vec![1.0; q];
    let mut p = MpLp::new(n, &lo, &hi);
    for j in 0..n {
        p.c[j] = rng.random_range(-1.0..1.0);
        for k in 0..q {
            if rng.random_bool(0.3) {
                p.h[(j, k)] = rng.random_range(-0.5..0.5);
            }
        }
    }
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..q).map(|_| if rng.random_bool(0.5) { rng.random_range(-0.5..0.5) } else { 0.0 }).collect();
        p.push_ineq(&row, rng.random_range(0.5..2.0), &t);
    }
    let zero = vec![0.0; q];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        p.push_ineq(&e, 2.0, &zero);
        e[j] = -1.0;
        p.push_ineq(&e, 2.0, &zero);
    }
    p
}

fn check_solution(p: &MpLp, sol: &MpSolution, rng: &mut ChaCha8Rng, samples: usize) {
    let q = p.theta_dim();
    for r in &sol.regions {
        assert!(r.cheb_radius > MIN_RADIUS);
        for i in 0..r.e.nrows() {
            assert!((r.e.row(i).norm() - 1.0).abs() < 1e-9);
        }
        let c = r.cheb_center.as_slice();
        let x = r.evaluate_primal(c);
        assert!(p.violation(&x, c) <= 1e-7);
        let lam = r.evaluate_duals(c);
        let m = p.a.nrows();
        for (k, &row) in r.active_set.iter().enumerate() {
            if row < m {
                assert!(lam[k] >= -1e-7);
            }
        }
        // Stationarity: c + Hθ + A_ASᵀλ = 0.
        let t = DVector::from_column_slice(c);
        let mut grad = &p.c + &p.h * &t;
        for (k, &row) in r.active_set.iter().enumerate() {
            let a = if row < m { p.a.row(row).transpose() } else { p.a_eq.row(row - m).transpose() };
            grad += a * lam[k];
        }
        assert!(grad.amax() <= 1e-7, "stationarity {}", grad.amax());
    }
    for _ in 0..samples {
        let theta: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let Some(exact) = lp_value(p, &theta) else { continue };
        let (r, v) = sol.value_at(&theta).unwrap_or_else(|_| panic!("θ = {theta:?} not covered"));
        assert!((v - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{v} vs {exact}");
        let x = sol.regions[r].evaluate_primal(&theta);
        assert!(p.violation(&x, &theta) <= 1e-6);
    }
}

#[test]
fn random_problems_match_direct_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..12 {
        let n = rng.random_range(1..=3);
        let q = rng.random_range(1..=2);
        let m = rng.random_range(1..=4);
        let p = random_mplp(&mut rng, n, q, m);
        let explored = enumerate_regions_with(&p, Strategy::Explore).unwrap();
        let combined = enumerate_regions_with(&p, Strategy::Combinatorial).unwrap();
        check_solution(&p, &explored, &mut rng, 200);
        check_solution(&p, &combined, &mut rng, 200);
        let mut a: Vec<_> = explored.regions.iter().map(|r| r.active_set.clone()).collect();
        let mut b: Vec<_> = combined.regions.iter().map(|r| r.active_set.clone()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b, "case {case}");
    }
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let p = two_dim();
    let sol = enumerate_regions(&p).unwrap();
    let mut buf = Vec::new();
    save_mp(&sol, &mut buf).unwrap();
    let back = load_mp(buf.as_slice()).unwrap();
    assert_eq!(back, sol);
    let mut again = Vec::new();
    save_mp(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn load_reports_offending_path() {
    let sol = enumerate_regions(&cost_switch()).unwrap();
    let mut buf = Vec::new();
    save_mp(&sol, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();

    let wrong_version = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
    match load_mp(wrong_version.as_bytes()) {
        Err(MpError::Format { path, .. }) => assert_eq!(path, "format_version"),
        other => panic!("{other:?}"),
    }
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["regions"][1]["f"] = serde_json::json!("oops");
    match load_mp(doc.to_string().as_bytes()) {
        Err(MpError::Format { path, .. }) => assert_eq!(path, "regions[1].f"),
        other => panic!("{other:?}"),
    }
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["regions"][0]["b_aff"] = serde_json::json!([1.0, 2.0]);
    match load_mp(doc.to_string().as_bytes()) {
        Err(MpError::Format { path, .. }) => assert_eq!(path, "regions[0].b_aff"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn value_function_is_continuous_across_facets() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut crossings = 0;
    for _ in 0..10 {
        let p = random_mplp(&mut rng, 3, 2, 4);
        let sol = enumerate_regions(&p).unwrap();
        for _ in 0..40 {
            let a: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (Ok(ra), Ok(rb)) = (sol.locate_region(&a), sol.locate_region(&b)) else { continue };
            if ra == rb {
                continue;
            }
            let point = |s: f64| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect() };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if sol.regions[ra].contains(&point(mid), LOCATE_TOL) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let theta = point(lo);
            let Ok(other) = sol.locate_region(&point(hi)) else { continue };
            let va = sol.regions[ra].evaluate_value(&p, &theta);
            let vb = sol.regions[other].evaluate_value(&p, &theta);
            assert!((va - vb).abs() <= 1e-7 * (1.0 + va.abs()), "{va} vs {vb}");
            crossings += 1;
        }
    }
    assert!(crossings > 20, "only {crossings} facet crossings");
}

#[test]
fn subgradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..10 {
        let q = 2;
        let p = random_mplp(&mut rng, 3, q, 4);
        let layout = ThetaLayout { master_idx: (0..q).collect(), cost_idx: Vec::new(), rhs_idx: Vec::new() };
        let sol = enumerate_regions(&p).unwrap();
        for r in &sol.regions {
            let c: Vec<f64> = r.cheb_center.iter().copied().collect();
            let g = r.subgradient_wrt_master(&p, &layout, &c);
            let h = (r.cheb_radius / 10.0).min(1e-4);
            for i in 0..q {
                let (mut up, mut dn) = (c.clone(), c.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (r.evaluate_value(&p, &up) - r.evaluate_value(&p, &dn)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "{fd} vs {}", g[i]);
            }
        }
    }
}

#[test]
fn duals_match_direct_solve_at_centers() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut compared = 0;
    for _ in 0..10 {
        let p = random_mplp(&mut rng, 2, 2, 3);
        let sol = enumerate_regions(&p).unwrap();
        for r in &sol.regions {
            let c = r.cheb_center.as_slice();
            let lp = solve_lp(&p.instance_lp(c)).unwrap();
            // Compare only where the LP is non-degenerate: exactly the region's rows are tight.
            let m = p.a.nrows();
            let ours = r.evaluate_duals(c);
            let tight: Vec<usize> = (0..m).filter(|&i| lp.dual_ub[i].abs() > 1e-9).collect();
            let mine: Vec<usize> = r.active_set.iter().copied().filter(|&i| i < m).collect();
            if tight != mine {
                continue;
            }
            for (k, &row) in r.active_set.iter().enumerate() {
                if row < m {
                    assert!((ours[k] - lp.dual_ub[row]).abs() <= 1e-6);
                }
            }
            compared += 1;
        }
    }
    assert!(compared > 10);
}
