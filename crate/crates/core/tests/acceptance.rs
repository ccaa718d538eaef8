//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::sync::Mutex;
use std::time::Instant;

use mpbenders::benders::{
    self, run_partition, BendersConfig, BendersError, BendersState, CutMode, Evaluation, ExactOracle, MpOracle, OracleMode, SubproblemOracle,
};
use mpbenders::cep::{build_graph, build_subproblem_spec, default_data, sample_scenarios, MarketSample};
use mpbenders::graph::ModelGraph;
use mpbenders::lp::{solve_lp, LpStatus, StandardLp};
use mpbenders::milp::{solve_milp, MixedBinaryLp};
use mpbenders::mplp::{embed_subproblem, enumerate_regions, save_mp, MpSolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    /// Reported but not failed when false.
    flag_only: bool,
    detail: String,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome { pass: ok, flag_only: false, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn cep_mp(horizon: usize) -> (MpSolution, f64) {
    let d = default_data(horizon);
    let spec = build_subproblem_spec(&d, &MarketSample::mean(&d, 0), 0, 0);
    let (mp, _) = embed_subproblem(&spec).unwrap();
    let t = Instant::now();
    let sol = enumerate_regions(&mp).unwrap();
    (sol, t.elapsed().as_secs_f64())
}

fn cep_graph(horizon: usize, k: usize, seed: u64) -> ModelGraph {
    let d = default_data(horizon);
    build_graph(&d, &sample_scenarios(&d, k, seed))
}

/// Smallest slack of `theta` in the region's inequalities.
fn margin(sol: &MpSolution, r: usize, theta: &[f64]) -> f64 {
    let reg = &sol.regions[r];
    (0..reg.e.nrows())
        .map(|i| reg.f[i] - reg.e.row(i).iter().zip(theta).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (sol, _) = cep_mp(4);
    let part = cep_graph(4, 25, 3).extract_benders_partition().unwrap();
    let exact = ExactOracle::new(&part.subproblems);
    let mp = MpOracle::new(&sol, &part.subproblems, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut compared, mut tries, mut worst_i, mut worst_c) = (0, 0, 0.0f64, 0.0f64);
    while compared < 100 && tries < 10_000 {
        tries += 1;
        let w = rng.random_range(0..part.subproblems.len());
        let z: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..100.0)).collect();
        let m = mp.evaluate(w, &z).unwrap();
        let r = m.region.unwrap();
        // Strictly inside a region the optimal basis is unique and nondegenerate.
        if margin(&sol, r, &m.theta) < 1e-6 {
            continue;
        }
        let e = exact.evaluate(w, &z).unwrap();
        worst_i = worst_i.max((m.value - e.value).abs());
        for (a, b) in m.subgradient.iter().zip(&e.subgradient) {
            worst_c = worst_c.max((a - b).abs());
        }
        compared += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        compared == 100 && worst_i <= 1e-6 && worst_c <= 1e-6 && secs < 30.0,
        format!("{compared} nondegenerate pairs, max |Δintercept| {worst_i:.2e}, max |Δcoeff| {worst_c:.2e}, {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (sol, _) = cep_mp(4);
    let p = &sol.problem;
    let (lo, hi) = p.theta_bounds().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut feasible, mut uncovered, mut worst_v, mut worst_x) = (0, 0, 0.0f64, 0.0f64);
    for _ in 0..2000 {
        let theta: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..=*b)).collect();
        if !p.theta_in_set(&theta, 0.0) {
            continue;
        }
        let lp = solve_lp(&p.instance_lp(&theta)).unwrap();
        if lp.status != LpStatus::Optimal {
            continue;
        }
        feasible += 1;
        match sol.value_at(&theta) {
            Ok((r, v)) => {
                worst_v = worst_v.max((v - lp.objective).abs() / (1.0 + lp.objective.abs()));
                worst_x = worst_x.max(p.violation(&sol.regions[r].evaluate_primal(&theta), &theta));
            }
            Err(_) => uncovered += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        feasible >= 1000 && uncovered == 0 && worst_v <= 1e-6 && worst_x <= 1e-6 && secs < 60.0,
        format!(
            "{feasible} feasible samples, {uncovered} uncovered, {} regions, max rel value error {worst_v:.2e}, max primal violation {worst_x:.2e}, {secs:.2}s",
            sol.regions.len()
        ),
    )
}

struct RunSet {
    mono: f64,
    runs: Vec<(CutMode, OracleMode, BendersState)>,
    secs: f64,
}

fn criterion_3_runs() -> RunSet {
    let start = Instant::now();
    let g = cep_graph(4, 10, 1);
    let mono = solve_milp(&g.assemble_monolithic().unwrap().problem).unwrap().objective;
    let (sol, _) = cep_mp(4);
    let mut runs = Vec::new();
    for cut_mode in [CutMode::MultiCut, CutMode::SingleCut] {
        for oracle_mode in [OracleMode::Exact, OracleMode::MpSurrogate] {
            let cfg = BendersConfig { cut_mode, oracle_mode, ..Default::default() };
            runs.push((cut_mode, oracle_mode, benders::solve(&g, &cfg, Some(&sol)).unwrap()));
        }
    }
    RunSet { mono, runs, secs: start.elapsed().as_secs_f64() }
}

fn criterion_3(set: &RunSet) -> Outcome {
    let worst = set.runs.iter().map(|(_, _, s)| rel(s.ub, set.mono)).fold(0.0, f64::max);
    let all = set.runs.iter().all(|(_, _, s)| s.converged);
    check(
        all && worst <= 1e-6 && set.secs < 60.0,
        format!("monolithic {:.10e}, 4 Benders runs converged: {all}, max rel deviation {worst:.2e}, {:.2}s", set.mono, set.secs),
    )
}

fn criterion_4(set: &RunSet) -> Outcome {
    let mut bad = Vec::new();
    for (c, o, s) in &set.runs {
        let mono_lb = s.log.windows(2).all(|w| w[1].lb >= w[0].lb);
        let mono_ub = s.log.windows(2).all(|w| w[1].ub <= w[0].ub);
        let sandwich = s.log.iter().all(|r| r.lb <= r.ub);
        let closed = s.log.last().unwrap().rel_gap <= BendersConfig::default().tol;
        if !(mono_lb && mono_ub && sandwich && closed) {
            bad.push(format!("{c:?}/{o:?}"));
        }
    }
    check(bad.is_empty(), format!("{} logs checked, violations: {bad:?}", set.runs.len()))
}

fn criterion_5(set: &RunSet) -> Outcome {
    let iters = |c: CutMode, o: OracleMode| set.runs.iter().find(|r| r.0 == c && r.1 == o).unwrap().2.iteration;
    let mut detail = Vec::new();
    let mut ok = true;
    for o in [OracleMode::Exact, OracleMode::MpSurrogate] {
        let (m, s) = (iters(CutMode::MultiCut, o), iters(CutMode::SingleCut, o));
        ok &= s >= m;
        detail.push(format!("{o:?}: multi {m}, single {s}"));
    }
    Outcome { pass: ok, flag_only: true, detail: detail.join("; ") }
}

/// Times each evaluation on the calling thread.
struct Timed<'a> {
    inner: &'a dyn SubproblemOracle,
    stats: Mutex<(usize, f64)>,
}

impl SubproblemOracle for Timed<'_> {
    fn evaluate(&self, sub: usize, z: &[f64]) -> Result<Evaluation, BendersError> {
        let mut s = self.stats.lock().unwrap();
        let t = Instant::now();
        let r = self.inner.evaluate(sub, z);
        s.0 += 1;
        s.1 += t.elapsed().as_secs_f64();
        r
    }
}

fn criterion_6() -> Outcome {
    let (sol, enum_s) = cep_mp(4);
    let g = cep_graph(4, 500, 6);
    let part = g.extract_benders_partition().unwrap();
    let cfg = BendersConfig { cut_mode: CutMode::SingleCut, ..Default::default() };
    let exact = ExactOracle::new(&part.subproblems);
    let mp = MpOracle::new(&sol, &part.subproblems, false).unwrap();
    let te = Timed { inner: &exact, stats: Mutex::new((0, 0.0)) };
    let tm = Timed { inner: &mp, stats: Mutex::new((0, 0.0)) };
    let se = run_partition(&part, &g.scenario_probabilities, &cfg, &te).unwrap();
    let sm = run_partition(&part, &g.scenario_probabilities, &cfg, &tm).unwrap();
    let (ne, te_s) = *te.stats.lock().unwrap();
    let (nm, tm_s) = *tm.stats.lock().unwrap();
    let (me, mm) = (te_s / ne as f64, tm_s / nm as f64);
    let amortized = enum_s + tm_s;
    check(
        ne >= 500 && nm >= 500 && mm < me && amortized < te_s && se.converged && sm.converged,
        format!(
            "K=500 T=4 single-cut: exact {ne} evals, mean {me:.2e}s; mp {nm} evals, mean {mm:.2e}s; per-eval ratio {:.1}x; totals exact {te_s:.3}s vs mp {tm_s:.3}s + enumeration {enum_s:.3}s = {amortized:.3}s ({:.1}x)",
            me / mm,
            te_s / amortized
        ),
    )
}

fn random_feasible_lp(rng: &mut ChaCha8Rng) -> StandardLp {
    let n = rng.random_range(2..=8);
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut lp = StandardLp::new(n);
    for j in 0..n {
        lp.c[j] = rng.random_range(-2.0..2.0);
        lp.lb[j] = x0[j] - rng.random_range(0.0..4.0);
        lp.ub[j] = x0[j] + rng.random_range(0.0..4.0);
    }
    for _ in 0..rng.random_range(1..=8) {
        let row: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.7) { rng.random_range(-3.0..3.0) } else { 0.0 }).collect();
        let ax: f64 = row.iter().zip(&x0).map(|(a, b)| a * b).sum();
        let slack = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..2.0) };
        lp.push_ub(&row, ax + slack);
    }
    for _ in 0..rng.random_range(0..=2.min(n - 1)) {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ax: f64 = row.iter().zip(&x0).map(|(a, b)| a * b).sum();
        lp.push_eq(&row, ax);
    }
    lp
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_kkt = 0.0f64;
    let mut lp_fail = 0;
    for _ in 0..200 {
        let lp = random_feasible_lp(&mut rng);
        let sol = solve_lp(&lp).unwrap();
        if sol.status != LpStatus::Optimal {
            lp_fail += 1;
            continue;
        }
        worst_kkt = worst_kkt.max(sol.kkt(&lp).worst());
    }
    let mut milp_fail = 0;
    for _ in 0..50 {
        let base = random_feasible_lp(&mut rng);
        let n = base.num_vars();
        let mut lp = StandardLp::new(n + rng.random_range(1..=12usize));
        let nb = lp.num_vars() - n;
        lp.c.rows_mut(0, n).copy_from(&base.c);
        lp.lb.rows_mut(0, n).copy_from(&base.lb);
        lp.ub.rows_mut(0, n).copy_from(&base.ub);
        for j in n..n + nb {
            lp.c[j] = rng.random_range(-3.0..3.0);
            lp.lb[j] = 0.0;
            lp.ub[j] = 1.0;
        }
        // Each binary switches on a shift of one original row.
        let mut a = base.a_ub.clone().resize_horizontally(n + nb, 0.0);
        for j in n..n + nb {
            let i = rng.random_range(0..a.nrows());
            a[(i, j)] = rng.random_range(-2.0..2.0);
        }
        lp.a_ub = a;
        lp.b_ub = base.b_ub.clone();
        lp.a_eq = base.a_eq.clone().resize_horizontally(n + nb, 0.0);
        lp.b_eq = base.b_eq.clone();
        let bins: Vec<usize> = (n..n + nb).collect();
        let got = solve_milp(&MixedBinaryLp::new(lp.clone(), bins.clone())).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << nb) {
            let mut fixed = lp.clone();
            for (b, &j) in bins.iter().enumerate() {
                let v = f64::from((mask >> b) & 1);
                fixed.lb[j] = v;
                fixed.ub[j] = v;
            }
            let s = solve_lp(&fixed).unwrap();
            if s.status == LpStatus::Optimal {
                best = best.min(s.objective);
            }
        }
        let agree = if best.is_finite() { got.is_optimal() && rel(got.objective, best) <= 1e-7 } else { got.status == LpStatus::Infeasible };
        if !agree {
            milp_fail += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        lp_fail == 0 && worst_kkt <= 1e-7 && milp_fail == 0 && secs < 60.0,
        format!("200 LPs: {lp_fail} not optimal, worst KKT residual {worst_kkt:.2e}; 50 MILPs: {milp_fail} mismatches vs enumeration; {secs:.2}s"),
    )
}

fn log_bytes(s: &BendersState) -> (Vec<u8>, Vec<u8>) {
    let stable: Vec<_> = s
        .log
        .iter()
        .map(|r| benders::IterationRecord { master_time_s: 0.0, sub_time_s: 0.0, ..r.clone() })
        .collect();
    let mut log = Vec::new();
    benders::write_iteration_log(&stable, &mut log).unwrap();
    let mut traj = Vec::new();
    benders::write_trajectory(&s.trajectory, &mut traj).unwrap();
    (log, traj)
}

fn criterion_8() -> Outcome {
    let run = || {
        let (sol, _) = cep_mp(4);
        let mut doc = Vec::new();
        save_mp(&sol, &mut doc).unwrap();
        let g = cep_graph(4, 10, 1);
        let cfg = BendersConfig { oracle_mode: OracleMode::MpSurrogate, ..Default::default() };
        let st = benders::solve(&g, &cfg, Some(&sol)).unwrap();
        let (log, traj) = log_bytes(&st);
        (doc, log, traj)
    };
    let (a, b) = (run(), run());
    check(
        a.0 == b.0 && a.1 == b.1 && a.2 == b.2,
        format!(
            "mp document identical: {}, iteration log (timing columns excluded) identical: {}, trajectory identical: {}",
            a.0 == b.0,
            a.1 == b.1,
            a.2 == b.2
        ),
    )
}

fn criterion_9(set: &RunSet) -> Outcome {
    let (sol, _) = cep_mp(4);
    let mut rows = 0;
    let mut bad = 0;
    for (_, o, s) in &set.runs {
        if *o == OracleMode::Exact {
            continue;
        }
        for row in &s.trajectory {
            rows += 1;
            let ok = match row.region {
                Some(r) => r < sol.regions.len() && sol.locate_region(&row.theta).ok() == Some(r),
                None => false,
            };
            if !ok {
                bad += 1;
            }
        }
    }
    check(rows > 0 && bad == 0, format!("{rows} trajectory rows from mp runs, {bad} invalid or not reproduced"))
}

fn main() {
    // Criterion 7 exercises the kernels directly; the rest share the CEP runs.
    let set = criterion_3_runs();
    let results = [
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3(&set)),
        (4, criterion_4(&set)),
        (5, criterion_5(&set)),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9(&set)),
    ];
    let mut failed = 0;
    for (n, r) in &results {
        let tag = match (r.pass, r.flag_only) {
            (true, _) => "PASS",
            (false, true) => "FLAG",
            (false, false) => {
                failed += 1;
                "FAIL"
            }
        };
        println!("criterion {n}: {tag} - {}", r.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
