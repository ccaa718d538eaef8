//! Command-line driver: enumerate the CEP mp-LP, run Benders, benchmark oracles.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mpbenders::benders::{self, BendersConfig, BendersError, BendersState, CutMode, ExactOracle, MpOracle, OracleMode, SubproblemOracle};
use mpbenders::cep::{build_graph, build_subproblem_spec, default_data, sample_scenarios, MarketSample};
use mpbenders::milp::MilpError;
use mpbenders::mplp::{embed_subproblem, enumerate_regions, load_mp, save_mp, MpError, MpSolution};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_GAP_OPEN: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const MP_FILE: &str = "mp_solution.json";
pub const REPORT_FILE: &str = "run_report.json";
pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const BENCH_FILE: &str = "bench.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MpError> for CliError {
    fn from(e: MpError) -> Self {
        match e {
            MpError::Lp(_) | MpError::NoRegionFound { .. } | MpError::EmptySolution => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<BendersError> for CliError {
    fn from(e: BendersError) -> Self {
        match e {
            BendersError::Config(_) | BendersError::Graph(_) => CliError::Input(e.to_string()),
            BendersError::Mp(m) => m.into(),
            BendersError::Milp(MilpError::InvalidBinary(_)) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutArg {
    Multi,
    Single,
}

impl From<CutArg> for CutMode {
    fn from(c: CutArg) -> Self {
        match c {
            CutArg::Multi => CutMode::MultiCut,
            CutArg::Single => CutMode::SingleCut,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleArg {
    Exact,
    Mp,
    MpFallback,
}

impl From<OracleArg> for OracleMode {
    fn from(o: OracleArg) -> Self {
        match o {
            OracleArg::Exact => OracleMode::Exact,
            OracleArg::Mp => OracleMode::MpSurrogate,
            OracleArg::MpFallback => OracleMode::MpWithExactFallback,
        }
    }
}

/// Instance configuration, from a file and/or flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub scenarios: usize,
    pub seed: u64,
    pub cut_mode: CutArg,
    pub oracle_mode: OracleArg,
    pub tol: f64,
    pub max_iter: usize,
    pub alpha_lower_bound: f64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            horizon: 4,
            scenarios: 10,
            seed: 1,
            cut_mode: CutArg::Multi,
            oracle_mode: OracleArg::Exact,
            tol: benders::DEFAULT_TOL,
            max_iter: benders::DEFAULT_MAX_ITER,
            alpha_lower_bound: benders::DEFAULT_ALPHA_LOWER_BOUND,
        }
    }
}

impl InstanceConfig {
    /// Reads a TOML file (by extension) or a JSON file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.horizon == 0 {
            return Err(CliError::Input("T must be at least 1".into()));
        }
        if self.scenarios == 0 {
            return Err(CliError::Input("K must be at least 1".into()));
        }
        self.benders().validate().map_err(|e| CliError::Input(e.to_string()))
    }

    pub fn benders(&self) -> BendersConfig {
        BendersConfig {
            cut_mode: self.cut_mode.into(),
            oracle_mode: self.oracle_mode.into(),
            tol: self.tol,
            max_iter: self.max_iter,
            alpha_lower_bound: self.alpha_lower_bound,
            probabilities: Vec::new(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mpbenders", version, about = "Benders decomposition with multi-parametric LP subproblem surrogates")]
pub struct Cli {
    /// Instance configuration file (JSON, or TOML by extension); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate the critical regions of the CEP subproblem family and save them.
    Mpsolve(Common),
    /// Run Benders decomposition on a CEP instance.
    Benders(Common),
    /// Time the exact and mp oracles over a grid of instances.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub cuts: Option<CutArg>,
    #[arg(long, value_enum)]
    pub oracle: Option<OracleArg>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_lower_bound: Option<f64>,
    /// mp-solution document: written by mpsolve, read by benders.
    #[arg(long)]
    pub mp_file: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated horizons; defaults to the single configured one.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Vec<usize>,
    /// Comma-separated scenario counts.
    #[arg(long, value_delimiter = ',', default_values_t = [50, 200])]
    pub scenario_grid: Vec<usize>,
    /// Cut modes to run.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [CutArg::Multi, CutArg::Single])]
    pub cut_grid: Vec<CutArg>,
}

impl Common {
    pub fn resolve(&self, file: Option<&Path>) -> Result<InstanceConfig, CliError> {
        let mut cfg = match file {
            Some(p) => InstanceConfig::load(p)?,
            None => InstanceConfig::default(),
        };
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.scenarios {
            cfg.scenarios = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.cuts {
            cfg.cut_mode = v;
        }
        if let Some(v) = self.oracle {
            cfg.oracle_mode = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.alpha_lower_bound {
            cfg.alpha_lower_bound = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool_version: String,
    pub generated_unix_s: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_s: f64,
    pub master_s: f64,
    pub subproblem_s: f64,
    /// Region enumeration, when this run performed it.
    pub enumeration_s: Option<f64>,
    pub evaluations: usize,
    pub mean_evaluation_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub metadata: Metadata,
    pub config: InstanceConfig,
    pub converged: bool,
    /// Present iff the run converged.
    pub objective: Option<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub rel_gap: f64,
    pub iterations: usize,
    pub regions: Option<usize>,
    pub timings: Timings,
    pub iteration_log: String,
    pub trajectory: String,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Enumerates the mp-LP shared by every CEP subproblem of horizon `t`.
pub fn enumerate_cep(horizon: usize) -> Result<(MpSolution, f64), CliError> {
    let data = default_data(horizon);
    let spec = build_subproblem_spec(&data, &MarketSample::mean(&data, 0), 0, 0);
    let (mp, _) = embed_subproblem(&spec)?;
    let t = Instant::now();
    let sol = enumerate_regions(&mp)?;
    Ok((sol, t.elapsed().as_secs_f64()))
}

pub fn cmd_mpsolve(cfg: &InstanceConfig, common: &Common) -> Result<i32, CliError> {
    fs::create_dir_all(&common.out_dir)?;
    let (sol, secs) = enumerate_cep(cfg.horizon)?;
    let path = common.mp_file.clone().unwrap_or_else(|| common.out_dir.join(MP_FILE));
    let mut w = create(&path)?;
    save_mp(&sol, &mut w)?;
    w.flush()?;
    println!("regions: {}", sol.regions.len());
    println!("enumeration_s: {secs:.6}");
    println!("written: {}", path.display());
    Ok(EXIT_CONVERGED)
}

pub fn cmd_benders(cfg: &InstanceConfig, common: &Common) -> Result<i32, CliError> {
    fs::create_dir_all(&common.out_dir)?;
    let start = Instant::now();
    let data = default_data(cfg.horizon);
    let graph = build_graph(&data, &sample_scenarios(&data, cfg.scenarios, cfg.seed));
    let bcfg = cfg.benders();
    let mut enumeration_s = None;
    let mp = match (bcfg.oracle_mode, &common.mp_file) {
        (OracleMode::Exact, _) => None,
        (_, Some(path)) => {
            let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            Some(load_mp(BufReader::new(f))?)
        }
        (_, None) => {
            let (sol, secs) = enumerate_cep(cfg.horizon)?;
            enumeration_s = Some(secs);
            let mut w = create(&common.out_dir.join(MP_FILE))?;
            save_mp(&sol, &mut w)?;
            w.flush()?;
            Some(sol)
        }
    };
    let state = benders::solve(&graph, &bcfg, mp.as_ref())?;
    write_run_outputs(&state, &common.out_dir)?;
    let report = RunReport {
        metadata: Metadata { tool_version: env!("CARGO_PKG_VERSION").into(), generated_unix_s: now_unix() },
        config: cfg.clone(),
        converged: state.converged,
        objective: state.converged.then_some(state.ub),
        lower_bound: state.lb,
        upper_bound: state.ub,
        rel_gap: state.rel_gap(),
        iterations: state.iteration,
        regions: mp.as_ref().map(|m| m.regions.len()),
        timings: Timings {
            total_s: start.elapsed().as_secs_f64(),
            master_s: state.log.iter().map(|r| r.master_time_s).sum(),
            subproblem_s: state.log.iter().map(|r| r.sub_time_s).sum(),
            enumeration_s,
            evaluations: state.evaluations,
            mean_evaluation_s: state.eval_time_s / state.evaluations.max(1) as f64,
        },
        iteration_log: ITERATIONS_FILE.into(),
        trajectory: TRAJECTORY_FILE.into(),
    };
    let mut w = create(&common.out_dir.join(REPORT_FILE))?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    println!("converged: {}", state.converged);
    println!("objective: {:.10e}", state.ub);
    println!("lower_bound: {:.10e}", state.lb);
    println!("iterations: {}", state.iteration);
    Ok(if state.converged { EXIT_CONVERGED } else { EXIT_GAP_OPEN })
}

fn write_run_outputs(state: &BendersState, dir: &Path) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Input(e.to_string());
    benders::write_iteration_log(&state.log, create(&dir.join(ITERATIONS_FILE))?).map_err(csv_err)?;
    benders::write_trajectory(&state.trajectory, create(&dir.join(TRAJECTORY_FILE))?).map_err(csv_err)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub scenarios: usize,
    pub cut_mode: CutArg,
    pub oracle: OracleArg,
    pub converged: bool,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub eval_total_s: f64,
    pub eval_mean_s: f64,
    pub enumeration_s: f64,
    /// Evaluation time plus enumeration, per evaluation.
    pub amortized_mean_s: f64,
    pub regions: usize,
}

/// Runs every (T, K, cut mode) cell with both oracles. Oracles are timed
/// on the calling thread, one evaluation at a time.
pub fn cmd_bench(args: &BenchArgs, file: Option<&Path>) -> Result<i32, CliError> {
    let base = args.common.resolve(file)?;
    fs::create_dir_all(&args.common.out_dir)?;
    let horizons = if args.horizons.is_empty() { vec![base.horizon] } else { args.horizons.clone() };
    let mut rows = Vec::new();
    let mut all_converged = true;
    for &t in &horizons {
        let (sol, enum_s) = enumerate_cep(t)?;
        for &k in &args.scenario_grid {
            let data = default_data(t);
            let graph = build_graph(&data, &sample_scenarios(&data, k, base.seed));
            let part = graph.extract_benders_partition().map_err(|e| CliError::Input(e.to_string()))?;
            for &cut in &args.cut_grid {
                for oracle in [OracleArg::Exact, OracleArg::Mp] {
                    let cfg = InstanceConfig { horizon: t, scenarios: k, cut_mode: cut, oracle_mode: oracle, ..base.clone() };
                    let bcfg = cfg.benders();
                    let exact = ExactOracle::new(&part.subproblems);
                    let surrogate;
                    let inner: &dyn SubproblemOracle = match oracle {
                        OracleArg::Exact => &exact,
                        _ => {
                            surrogate = MpOracle::new(&sol, &part.subproblems, true)?;
                            &surrogate
                        }
                    };
                    let timed = Sequential::new(inner);
                    let state = benders::run_partition(&part, &graph.scenario_probabilities, &bcfg, &timed)?;
                    all_converged &= state.converged;
                    let (n, total) = timed.totals();
                    let enumeration_s = if oracle == OracleArg::Exact { 0.0 } else { enum_s };
                    let row = BenchRow {
                        horizon: t,
                        scenarios: k,
                        cut_mode: cut,
                        oracle,
                        converged: state.converged,
                        objective: state.ub,
                        iterations: state.iteration,
                        evaluations: n,
                        eval_total_s: total,
                        eval_mean_s: total / n.max(1) as f64,
                        enumeration_s,
                        amortized_mean_s: (total + enumeration_s) / n.max(1) as f64,
                        regions: if oracle == OracleArg::Exact { 0 } else { sol.regions.len() },
                    };
                    println!(
                        "T={t} K={k} cuts={cut:?} oracle={oracle:?} objective={:.10e} iterations={} eval_mean_s={:.3e}",
                        row.objective, row.iterations, row.eval_mean_s
                    );
                    rows.push(row);
                }
            }
        }
    }
    let mut w = csv::Writer::from_writer(create(&args.common.out_dir.join(BENCH_FILE))?);
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
    }
    w.flush()?;
    Ok(if all_converged { EXIT_CONVERGED } else { EXIT_GAP_OPEN })
}

/// Serializes evaluations behind a lock and sums their wall time, so the
/// per-evaluation figures are not distorted by parallel contention.
struct Sequential<'a> {
    inner: &'a dyn SubproblemOracle,
    stats: std::sync::Mutex<(usize, f64)>,
}

impl<'a> Sequential<'a> {
    fn new(inner: &'a dyn SubproblemOracle) -> Self {
        Sequential { inner, stats: std::sync::Mutex::new((0, 0.0)) }
    }

    fn totals(&self) -> (usize, f64) {
        *self.stats.lock().unwrap()
    }
}

impl SubproblemOracle for Sequential<'_> {
    fn evaluate(&self, sub: usize, z: &[f64]) -> Result<benders::Evaluation, BendersError> {
        let mut stats = self.stats.lock().unwrap();
        let t = Instant::now();
        let ev = self.inner.evaluate(sub, z);
        stats.0 += 1;
        stats.1 += t.elapsed().as_secs_f64();
        ev
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_CONVERGED };
            let _ = e.print();
            return code;
        }
    };
    let file = cli.config.as_deref();
    let result = match &cli.command {
        Command::Mpsolve(c) => c.resolve(file).and_then(|cfg| cmd_mpsolve(&cfg, c)),
        Command::Benders(c) => c.resolve(file).and_then(|cfg| cmd_benders(&cfg, c)),
        Command::Bench(b) => cmd_bench(b, file),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
