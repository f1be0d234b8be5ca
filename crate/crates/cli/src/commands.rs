use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use clocksim::analysis::{
    distribution_surface, sweep_query_with, write_sweep_csv, CiMethod, Comparison, PathMode, Predicate, Query,
};
use clocksim::phase::{
    circular_summary, detect_phases_series, write_phase_rows, PhaseConfig, PhaseResult, PHASE_CSV_HEADER,
};
use clocksim::robustness::{self as dme, Cohort, MeanEngine, MutationSpec, SweepConfig};
use clocksim::ssa::{self, Ensemble, EnsembleOptions, LightMode, Method, Retention, SsaConfig};
use clocksim::steady::{find_fixed_point, write_report, FixedPointConfig};
use clocksim::trace::fmt_value;
use clocksim::{builtin_ostreococcus, parse_network, Network, OdeConfig};
use serde::Serialize;
use serde_json::json;

use crate::light::build_schedule;
use crate::CliError;

/// Upper bound on retained trace memory.
const MAX_TRACE_BYTES: f64 = 2.0 * 1024.0 * 1024.0 * 1024.0;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the ODEs or run stochastic simulations.
    Simulate(SimulateArgs),
    /// Analyse the output of `simulate`.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Locate the constant-dark and constant-light fixed points.
    FixedPoints(FixedPointArgs),
    /// Mutational-robustness sweep of the clock phase.
    Dme(DmeArgs),
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Probability surface of an observable over levels and time.
    Distribution(DistributionArgs),
    /// Estimate the probability of a temporal query, optionally swept over a bound.
    Query(QueryArgs),
    /// Peak/trough detection and phase statistics.
    Phase(PhaseArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Ode,
    Ssa,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Direct,
    NextReaction,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LightModeArg {
    /// Light switches exactly at dawn and dusk.
    Switch,
    /// Dawn and dusk are driven by a stochastic tick counter.
    Clock,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum RetainArg {
    Stats,
    Traces,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// `builtin` or a model file.
    #[arg(long, default_value = "builtin")]
    model: String,
    /// System size override (molecules per concentration unit).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
}

impl ModelArgs {
    fn load(&mut self) -> Result<Network, CliError> {
        let net = if self.model == "builtin" {
            builtin_ostreococcus()
        } else {
            let path = fs::canonicalize(&self.model)
                .map_err(|e| CliError::Config(format!("model: cannot open `{}`: {e}", self.model)))?;
            let text = fs::read_to_string(&path)?;
            self.model = path.display().to_string();
            parse_network(&text)?
        };
        Ok(match self.omega {
            Some(o) => net.rescale(o)?,
            None => net,
        })
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// TOML config file (or a manifest.json from an earlier run).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// DD, LL, `LD <light> <dark>` or `PERIODIC <dawn> <dusk>`.
    #[arg(long, num_args = 1..=3, default_values = ["DD"])]
    light: Vec<String>,
    /// Switch to the `--then` protocol at this time (h).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    switch_at: Option<f64>,
    #[arg(long, num_args = 1..=3)]
    #[serde(skip_serializing_if = "Option::is_none")]
    then: Option<Vec<String>>,
    #[arg(long, default_value_t = 240.0)]
    t_end: f64,
    #[arg(long, value_enum, default_value = "ode")]
    engine: Engine,
    #[arg(long, value_enum, default_value = "next-reaction")]
    method: MethodArg,
    /// Random seed; a fresh one is chosen and printed when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, value_enum, default_value = "switch")]
    light_mode: LightModeArg,
    /// Clock ticks per hour for `--light-mode clock`.
    #[arg(long, default_value_t = 60.0)]
    tick_rate: f64,
    /// Output grid spacing (h).
    #[arg(long, default_value_t = 0.1)]
    grid: f64,
    /// First recorded time (h).
    #[arg(long, default_value_t = 0.0)]
    record_start: f64,
    /// Keep every reaction event in this window (enables exact path queries).
    #[arg(long, num_args = 2, value_names = ["T0", "T1"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    event_window: Option<Vec<f64>>,
    /// What to keep of each stochastic run besides the summary statistics.
    #[arg(long, value_enum, default_value = "traces")]
    retain: RetainArg,
    #[arg(long, default_value_t = 1e-6)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-9)]
    atol: f64,
    #[arg(long, default_value_t = 1.0)]
    max_step: f64,
    /// Output directory.
    #[arg(long, env = "CLOCKSIM_OUT", default_value = "clocksim-out")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// `simulate` output directory, ensemble file or trace CSV.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DistributionArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "Total_LHY")]
    obs: String,
    /// Time range (h).
    #[arg(long = "t", num_args = 2, value_names = ["T0", "T1"])]
    t: Vec<f64>,
    /// Level range.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    levels: Vec<i64>,
    #[arg(long, env = "CLOCKSIM_OUT", default_value = "clocksim-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiArg {
    Normal,
    Wilson,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathArg {
    Auto,
    EventExact,
    Grid,
}

#[derive(Debug, Args, Serialize)]
pub struct QueryArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "Total_LHY")]
    obs: String,
    /// The predicate must hold throughout [T1, T2].
    #[arg(long, num_args = 2, value_names = ["T1", "T2"], conflicts_with = "at")]
    #[serde(skip_serializing_if = "Option::is_none")]
    globally: Option<Vec<f64>>,
    /// The predicate must hold at time T.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    at: Option<f64>,
    /// Bounds: a value, a list `a,b,c` or a range `lo..hi[:step]`.
    #[arg(long, group = "cmp")]
    #[serde(skip_serializing_if = "Option::is_none")]
    le: Option<String>,
    #[arg(long, group = "cmp")]
    #[serde(skip_serializing_if = "Option::is_none")]
    lt: Option<String>,
    #[arg(long, group = "cmp")]
    #[serde(skip_serializing_if = "Option::is_none")]
    ge: Option<String>,
    #[arg(long, group = "cmp")]
    #[serde(skip_serializing_if = "Option::is_none")]
    gt: Option<String>,
    #[arg(long, group = "cmp")]
    #[serde(skip_serializing_if = "Option::is_none")]
    eq: Option<String>,
    #[arg(long, value_enum, default_value = "normal")]
    ci: CiArg,
    #[arg(long, value_enum, default_value = "auto")]
    path: PathArg,
    #[arg(long, env = "CLOCKSIM_OUT", default_value = "clocksim-out")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PhaseArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "Total_LHY")]
    obs: String,
    /// Analysis window (h); defaults to the recorded horizon.
    #[arg(long, num_args = 2, value_names = ["T0", "T1"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<Vec<f64>>,
    #[arg(long, default_value_t = 24.0)]
    period: f64,
    /// Lower threshold as a fraction of the window range.
    #[arg(long, default_value_t = 0.2)]
    low: f64,
    /// Upper threshold as a fraction of the window range.
    #[arg(long, default_value_t = 0.35)]
    high: f64,
    /// Moving-average width in samples.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing: Option<usize>,
    #[arg(long, env = "CLOCKSIM_OUT", default_value = "clocksim-out")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FixedPointArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Skip the Newton polish after the simplex search.
    #[arg(long)]
    no_polish: bool,
    #[arg(long, env = "CLOCKSIM_OUT", default_value = "clocksim-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    SingleCell,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanEngineArg {
    Ode,
    Ssa,
}

#[derive(Debug, Args, Serialize)]
pub struct DmeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long, num_args = 1..=3, default_values = ["LD", "12", "12"])]
    light: Vec<String>,
    #[arg(long, value_enum, default_value = "single-cell")]
    mode: ModeArg,
    /// Mutant cohort size (0 runs the wild type only).
    #[arg(long, default_value_t = 1000)]
    mutants: usize,
    /// Wild-type cohort size; defaults to the mutant count, or 1000.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    wildtype: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    factor_low: f64,
    #[arg(long, default_value_t = 1.5)]
    factor_high: f64,
    /// Draw a separate factor for each mutated parameter.
    #[arg(long)]
    independent: bool,
    /// Parameters to mutate.
    #[arg(long, num_args = 1.., default_values = ["D_mrna_toc1", "D_mrna_lhy"])]
    targets: Vec<String>,
    #[arg(long, value_enum, default_value = "ode")]
    mean_engine: MeanEngineArg,
    #[arg(long, default_value_t = 50e6)]
    mean_omega: f64,
    #[arg(long, default_value = "Total_TOC1")]
    marker: String,
    #[arg(long, default_value_t = 240.0)]
    t_end: f64,
    /// Peaks in this window are pooled (h).
    #[arg(long, num_args = 2, default_values_t = [120.0, 240.0])]
    pool: Vec<f64>,
    /// Factor bins for the aggregate table.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Phase histogram bins per period.
    #[arg(long, default_value_t = 48)]
    histogram_bins: usize,
    #[arg(long, env = "CLOCKSIM_OUT", default_value = "clocksim-out")]
    out: PathBuf,
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(AnalyzeCommand::Distribution(a)) => distribution(a),
        Command::Analyze(AnalyzeCommand::Query(a)) => query(a),
        Command::Analyze(AnalyzeCommand::Phase(a)) => phase(a),
        Command::FixedPoints(a) => fixed_points(a),
        Command::Dme(a) => run_dme(a),
    }
}

fn fresh_seed(seed: &mut Option<u64>) -> u64 {
    *seed.get_or_insert_with(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

/// Output directory plus the list of files written to it.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    /// Writes `manifest.json`: the fully resolved settings, which `--config`
    /// accepts to repeat the run.
    fn finish<T: Serialize>(mut self, command: &str, config: &T, extra: serde_json::Value) -> Result<(), CliError> {
        let manifest = json!({
            "tool": "clocksim",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "details": extra,
            "outputs": self.files,
        });
        let mut w = self.create("manifest.json")?;
        serde_json::to_writer_pretty(&mut w, &manifest).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn simulate(mut a: SimulateArgs) -> Result<(), CliError> {
    let net = a.model.load()?;
    let sched = build_schedule(&a.light, a.switch_at, a.then.as_deref())?;
    let mut out = Outputs::new(&a.out)?;
    let schema = net.schema();
    match a.engine {
        Engine::Ode => {
            let cfg = OdeConfig {
                rel_tol: a.rtol,
                abs_tol: a.atol,
                max_step: a.max_step,
                output_grid: a.grid,
                initial_step: None,
            };
            let trace = clocksim::integrate(&net, &sched, a.t_end, &cfg)?;
            let mut w = out.create("trace.csv")?;
            trace.write_csv(&schema, &mut w)?;
            w.flush()?;
            let details = json!({"schedule": sched, "ode": cfg});
            out.finish("simulate", &a, details)
        }
        Engine::Ssa => {
            let seed = fresh_seed(&mut a.seed);
            if a.runs == 0 {
                return Err(CliError::Config("runs: need at least one run".into()));
            }
            let cfg = SsaConfig {
                method: match a.method {
                    MethodArg::Direct => Method::Direct,
                    MethodArg::NextReaction => Method::NextReaction,
                },
                seed,
                light_mode: match a.light_mode {
                    LightModeArg::Switch => LightMode::DeterministicSwitch,
                    LightModeArg::Clock => LightMode::StochasticClock { tick_rate: a.tick_rate },
                },
                record_grid: a.grid,
                t_end: a.t_end,
                record_start: a.record_start,
                event_window: a.event_window.as_ref().map(|w| (w[0], w[1])),
            };
            cfg.validate()?;
            let keep = a.retain == RetainArg::Traces || a.runs == 1;
            let bytes = a.runs as f64 * cfg.grid().len as f64 * net.species().len() as f64 * 4.0;
            if keep && bytes > MAX_TRACE_BYTES {
                return Err(CliError::Config(format!(
                    "retain: keeping {} runs on this grid needs {:.1} GiB; use a coarser --grid, a later \
                     --record-start or --retain stats",
                    a.runs,
                    bytes / MAX_TRACE_BYTES * 2.0
                )));
            }
            let opts = EnsembleOptions {
                n_runs: a.runs,
                base_seed: seed,
                retention: if keep { Retention::Traces } else { Retention::Stats },
            };
            let ens = ssa::simulate_ensemble(&net, &sched, &cfg, &opts)?;
            let mut w = out.create("stats.csv")?;
            ens.write_stats_csv(&mut w)?;
            w.flush()?;
            let mut w = out.create("ensemble.bin")?;
            ens.write_binary(&mut w)?;
            w.flush()?;
            if a.runs == 1 {
                let mut w = out.create("trace.csv")?;
                ens.trace(0).expect("single run retained").write_csv(&schema, &mut w)?;
                w.flush()?;
            }
            let details = json!({
                "schedule": sched,
                "ssa": cfg,
                "total_events": ens.total_events(),
                "streams": "run i uses ChaCha8 stream i of the seed",
            });
            out.finish("simulate", &a, details)
        }
    }
}

fn ensemble_path(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("ensemble.bin")
    } else {
        input.to_path_buf()
    }
}

fn read_ensemble(input: &Path) -> Result<Ensemble, CliError> {
    let path = ensemble_path(input);
    let f = File::open(&path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot open ensemble {}: {e}", path.display()))
    })?;
    Ok(Ensemble::read_binary(std::io::BufReader::new(f))?)
}

fn distribution(a: DistributionArgs) -> Result<(), CliError> {
    let ens = read_ensemble(&a.input.input)?;
    if a.t.len() != 2 || a.levels.len() != 2 {
        return Err(CliError::Config("distribution: --t T0 T1 and --levels LO HI are required".into()));
    }
    let s = distribution_surface(&ens, &a.obs, a.t[0], a.t[1], a.levels[0], a.levels[1])?;
    let mut out = Outputs::new(&a.out)?;
    let mut w = out.create("distribution.csv")?;
    s.write_matrix_csv(&mut w)?;
    w.flush()?;
    let mut w = out.create("moments.csv")?;
    s.write_moments_csv(&mut w)?;
    w.flush()?;
    out.finish("analyze distribution", &a, json!({}))
}

/// `5`, `0,2,4` or `0..20:2` (inclusive).
fn parse_bounds(s: &str) -> Result<Vec<i64>, CliError> {
    let bad = || CliError::Config(format!("bounds: cannot parse `{s}`"));
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, st)) => (h, st),
            None => (rest, "1"),
        };
        let (lo, hi, step): (i64, i64, i64) = (
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if step <= 0 || hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).step_by(step as usize).collect());
    }
    s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

fn query(a: QueryArgs) -> Result<(), CliError> {
    let ens = read_ensemble(&a.input.input)?;
    let (spec, make): (&str, fn(i64) -> Comparison) = match (&a.le, &a.lt, &a.ge, &a.gt, &a.eq) {
        (Some(s), ..) => (s, Comparison::Le),
        (_, Some(s), ..) => (s, Comparison::Lt),
        (_, _, Some(s), ..) => (s, Comparison::Ge),
        (_, _, _, Some(s), _) => (s, Comparison::Gt),
        (.., Some(s)) => (s, Comparison::Eq),
        _ => return Err(CliError::Config("query: one of --le/--lt/--ge/--gt/--eq is required".into())),
    };
    let bounds = parse_bounds(spec)?;
    let predicate = Predicate::new(a.obs.clone(), make(bounds[0]));
    let q = match (&a.globally, a.at) {
        (Some(w), None) => Query::Globally {
            t1: w[0],
            t2: w[1],
            predicate,
        },
        (None, Some(t)) => Query::EventuallyAt { t, predicate },
        _ => return Err(CliError::Config("query: give exactly one of --globally T1 T2 or --at T".into())),
    };
    let ci = match a.ci {
        CiArg::Normal => CiMethod::Normal,
        CiArg::Wilson => CiMethod::Wilson,
    };
    let mode = match a.path {
        PathArg::Auto => PathMode::Auto,
        PathArg::EventExact => PathMode::EventExact,
        PathArg::Grid => PathMode::Grid,
    };
    let b: Vec<Option<i64>> = bounds.iter().map(|&x| Some(x)).collect();
    let rows: Vec<(i64, _)> = sweep_query_with(&ens, &q, &b, ci, mode)?
        .into_iter()
        .map(|(b, e)| (b.expect("bound given"), e))
        .collect();
    let mut out = Outputs::new(&a.out)?;
    let mut w = out.create("query.csv")?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    out.finish("analyze query", &a, json!({"query": q, "runs": ens.n_runs()}))
}

/// Time column and one named column from a trace CSV.
fn read_trace_column(path: &Path, name: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    let io = |e: csv::Error| CliError::Io(std::io::Error::other(format!("{}: {e}", path.display())));
    let headers = rdr.headers().map_err(io)?.clone();
    let col = headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Config(format!("obs: no column `{name}` in {}", path.display())))?;
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(io)?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CliError::Io(std::io::Error::other(format!("{}: bad number `{s}`", path.display()))))
        };
        t.push(num(&rec[0])?);
        v.push(num(&rec[col])?);
    }
    Ok((t, v))
}

fn phase(a: PhaseArgs) -> Result<(), CliError> {
    let input = &a.input.input;
    let csv_input = if input.is_dir() {
        let bin = input.join("ensemble.bin");
        (!bin.exists()).then(|| input.join("trace.csv"))
    } else {
        input.extension().is_some_and(|e| e == "csv").then(|| input.clone())
    };
    let series: Vec<(Vec<f64>, Vec<f64>)> = match csv_input {
        Some(p) => vec![read_trace_column(&p, &a.obs)?],
        None => {
            let ens = read_ensemble(input)?;
            if !ens.has_traces() {
                return Err(CliError::Config(
                    "phase: the ensemble has no retained traces; simulate with --retain traces".into(),
                ));
            }
            let obs = ens
                .schema()
                .column(&a.obs)
                .ok_or_else(|| CliError::Config(format!("obs: unknown observable `{}`", a.obs)))?;
            (0..ens.n_runs())
                .map(|r| {
                    let tr = ens.trace(r).expect("traces retained");
                    (tr.times().to_vec(), tr.observable(&obs))
                })
                .collect()
        }
    };
    let mut results: Vec<PhaseResult> = Vec::new();
    for (t, v) in &series {
        let window = match &a.window {
            Some(w) => (w[0], w[1]),
            None => (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(0.0)),
        };
        let cfg = PhaseConfig {
            low_frac: a.low,
            high_frac: a.high,
            window,
            period: a.period,
            smoothing: a.smoothing,
        };
        results.push(detect_phases_series(t, v, &cfg)?);
    }
    let mut out = Outputs::new(&a.out)?;
    let mut w = out.create("phase.csv")?;
    writeln!(w, "{PHASE_CSV_HEADER}")?;
    for (run, r) in results.iter().enumerate() {
        write_phase_rows(run, r, &mut w)?;
    }
    w.flush()?;
    let pooled: Vec<f64> = results.iter().flat_map(|r| r.peak_phases()).collect();
    let mut w = out.create("phase_summary.csv")?;
    writeln!(w, "runs,peaks,mean_phase_h,circular_sd_h,circular_variance")?;
    match circular_summary(&pooled, a.period) {
        Some(s) => writeln!(
            w,
            "{},{},{},{},{}",
            results.len(),
            s.n,
            fmt_value(s.mean),
            fmt_value(s.sd),
            fmt_value(s.variance)
        )?,
        None => writeln!(w, "{},0,,,", results.len())?,
    }
    w.flush()?;
    out.finish("analyze phase", &a, json!({}))
}

fn fixed_points(mut a: FixedPointArgs) -> Result<(), CliError> {
    let net = a.model.load()?;
    let cfg = FixedPointConfig {
        tol: a.tol,
        restarts: a.restarts,
        polish: !a.no_polish,
        ..FixedPointConfig::default()
    };
    let mut points = Vec::new();
    for (light, sched) in [(0.0, clocksim::LightSchedule::ConstantDark), (1.0, clocksim::LightSchedule::ConstantLight)] {
        // start the search from the end of a long deterministic run
        let settle = clocksim::integrate(&net, &sched, 400.0, &OdeConfig { output_grid: 400.0, ..OdeConfig::default() })?;
        let guess: Vec<f64> = settle.last_state().expect("non-empty trace").to_vec();
        points.push(find_fixed_point(&net, light, &guess, &cfg)?);
    }
    let mut out = Outputs::new(&a.out)?;
    let mut w = out.create("fixed_points.txt")?;
    write_report(&net, &points, &mut w)?;
    w.flush()?;
    let mut w = out.create("eigenvalues.csv")?;
    writeln!(w, "light,classification,k,re,im")?;
    for p in &points {
        for (k, &(re, im)) in p.eigenvalues.iter().enumerate() {
            let label = if p.light == 0.0 { "DD" } else { "LL" };
            writeln!(w, "{label},{:?},{k},{},{}", p.classification, fmt_value(re), fmt_value(im))?;
        }
    }
    w.flush()?;
    let mut w = out.create("states.csv")?;
    writeln!(w, "light,species,value")?;
    for p in &points {
        let label = if p.light == 0.0 { "DD" } else { "LL" };
        for (s, &v) in net.species().iter().zip(&p.state) {
            writeln!(w, "{label},{},{}", s.name, fmt_value(v))?;
        }
    }
    w.flush()?;
    let residuals: Vec<f64> = points.iter().map(|p| p.residual).collect();
    out.finish("fixed-points", &a, json!({"residuals": residuals}))
}

fn run_dme(mut a: DmeArgs) -> Result<(), CliError> {
    let net = a.model.load()?;
    let sched = build_schedule(&a.light, None, None)?;
    let seed = fresh_seed(&mut a.seed);
    if a.pool.len() != 2 {
        return Err(CliError::Config("pool: expected two times".into()));
    }
    if a.histogram_bins == 0 {
        return Err(CliError::Config("histogram_bins: must be at least 1".into()));
    }
    let spec = MutationSpec {
        targets: a.targets.clone(),
        low: a.factor_low,
        high: a.factor_high,
        independent: a.independent,
        fixed_factor: None,
    };
    let base = SweepConfig {
        spec: spec.clone(),
        mode: match a.mode {
            ModeArg::SingleCell => dme::Mode::SingleCell,
            ModeArg::Mean => dme::Mode::Mean,
        },
        base_seed: seed,
        t_end: a.t_end,
        phase: PhaseConfig::default().with_window(0.0, a.t_end),
        marker: a.marker.clone(),
        pool_window: (a.pool[0], a.pool[1]),
        mean_engine: match a.mean_engine {
            MeanEngineArg::Ode => MeanEngine::Ode,
            MeanEngineArg::Ssa => MeanEngine::Ssa,
        },
        mean_omega: a.mean_omega,
        ..SweepConfig::default()
    };
    let n_wt = a.wildtype.unwrap_or(if a.mutants > 0 { a.mutants } else { 1000 });
    a.wildtype = Some(n_wt);
    let mut cohorts = vec![dme::run_sweep(&net, &sched, &SweepConfig { n_runs: n_wt, ..base.clone() }, Cohort::WildType)?];
    if a.mutants > 0 {
        cohorts.push(dme::run_sweep(&net, &sched, &SweepConfig { n_runs: a.mutants, ..base.clone() }, Cohort::Mutant)?);
    }

    let mut out = Outputs::new(&a.out)?;
    let mut w = out.create("dme_runs.csv")?;
    for (i, c) in cohorts.iter().enumerate() {
        c.write_records_csv(&mut w, i == 0)?;
    }
    w.flush()?;

    let mut w = out.create("dme_summary.csv")?;
    writeln!(w, "cohort,runs,failed,peaks,mean_phase_h,circular_sd_h,circular_variance")?;
    for c in &cohorts {
        let name = cohort_name(c.cohort);
        let (peaks, m, s, v) = match c.summary() {
            Some(s) => (s.n, fmt_value(s.mean), fmt_value(s.sd), fmt_value(s.variance)),
            None => (0, String::new(), String::new(), String::new()),
        };
        writeln!(w, "{name},{},{},{peaks},{m},{s},{v}", c.records.len(), c.failures())?;
    }
    w.flush()?;

    let mut w = out.create("dme_histogram.csv")?;
    writeln!(w, "cohort,phase_lo_h,phase_hi_h,count")?;
    for c in &cohorts {
        let width = c.period / a.histogram_bins as f64;
        for (b, n) in c.phase_histogram(a.histogram_bins).into_iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{n}",
                cohort_name(c.cohort),
                fmt_value(b as f64 * width),
                fmt_value((b + 1) as f64 * width)
            )?;
        }
    }
    w.flush()?;

    if let Some(m) = cohorts.iter().find(|c| c.cohort == Cohort::Mutant) {
        let bins = dme::bin_factor_vs_phase(m, &spec, a.bins)?;
        let mut w = out.create("dme_bins.csv")?;
        dme::write_bins_csv(&bins, &mut w)?;
        w.flush()?;
    }
    let failed: Vec<serde_json::Value> = cohorts
        .iter()
        .flat_map(|c| c.records.iter().filter(|r| r.error.is_some()))
        .map(|r| json!({"run": r.run, "cohort": cohort_name(r.cohort), "error": r.error}))
        .collect();
    out.finish("dme", &a, json!({"schedule": sched, "failed_runs": failed}))
}

fn cohort_name(c: Cohort) -> &'static str {
    match c {
        Cohort::WildType => "wildtype",
        Cohort::Mutant => "mutant",
    }
}
