//! Distribution of mutational effects: scale the mRNA degradation rates by a
//! random factor, simulate under a light–dark cycle and collect the phase of
//! the Total_TOC1 peaks.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LightSchedule, Network};
use crate::ode::{self, OdeConfig};
use crate::phase::{circular_summary, detect_phases, CircularSummary, PhaseConfig};
use crate::ssa::{self, Method, SsaConfig};
use crate::trace::fmt_value;

/// Mutation factors come from their own stream family so that they never
/// share random numbers with the simulations.
const FACTOR_SALT: u64 = 0x6d75_7461_6e74_7321;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cohort {
    WildType,
    Mutant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Stochastic runs at the network's own system size.
    SingleCell,
    /// Population average: a very large system size.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeanEngine {
    /// Deterministic integration (the large-Ω limit).
    Ode,
    /// Stochastic runs at the mean-mode system size.
    Ssa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub targets: Vec<String>,
    pub low: f64,
    pub high: f64,
    /// Draw one factor per target instead of a shared one.
    #[serde(default)]
    pub independent: bool,
    /// Overrides sampling with a fixed factor.
    #[serde(default)]
    pub fixed_factor: Option<f64>,
}

impl Default for MutationSpec {
    fn default() -> Self {
        MutationSpec {
            targets: vec!["D_mrna_toc1".into(), "D_mrna_lhy".into()],
            low: 0.5,
            high: 1.5,
            independent: false,
            fixed_factor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub spec: MutationSpec,
    pub mode: Mode,
    pub n_runs: usize,
    pub base_seed: u64,
    pub t_end: f64,
    pub phase: PhaseConfig,
    pub marker: String,
    /// Peaks inside this window are pooled.
    pub pool_window: (f64, f64),
    pub mean_engine: MeanEngine,
    pub mean_omega: f64,
    pub record_grid: f64,
    pub method: Method,
    pub ode: OdeConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            spec: MutationSpec::default(),
            mode: Mode::SingleCell,
            n_runs: 1000,
            base_seed: 0,
            t_end: 240.0,
            phase: PhaseConfig::default(),
            marker: "Total_TOC1".into(),
            pool_window: (120.0, 240.0),
            mean_engine: MeanEngine::Ode,
            mean_omega: 50e6,
            record_grid: 0.1,
            method: Method::NextReaction,
            ode: OdeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub cohort: Cohort,
    /// One factor per target (all equal unless sampled independently).
    pub factors: Vec<f64>,
    pub seed: u64,
    /// Pooled peak phases inside the pooling window.
    pub peak_phases: Vec<f64>,
    /// Phase of the first pooled peak.
    pub first_peak_phase: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn factor(&self) -> f64 {
        self.factors.first().copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cohort: Cohort,
    pub mode: Mode,
    pub period: f64,
    pub records: Vec<RunRecord>,
}

/// Factors for run `run` of a cohort.
pub fn sample_factors(spec: &MutationSpec, cohort: Cohort, base_seed: u64, run: usize) -> Vec<f64> {
    let k = if spec.independent { spec.targets.len() } else { 1 };
    let draw: Vec<f64> = match (cohort, spec.fixed_factor) {
        (_, Some(f)) => vec![f; k],
        (Cohort::WildType, None) => vec![1.0; k],
        (Cohort::Mutant, None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ FACTOR_SALT);
            rng.set_stream(run as u64);
            (0..k).map(|_| rng.gen_range(spec.low..=spec.high)).collect()
        }
    };
    if spec.independent {
        draw
    } else {
        vec![draw[0]; spec.targets.len()]
    }
}

fn mutate(net: &Network, spec: &MutationSpec, factors: &[f64]) -> Result<Network> {
    let mut out = net.clone();
    for (name, &f) in spec.targets.iter().zip(factors) {
        let base = *net
            .parameters()
            .get(name)
            .ok_or_else(|| Error::invalid(format!("mutation target `{name}` is not a parameter")))?;
        out = out.with_parameter(name, base * f)?;
    }
    Ok(out)
}

fn validate(cfg: &SweepConfig) -> Result<()> {
    cfg.phase.validate()?;
    let s = &cfg.spec;
    if s.targets.is_empty() {
        return Err(Error::invalid("no mutation targets"));
    }
    if !(s.low <= s.high && s.low > 0.0) {
        return Err(Error::invalid("factor range must satisfy 0 < low <= high"));
    }
    if matches!(s.fixed_factor, Some(f) if !(f > 0.0)) {
        return Err(Error::invalid("fixed factor must be positive"));
    }
    if !(cfg.t_end > 0.0) || !(cfg.mean_omega > 0.0) {
        return Err(Error::invalid("t_end and mean_omega must be positive"));
    }
    Ok(())
}

fn one_run(
    net: &Network,
    sched: &LightSchedule,
    cfg: &SweepConfig,
    cohort: Cohort,
    run: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let factors = sample_factors(&cfg.spec, cohort, cfg.base_seed, run);
    let mutant = mutate(net, &cfg.spec, &factors)?;
    let trace = match (cfg.mode, cfg.mean_engine) {
        (Mode::Mean, MeanEngine::Ode) => {
            let big = mutant.rescale(cfg.mean_omega)?;
            let ocfg = OdeConfig {
                output_grid: cfg.record_grid,
                ..cfg.ode
            };
            ode::integrate(&big, sched, cfg.t_end, &ocfg)?
        }
        (mode, _) => {
            let sim_net = match mode {
                Mode::Mean => mutant.rescale(cfg.mean_omega)?,
                Mode::SingleCell => mutant,
            };
            let scfg = SsaConfig {
                method: cfg.method,
                record_grid: cfg.record_grid,
                seed: cfg.base_seed,
                ..SsaConfig::new(cfg.t_end, cfg.base_seed)
            };
            let kin = ssa::engine::prepare(&sim_net, sched, &scfg)?;
            let mut rng = ssa::engine::run_rng(cfg.base_seed, run as u64);
            ssa::engine::run_compiled(&kin, &sim_net.initial_state(), sched, &scfg, &mut rng)?.trace
        }
    };
    let phases = detect_phases(&trace, &net.schema(), &cfg.marker, &cfg.phase)?;
    let (p0, p1) = cfg.pool_window;
    Ok((factors, phases.peak_phases_in(p0, p1)))
}

/// Runs one cohort of the sweep. Individual failures are recorded; the sweep
/// fails only when more than 5% of runs fail.
pub fn run_sweep(
    net: &Network,
    sched: &LightSchedule,
    cfg: &SweepConfig,
    cohort: Cohort,
) -> Result<SweepResult> {
    validate(cfg)?;
    if net.schema().column(&cfg.marker).is_none() {
        return Err(Error::invalid(format!("unknown phase marker `{}`", cfg.marker)));
    }
    let records: Vec<RunRecord> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|run| match one_run(net, sched, cfg, cohort, run) {
            Ok((factors, peak_phases)) => RunRecord {
                run,
                cohort,
                factors,
                seed: cfg.base_seed,
                first_peak_phase: peak_phases.first().copied(),
                peak_phases,
                error: None,
            },
            Err(e) => RunRecord {
                run,
                cohort,
                factors: sample_factors(&cfg.spec, cohort, cfg.base_seed, run),
                seed: cfg.base_seed,
                peak_phases: Vec::new(),
                first_peak_phase: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed * 20 > cfg.n_runs {
        let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::Numerical(format!(
            "{failed} of {} runs failed (first error: {first})",
            cfg.n_runs
        )));
    }
    Ok(SweepResult {
        cohort,
        mode: cfg.mode,
        period: cfg.phase.period,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorBin {
    pub lo: f64,
    pub hi: f64,
    pub n_runs: usize,
    /// `None` when no peak fell in the bin.
    pub stats: Option<CircularSummary>,
}

impl SweepResult {
    pub fn all_phases(&self) -> Vec<f64> {
        self.records.iter().flat_map(|r| r.peak_phases.iter().copied()).collect()
    }

    pub fn summary(&self) -> Option<CircularSummary> {
        circular_summary(&self.all_phases(), self.period)
    }

    /// Counts of pooled phases in `n_bins` equal bins over one period.
    pub fn phase_histogram(&self, n_bins: usize) -> Vec<usize> {
        let mut h = vec![0; n_bins];
        for p in self.all_phases() {
            let b = ((p / self.period * n_bins as f64) as usize).min(n_bins - 1);
            h[b] += 1;
        }
        h
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// `run,cohort,factor,seed,cycle,peak_phase_h,first_peak_phase_h`
    pub fn write_records_csv<W: Write>(&self, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "run,cohort,factor,seed,cycle,peak_phase_h,first_peak_phase_h")?;
        }
        let cohort = match self.cohort {
            Cohort::WildType => "wildtype",
            Cohort::Mutant => "mutant",
        };
        for r in &self.records {
            let first = r.first_peak_phase.map(fmt_value).unwrap_or_default();
            for (c, &p) in r.peak_phases.iter().enumerate() {
                writeln!(
                    w,
                    "{},{cohort},{},{},{c},{},{first}",
                    r.run,
                    fmt_value(r.factor()),
                    r.seed,
                    fmt_value(p)
                )?;
            }
        }
        Ok(())
    }
}

/// Equal-width factor bins over `[low, high]` (the last bin is closed) with
/// circular statistics of the pooled phases in each.
pub fn bin_factor_vs_phase(result: &SweepResult, spec: &MutationSpec, n_bins: usize) -> Result<Vec<FactorBin>> {
    if n_bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    let width = (spec.high - spec.low) / n_bins as f64;
    let mut phases: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    let mut runs = vec![0usize; n_bins];
    for r in &result.records {
        let f = r.factor();
        if f < spec.low || f > spec.high {
            continue;
        }
        let b = if width > 0.0 {
            (((f - spec.low) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        runs[b] += 1;
        phases[b].extend_from_slice(&r.peak_phases);
    }
    Ok((0..n_bins)
        .map(|b| FactorBin {
            lo: spec.low + b as f64 * width,
            hi: spec.low + (b + 1) as f64 * width,
            n_runs: runs[b],
            stats: circular_summary(&phases[b], result.period),
        })
        .collect())
}

pub fn write_bins_csv<W: Write>(bins: &[FactorBin], mut w: W) -> std::io::Result<()> {
    writeln!(w, "factor_lo,factor_hi,n_runs,n_peaks,mean_phase_h,circular_variance,circular_sd_h")?;
    for b in bins {
        let (n, m, v, s) = match &b.stats {
            Some(s) => (s.n, fmt_value(s.mean), fmt_value(s.variance), fmt_value(s.sd)),
            None => (0, String::new(), String::new(), String::new()),
        };
        writeln!(w, "{},{},{},{n},{m},{v},{s}", fmt_value(b.lo), fmt_value(b.hi), b.n_runs)?;
    }
    Ok(())
}

/// Signed difference `a - b` on a circle of circumference `period`, in
/// `[-period/2, period/2)`.
pub fn phase_difference(a: f64, b: f64, period: f64) -> f64 {
    (a - b + period / 2.0).rem_euclid(period) - period / 2.0
}
