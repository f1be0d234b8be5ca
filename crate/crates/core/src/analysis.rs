//! Statistical model checking over simulated ensembles.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Observable;
use crate::ssa::Ensemble;
use crate::trace::{fmt_time, fmt_value};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Comparison {
    Eq(i64),
    Le(i64),
    Ge(i64),
    Lt(i64),
    Gt(i64),
    /// Inclusive range.
    Between(i64, i64),
}

impl Comparison {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            Comparison::Eq(v) => x == v as f64,
            Comparison::Le(v) => x <= v as f64,
            Comparison::Ge(v) => x >= v as f64,
            Comparison::Lt(v) => x < v as f64,
            Comparison::Gt(v) => x > v as f64,
            Comparison::Between(lo, hi) => x >= lo as f64 && x <= hi as f64,
        }
    }

    /// Whether the comparison holds for every value in `[min, max]`, given
    /// that both endpoints are attained.
    fn holds_throughout(&self, min: f64, max: f64) -> bool {
        match *self {
            Comparison::Eq(v) => min == v as f64 && max == v as f64,
            Comparison::Le(_) | Comparison::Lt(_) => self.holds(max),
            Comparison::Ge(_) | Comparison::Gt(_) => self.holds(min),
            Comparison::Between(..) => self.holds(min) && self.holds(max),
        }
    }

    /// Same comparison with its (upper) bound replaced.
    pub fn with_bound(&self, b: i64) -> Comparison {
        match *self {
            Comparison::Eq(_) => Comparison::Eq(b),
            Comparison::Le(_) => Comparison::Le(b),
            Comparison::Ge(_) => Comparison::Ge(b),
            Comparison::Lt(_) => Comparison::Lt(b),
            Comparison::Gt(_) => Comparison::Gt(b),
            Comparison::Between(lo, _) => Comparison::Between(lo, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub observable: String,
    pub comparison: Comparison,
}

impl Predicate {
    pub fn new(observable: impl Into<String>, comparison: Comparison) -> Self {
        Predicate {
            observable: observable.into(),
            comparison,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Query {
    /// The predicate holds at time `t`.
    EventuallyAt { t: f64, predicate: Predicate },
    /// The predicate holds throughout `[t1, t2]`.
    Globally { t1: f64, t2: f64, predicate: Predicate },
    /// The observable lies in `[lo, hi]` at time `t`.
    DistributionAt {
        t: f64,
        observable: String,
        lo: i64,
        hi: i64,
    },
}

impl Query {
    fn parts(&self) -> (f64, f64, &str, Comparison) {
        match self {
            Query::EventuallyAt { t, predicate } => {
                (*t, *t, &predicate.observable, predicate.comparison)
            }
            Query::Globally { t1, t2, predicate } => {
                (*t1, *t2, &predicate.observable, predicate.comparison)
            }
            Query::DistributionAt { t, observable, lo, hi } => {
                (*t, *t, observable, Comparison::Between(*lo, *hi))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (t1, t2, ..) = self.parts();
        if !(t1 >= 0.0) {
            return Err(Error::InvalidQuery(format!("time {t1} must be non-negative")));
        }
        if let Query::Globally { .. } = self {
            if !(t1 < t2) {
                return Err(Error::InvalidQuery(format!("need t1 < t2, got [{t1}, {t2}]")));
            }
        }
        if let Query::DistributionAt { lo, hi, .. } = self {
            if lo > hi {
                return Err(Error::InvalidQuery("level range is empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CiMethod {
    /// Normal approximation, `1.96 sqrt(p(1-p)/n)`.
    #[default]
    Normal,
    Wilson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: f64,
    pub n: usize,
    pub ci_half_width: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

const Z95: f64 = 1.959963984540054;

impl Estimate {
    pub fn from_counts(successes: usize, n: usize, method: CiMethod) -> Estimate {
        assert!(n > 0 && successes <= n);
        let nf = n as f64;
        let p = successes as f64 / nf;
        let (lo, hi) = match method {
            CiMethod::Normal => {
                let h = Z95 * (p * (1.0 - p) / nf).sqrt();
                (p - h, p + h)
            }
            CiMethod::Wilson => {
                let z2 = Z95 * Z95;
                let denom = 1.0 + z2 / nf;
                let centre = (p + z2 / (2.0 * nf)) / denom;
                let h = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
                (centre - h, centre + h)
            }
        };
        let (lo, hi) = (lo.max(0.0), hi.min(1.0));
        Estimate {
            p_hat: p,
            n,
            ci_half_width: match method {
                CiMethod::Normal => Z95 * (p * (1.0 - p) / nf).sqrt(),
                CiMethod::Wilson => 0.5 * (hi - lo),
            },
            ci_low: lo,
            ci_high: hi,
        }
    }
}

/// How `Globally` windows are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PathMode {
    /// Replays event logs when they cover the window, otherwise uses the grid.
    #[default]
    Auto,
    /// Requires event logs.
    EventExact,
    /// Only the recorded grid points; can miss excursions between them.
    Grid,
}

fn observable(ens: &Ensemble, name: &str) -> Result<Observable> {
    ens.schema()
        .column(name)
        .ok_or_else(|| Error::InvalidQuery(format!("unknown observable `{name}`")))
}

fn require_traces(ens: &Ensemble) -> Result<()> {
    if ens.n_runs() == 0 {
        return Err(Error::invalid("empty ensemble"));
    }
    if !ens.has_traces() && ens.event_logs().is_none() {
        return Err(Error::invalid(
            "ensemble keeps only summary statistics; re-run with retained traces",
        ));
    }
    Ok(())
}

fn logs_cover(ens: &Ensemble, t1: f64, t2: f64) -> bool {
    ens.event_logs()
        .and_then(|l| l.first())
        .is_some_and(|l| l.start <= t1 + TIME_EPS && t2 <= l.end + TIME_EPS)
}

/// Per-run `(min, max)` of `obs` over `[t1, t2]`.
pub fn run_extrema(
    ens: &Ensemble,
    obs: &Observable,
    t1: f64,
    t2: f64,
    mode: PathMode,
) -> Result<Vec<(f64, f64)>> {
    require_traces(ens)?;
    let exact = match mode {
        PathMode::EventExact => {
            if !logs_cover(ens, t1, t2) {
                return Err(Error::InvalidQuery(format!(
                    "no event log covers [{t1}, {t2}]; simulate with a matching event window"
                )));
            }
            true
        }
        PathMode::Auto => logs_cover(ens, t1, t2),
        PathMode::Grid => false,
    };
    if exact {
        return Ok(ens
            .event_logs()
            .expect("checked")
            .iter()
            .map(|log| {
                let changes = &ens.schema().net_changes;
                let mut x = log.initial.clone();
                let mut events = log.events.iter().peekable();
                while let Some(&&(_, r)) = events.peek().filter(|e| e.0 <= t1) {
                    for &(s, d) in &changes[r as usize] {
                        x[s] += d as f64;
                    }
                    events.next();
                }
                let v = obs.eval(&x);
                let (mut lo, mut hi) = (v, v);
                for &(t, r) in events {
                    if t > t2 {
                        break;
                    }
                    for &(s, d) in &changes[r as usize] {
                        x[s] += d as f64;
                    }
                    let v = obs.eval(&x);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            })
            .collect());
    }
    if !ens.has_traces() {
        return Err(Error::InvalidQuery(format!(
            "[{t1}, {t2}] is outside the event window and no traces were retained"
        )));
    }
    let grid = ens.grid();
    if t1 < grid.start - TIME_EPS || t2 > grid.end() + TIME_EPS {
        let bad = if t1 < grid.start - TIME_EPS { t1 } else { t2 };
        return Err(Error::OutOfRange {
            time: bad,
            start: grid.start,
            end: grid.end(),
        });
    }
    let ks: Vec<usize> = (0..grid.len)
        .filter(|&k| {
            let g = grid.time(k);
            g >= t1 - TIME_EPS && g <= t2 + TIME_EPS
        })
        .collect();
    if ks.is_empty() {
        return Err(Error::InvalidQuery(format!(
            "no recorded grid point in [{t1}, {t2}]"
        )));
    }
    let mut buf = vec![0.0; ens.schema().species.len()];
    Ok((0..ens.n_runs())
        .map(|run| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &k in &ks {
                for (b, &c) in buf.iter_mut().zip(ens.counts(run, k).expect("traces")) {
                    *b = c as f64;
                }
                let v = obs.eval(&buf);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        })
        .collect())
}

fn check_horizon(ens: &Ensemble, t1: f64, t2: f64) -> Result<()> {
    let g = ens.grid();
    let (mut start, mut end) = (g.start, g.end());
    if let Some(l) = ens.event_logs().and_then(|l| l.first()) {
        start = start.min(l.start);
        end = end.max(l.end);
    }
    for t in [t1, t2] {
        if t < start - TIME_EPS || t > end + TIME_EPS {
            return Err(Error::OutOfRange { time: t, start, end });
        }
    }
    Ok(())
}

pub fn estimate(ens: &Ensemble, query: &Query, ci: CiMethod) -> Result<Estimate> {
    estimate_with(ens, query, ci, PathMode::Auto)
}

pub fn estimate_with(ens: &Ensemble, query: &Query, ci: CiMethod, mode: PathMode) -> Result<Estimate> {
    let table = sweep_query_with(ens, query, &[None], ci, mode)?;
    Ok(table[0].1)
}

/// Estimates `query` once per bound in `bounds`, substituting each into the
/// predicate. Traces are traversed once for the whole sweep.
pub fn sweep_query(
    ens: &Ensemble,
    query: &Query,
    bounds: &[i64],
    ci: CiMethod,
) -> Result<Vec<(i64, Estimate)>> {
    let b: Vec<Option<i64>> = bounds.iter().map(|&b| Some(b)).collect();
    Ok(sweep_query_with(ens, query, &b, ci, PathMode::Auto)?
        .into_iter()
        .map(|(b, e)| (b.expect("bound given"), e))
        .collect())
}

pub fn sweep_query_with(
    ens: &Ensemble,
    query: &Query,
    bounds: &[Option<i64>],
    ci: CiMethod,
    mode: PathMode,
) -> Result<Vec<(Option<i64>, Estimate)>> {
    query.validate()?;
    let (t1, t2, name, cmp) = query.parts();
    let obs = observable(ens, name)?;
    if bounds.is_empty() {
        return Ok(Vec::new());
    }
    check_horizon(ens, t1, t2)?;
    let ext = run_extrema(ens, &obs, t1, t2, mode)?;
    Ok(bounds
        .iter()
        .map(|&b| {
            let c = b.map_or(cmp, |b| cmp.with_bound(b));
            let k = ext.iter().filter(|&&(lo, hi)| c.holds_throughout(lo, hi)).count();
            (b, Estimate::from_counts(k, ext.len(), ci))
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[(i64, Estimate)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "param,p_hat,ci")?;
    for (b, e) in rows {
        writeln!(w, "{b},{},{}", fmt_value(e.p_hat), fmt_value(e.ci_half_width))?;
    }
    Ok(())
}

/// Empirical distribution of an observable over integer levels, one column
/// per recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSurface {
    pub observable: String,
    pub times: Vec<f64>,
    pub lo: i64,
    pub hi: i64,
    /// `probs[level - lo][time]`
    pub probs: Vec<Vec<f64>>,
    /// Mass below `lo` / above `hi` per time.
    pub below: Vec<f64>,
    pub above: Vec<f64>,
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub sd: Vec<f64>,
    /// `sd / mean`; `None` where the mean is below 1e-9.
    pub cv: Vec<Option<f64>>,
}

pub const CV_MIN_MEAN: f64 = 1e-9;

pub fn distribution_surface(
    ens: &Ensemble,
    observable_name: &str,
    t0: f64,
    t1: f64,
    lo: i64,
    hi: i64,
) -> Result<DistributionSurface> {
    if ens.n_runs() == 0 {
        return Err(Error::invalid("empty ensemble"));
    }
    if !ens.has_traces() {
        return Err(Error::invalid(
            "distribution surfaces need retained traces; re-run with traces kept",
        ));
    }
    if lo > hi || t0 > t1 {
        return Err(Error::InvalidQuery("empty time or level range".into()));
    }
    let obs = observable(ens, observable_name)?;
    check_horizon(ens, t0, t1)?;
    let grid = ens.grid();
    let ks: Vec<usize> = (0..grid.len)
        .filter(|&k| {
            let g = grid.time(k);
            g >= t0 - TIME_EPS && g <= t1 + TIME_EPS
        })
        .collect();
    let n_levels = (hi - lo + 1) as usize;
    let nt = ks.len();
    let mut counts = vec![vec![0usize; nt]; n_levels];
    let mut below = vec![0usize; nt];
    let mut above = vec![0usize; nt];
    let mut sum = vec![0.0; nt];
    let mut sumsq = vec![0.0; nt];
    let mut buf = vec![0.0; ens.schema().species.len()];
    for run in 0..ens.n_runs() {
        for (j, &k) in ks.iter().enumerate() {
            for (b, &c) in buf.iter_mut().zip(ens.counts(run, k).expect("traces")) {
                *b = c as f64;
            }
            let v = obs.eval(&buf);
            sum[j] += v;
            sumsq[j] += v * v;
            let level = v.round() as i64;
            if level < lo {
                below[j] += 1;
            } else if level > hi {
                above[j] += 1;
            } else {
                counts[(level - lo) as usize][j] += 1;
            }
        }
    }
    let n = ens.n_runs() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let sd: Vec<f64> = sumsq
        .iter()
        .zip(&mean)
        .map(|(&q, &m)| (q / n - m * m).max(0.0).sqrt())
        .collect();
    let cv = mean
        .iter()
        .zip(&sd)
        .map(|(&m, &s)| (m >= CV_MIN_MEAN).then(|| s / m))
        .collect();
    Ok(DistributionSurface {
        observable: observable_name.to_string(),
        times: ks.iter().map(|&k| grid.time(k)).collect(),
        lo,
        hi,
        probs: counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / n).collect())
            .collect(),
        below: below.into_iter().map(|c| c as f64 / n).collect(),
        above: above.into_iter().map(|c| c as f64 / n).collect(),
        mean,
        sd,
        cv,
    })
}

impl DistributionSurface {
    /// Total probability of column `j`, overflow buckets included.
    pub fn column_sum(&self, j: usize) -> f64 {
        self.below[j] + self.above[j] + self.probs.iter().map(|row| row[j]).sum::<f64>()
    }

    /// Matrix CSV: rows are levels (with `below`/`above` overflow rows),
    /// columns are times.
    pub fn write_matrix_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("level".to_string())
            .chain(self.times.iter().map(|&t| fmt_time(t)))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        let row = |label: String, vals: &[f64], w: &mut W| -> std::io::Result<()> {
            let mut line = label;
            for &v in vals {
                line.push(',');
                line.push_str(&fmt_value(v));
            }
            writeln!(w, "{line}")
        };
        row(format!("below_{}", self.lo), &self.below, &mut w)?;
        for (i, p) in self.probs.iter().enumerate() {
            row((self.lo + i as i64).to_string(), p, &mut w)?;
        }
        row(format!("above_{}", self.hi), &self.above, &mut w)
    }

    /// `time_h,mu,sigma,c_v`; a missing `c_v` is an empty field.
    pub fn write_moments_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_h,mu,sigma,c_v")?;
        for j in 0..self.times.len() {
            let cv = self.cv[j].map(fmt_value).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{cv}",
                fmt_time(self.times[j]),
                fmt_value(self.mean[j]),
                fmt_value(self.sd[j])
            )?;
        }
        Ok(())
    }
}
