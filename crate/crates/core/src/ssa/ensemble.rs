use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{prepare, run_compiled, run_rng, EventLog, SsaConfig};
use crate::error::{Error, Result};
use crate::model::{LightSchedule, Network, Observable, Schema};
use crate::trace::{fmt_time, fmt_value, Grid, Trace};

/// Runs per work unit. Fixed so that the reduction order, and therefore
/// every floating-point result, is independent of the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Retention {
    /// Only per-grid-point mean and variance.
    Stats,
    /// Every run's sampled counts as well.
    Traces,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub n_runs: usize,
    pub base_seed: u64,
    pub retention: Retention,
}

/// Streaming mean/variance per grid point and column (species first, then
/// observables).
#[derive(Debug, Clone, PartialEq)]
pub struct GridStats {
    n: u64,
    cols: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl GridStats {
    pub fn new(points: usize, cols: usize) -> Self {
        GridStats {
            n: 0,
            cols,
            mean: vec![0.0; points * cols],
            m2: vec![0.0; points * cols],
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn points(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.mean.len() / self.cols
        }
    }

    fn push(&mut self, trace: &Trace, observables: &[Observable]) {
        self.n += 1;
        let n = self.n as f64;
        let ns = trace.n_species();
        for k in 0..trace.len() {
            let s = trace.state(k);
            let base = k * self.cols;
            let values = s.iter().copied().chain(observables.iter().map(|o| o.eval(s)));
            for (c, x) in values.enumerate() {
                let i = base + c;
                let d = x - self.mean[i];
                self.mean[i] += d / n;
                self.m2[i] += d * (x - self.mean[i]);
            }
            debug_assert_eq!(ns + observables.len(), self.cols);
        }
    }

    fn merge(&mut self, other: &GridStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
    }

    pub fn mean(&self, col: usize) -> Vec<f64> {
        (0..self.points()).map(|k| self.mean[k * self.cols + col]).collect()
    }

    /// Population standard deviation (divisor n).
    pub fn sd(&self, col: usize) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        (0..self.points())
            .map(|k| (self.m2[k * self.cols + col].max(0.0) / n).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    schema: Schema,
    grid: Grid,
    n_runs: usize,
    base_seed: u64,
    total_events: u64,
    stats: GridStats,
    /// Run-major, then time, then species.
    traces: Option<Vec<u32>>,
    event_logs: Option<Vec<EventLog>>,
}

struct ChunkOut {
    stats: GridStats,
    traces: Vec<u32>,
    logs: Vec<EventLog>,
    events: u64,
}

fn to_u32(x: f64) -> Result<u32> {
    if x >= 0.0 && x <= u32::MAX as f64 && x.fract() == 0.0 {
        Ok(x as u32)
    } else {
        Err(Error::Numerical(format!(
            "count {x} does not fit the retained-trace representation"
        )))
    }
}

/// Runs `opts.n_runs` independent simulations; run `i` uses random stream
/// `i` of `opts.base_seed` (the `seed` field of `cfg` is ignored).
pub fn simulate_ensemble(
    net: &Network,
    sched: &LightSchedule,
    cfg: &SsaConfig,
    opts: &EnsembleOptions,
) -> Result<Ensemble> {
    if opts.n_runs == 0 {
        return Err(Error::invalid("an ensemble needs at least one run"));
    }
    let kin = prepare(net, sched, cfg)?;
    let schema = net.schema();
    let grid = cfg.grid();
    let cols = schema.species.len() + schema.observables.len();
    let x0 = net.initial_state();
    let keep = opts.retention == Retention::Traces;

    let n_chunks = opts.n_runs.div_ceil(CHUNK);
    let chunks: Vec<ChunkOut> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<ChunkOut> {
            let runs = c * CHUNK..((c + 1) * CHUNK).min(opts.n_runs);
            let mut out = ChunkOut {
                stats: GridStats::new(grid.len, cols),
                traces: Vec::new(),
                logs: Vec::new(),
                events: 0,
            };
            for i in runs {
                let mut rng = run_rng(opts.base_seed, i as u64);
                let r = run_compiled(&kin, &x0, sched, cfg, &mut rng).map_err(|e| Error::Run {
                    run: i,
                    source: Box::new(e),
                })?;
                out.stats.push(&r.trace, &schema.observables);
                out.events += r.event_count;
                if keep {
                    for k in 0..r.trace.len() {
                        for &x in r.trace.state(k) {
                            out.traces.push(to_u32(x)?);
                        }
                    }
                }
                if let Some(log) = r.events {
                    out.logs.push(log);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut stats = GridStats::new(grid.len, cols);
    let mut traces = keep.then(|| Vec::with_capacity(opts.n_runs * grid.len * schema.species.len()));
    let mut logs = cfg.event_window.map(|_| Vec::with_capacity(opts.n_runs));
    let mut total_events = 0;
    for c in chunks {
        stats.merge(&c.stats);
        total_events += c.events;
        if let Some(t) = &mut traces {
            t.extend_from_slice(&c.traces);
        }
        if let Some(l) = &mut logs {
            l.extend(c.logs);
        }
    }
    Ok(Ensemble {
        schema,
        grid,
        n_runs: opts.n_runs,
        base_seed: opts.base_seed,
        total_events,
        stats,
        traces,
        event_logs: logs,
    })
}

impl Ensemble {
    /// Builds a retained-trace ensemble from already sampled traces that
    /// share one grid.
    pub fn from_traces(schema: Schema, traces: &[Trace]) -> Result<Ensemble> {
        let first = traces.first().ok_or_else(|| Error::invalid("no traces given"))?;
        let times = first.times();
        let grid = match times {
            [t0] => Grid { start: *t0, step: 1.0, len: 1 },
            [t0, t1, ..] => Grid { start: *t0, step: t1 - t0, len: times.len() },
            [] => return Err(Error::invalid("empty trace")),
        };
        let cols = schema.species.len() + schema.observables.len();
        let mut stats = GridStats::new(grid.len, cols);
        let mut flat = Vec::with_capacity(traces.len() * grid.len * schema.species.len());
        for tr in traces {
            if tr.times() != times || tr.n_species() != schema.species.len() {
                return Err(Error::invalid("traces must share the grid and species"));
            }
            stats.push(tr, &schema.observables);
            for k in 0..tr.len() {
                for &x in tr.state(k) {
                    flat.push(to_u32(x)?);
                }
            }
        }
        Ok(Ensemble {
            schema,
            grid,
            n_runs: traces.len(),
            base_seed: 0,
            total_events: 0,
            stats,
            traces: Some(flat),
            event_logs: None,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n_runs(&self) -> usize {
        self.n_runs
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn total_events(&self) -> u64 {
        self.total_events
    }

    pub fn stats(&self) -> &GridStats {
        &self.stats
    }

    pub fn has_traces(&self) -> bool {
        self.traces.is_some()
    }

    pub fn event_logs(&self) -> Option<&[EventLog]> {
        self.event_logs.as_deref()
    }

    /// Column index (species, then observables) used by [`GridStats`].
    pub fn stats_column(&self, name: &str) -> Option<usize> {
        self.schema
            .species_index(name)
            .or_else(|| self.schema.observable_index(name).map(|i| i + self.schema.species.len()))
    }

    pub fn mean(&self, name: &str) -> Option<Vec<f64>> {
        self.stats_column(name).map(|c| self.stats.mean(c))
    }

    pub fn sd(&self, name: &str) -> Option<Vec<f64>> {
        self.stats_column(name).map(|c| self.stats.sd(c))
    }

    /// Mean over runs as a trace of species means.
    pub fn mean_trace(&self) -> Trace {
        let ns = self.schema.species.len();
        let cols: Vec<Vec<f64>> = (0..ns).map(|c| self.stats.mean(c)).collect();
        let mut tr = Trace::with_capacity(ns, self.grid.len);
        let mut row = vec![0.0; ns];
        for (k, t) in self.grid.times().enumerate() {
            for (s, col) in cols.iter().enumerate() {
                row[s] = col[k];
            }
            tr.push(t, &row);
        }
        tr
    }

    /// Retained counts of run `run` at grid index `k`.
    #[inline]
    pub fn counts(&self, run: usize, k: usize) -> Option<&[u32]> {
        let ns = self.schema.species.len();
        let t = self.traces.as_ref()?;
        let off = (run * self.grid.len + k) * ns;
        Some(&t[off..off + ns])
    }

    pub fn trace(&self, run: usize) -> Option<Trace> {
        if run >= self.n_runs {
            return None;
        }
        let ns = self.schema.species.len();
        let mut tr = Trace::with_capacity(ns, self.grid.len);
        let mut row = vec![0.0; ns];
        for (k, t) in self.grid.times().enumerate() {
            for (dst, &c) in row.iter_mut().zip(self.counts(run, k)?) {
                *dst = c as f64;
            }
            tr.push(t, &row);
        }
        Some(tr)
    }

    /// CSV `time_h, <col>_mean, <col>_sd` for every species and observable.
    pub fn write_stats_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<&str> = self
            .schema
            .species
            .iter()
            .map(String::as_str)
            .chain(self.schema.observables.iter().map(|o| o.name.as_str()))
            .collect();
        let mut header = vec!["time_h".to_string()];
        for n in &names {
            header.push(format!("{n}_mean"));
            header.push(format!("{n}_sd"));
        }
        writeln!(w, "{}", header.join(","))?;
        let means: Vec<Vec<f64>> = (0..names.len()).map(|c| self.stats.mean(c)).collect();
        let sds: Vec<Vec<f64>> = (0..names.len()).map(|c| self.stats.sd(c)).collect();
        for (k, t) in self.grid.times().enumerate() {
            let mut line = fmt_time(t);
            for c in 0..names.len() {
                line.push(',');
                line.push_str(&fmt_value(means[c][k]));
                line.push(',');
                line.push_str(&fmt_value(sds[c][k]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

// Binary ensemble format, little-endian throughout:
//
//   magic "CLKSENS\n", version u32
//   species: u32 count, then (u32 len, utf-8) names
//   observables: u32 count, then name, u32 terms, (f64 coef, u32 species) terms
//   reactions: u32 count, then u32 changes, (u32 species, i64 delta) changes
//   grid: f64 start, f64 step, u64 len
//   u64 n_runs, u64 base_seed, u64 total_events, u32 flags (1 traces, 2 events)
//   stats: u64 n, f64 mean[len*cols], f64 m2[len*cols]
//   traces (flag 1): u32 counts[n_runs*len*species]
//   events (flag 2): per run f64 start, f64 end, u64 initial[species],
//                    u64 n, (f64 time, u32 reaction)[n]

pub const MAGIC: &[u8; 8] = b"CLKSENS\n";
pub const FORMAT_VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = r.read_u32::<LE>()? as usize;
    if n > 1 << 20 {
        return Err(Error::Format("implausible string length".into()));
    }
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("name is not valid UTF-8".into()))
}

fn read_len<R: Read>(r: &mut R, limit: usize, what: &str) -> Result<usize> {
    let n = r.read_u64::<LE>()? as usize;
    if n > limit {
        return Err(Error::Format(format!("implausible {what} ({n})")));
    }
    Ok(n)
}

impl Ensemble {
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        let s = &self.schema;
        w.write_u32::<LE>(s.species.len() as u32)?;
        for name in &s.species {
            write_str(&mut w, name)?;
        }
        w.write_u32::<LE>(s.observables.len() as u32)?;
        for o in &s.observables {
            write_str(&mut w, &o.name)?;
            w.write_u32::<LE>(o.terms.len() as u32)?;
            for &(c, i) in &o.terms {
                w.write_f64::<LE>(c)?;
                w.write_u32::<LE>(i as u32)?;
            }
        }
        w.write_u32::<LE>(s.net_changes.len() as u32)?;
        for ch in &s.net_changes {
            w.write_u32::<LE>(ch.len() as u32)?;
            for &(i, d) in ch {
                w.write_u32::<LE>(i as u32)?;
                w.write_i64::<LE>(d)?;
            }
        }
        w.write_f64::<LE>(self.grid.start)?;
        w.write_f64::<LE>(self.grid.step)?;
        w.write_u64::<LE>(self.grid.len as u64)?;
        w.write_u64::<LE>(self.n_runs as u64)?;
        w.write_u64::<LE>(self.base_seed)?;
        w.write_u64::<LE>(self.total_events)?;
        let flags = self.traces.is_some() as u32 | (self.event_logs.is_some() as u32) << 1;
        w.write_u32::<LE>(flags)?;
        w.write_u64::<LE>(self.stats.n)?;
        for &x in self.stats.mean.iter().chain(&self.stats.m2) {
            w.write_f64::<LE>(x)?;
        }
        if let Some(t) = &self.traces {
            for &c in t {
                w.write_u32::<LE>(c)?;
            }
        }
        if let Some(logs) = &self.event_logs {
            for log in logs {
                w.write_f64::<LE>(log.start)?;
                w.write_f64::<LE>(log.end)?;
                for &x in &log.initial {
                    w.write_u64::<LE>(x as u64)?;
                }
                w.write_u64::<LE>(log.events.len() as u64)?;
                for &(t, r) in &log.events {
                    w.write_f64::<LE>(t)?;
                    w.write_u32::<LE>(r)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Ensemble> {
        let mut r = std::io::BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("file too short to be an ensemble".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not an ensemble file (bad magic)".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let ns = r.read_u32::<LE>()? as usize;
        let species = (0..ns).map(|_| read_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let no = r.read_u32::<LE>()? as usize;
        let mut observables = Vec::with_capacity(no);
        for _ in 0..no {
            let name = read_str(&mut r)?;
            let nt = r.read_u32::<LE>()? as usize;
            let mut terms = Vec::with_capacity(nt);
            for _ in 0..nt {
                let c = r.read_f64::<LE>()?;
                let i = r.read_u32::<LE>()? as usize;
                if i >= ns {
                    return Err(Error::Format("observable references unknown species".into()));
                }
                terms.push((c, i));
            }
            observables.push(Observable { name, terms });
        }
        let nr = r.read_u32::<LE>()? as usize;
        let mut net_changes = Vec::with_capacity(nr);
        for _ in 0..nr {
            let nc = r.read_u32::<LE>()? as usize;
            let mut ch = Vec::with_capacity(nc);
            for _ in 0..nc {
                let i = r.read_u32::<LE>()? as usize;
                let d = r.read_i64::<LE>()?;
                if i >= ns {
                    return Err(Error::Format("reaction references unknown species".into()));
                }
                ch.push((i, d));
            }
            net_changes.push(ch);
        }
        let start = r.read_f64::<LE>()?;
        let step = r.read_f64::<LE>()?;
        let len = read_len(&mut r, 1 << 32, "grid length")?;
        let n_runs = read_len(&mut r, 1 << 40, "run count")?;
        let base_seed = r.read_u64::<LE>()?;
        let total_events = r.read_u64::<LE>()?;
        let flags = r.read_u32::<LE>()?;
        let cols = ns + no;
        let mut stats = GridStats::new(len, cols);
        stats.n = r.read_u64::<LE>()?;
        for x in stats.mean.iter_mut().chain(stats.m2.iter_mut()) {
            *x = r.read_f64::<LE>()?;
        }
        let traces = if flags & 1 != 0 {
            let mut t = vec![0u32; n_runs * len * ns];
            r.read_u32_into::<LE>(&mut t)?;
            Some(t)
        } else {
            None
        };
        let event_logs = if flags & 2 != 0 {
            let mut logs = Vec::with_capacity(n_runs);
            for _ in 0..n_runs {
                let start = r.read_f64::<LE>()?;
                let end = r.read_f64::<LE>()?;
                let initial = (0..ns)
                    .map(|_| r.read_u64::<LE>().map(|x| x as f64))
                    .collect::<std::io::Result<Vec<_>>>()?;
                let n = read_len(&mut r, 1 << 40, "event count")?;
                let mut events = Vec::with_capacity(n);
                for _ in 0..n {
                    let t = r.read_f64::<LE>()?;
                    let j = r.read_u32::<LE>()?;
                    if j as usize >= nr {
                        return Err(Error::Format("event references unknown reaction".into()));
                    }
                    events.push((t, j));
                }
                logs.push(EventLog { start, end, initial, events });
            }
            Some(logs)
        } else {
            None
        };
        Ok(Ensemble {
            schema: Schema {
                species,
                observables,
                net_changes,
            },
            grid: Grid { start, step, len },
            n_runs,
            base_seed,
            total_events,
            stats,
            traces,
            event_logs,
        })
    }
}
