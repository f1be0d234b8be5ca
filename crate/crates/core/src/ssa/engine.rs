use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::heap::IndexedHeap;
use crate::error::{Error, Result};
use crate::model::{Kinetics, LightSchedule, Network};
use crate::trace::{Grid, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Gillespie's direct method.
    Direct,
    /// Gibson–Bruck next-reaction method.
    NextReaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LightMode {
    /// Light switches at the exact instants given by the schedule.
    DeterministicSwitch,
    /// Time is tracked by a counter that ticks as a Poisson process at
    /// `tick_rate` per hour; light follows the schedule evaluated at
    /// `ticks / tick_rate`.
    StochasticClock { tick_rate: f64 },
}

impl LightMode {
    pub const DEFAULT_TICK_RATE: f64 = 60.0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsaConfig {
    pub method: Method,
    pub seed: u64,
    pub light_mode: LightMode,
    pub record_grid: f64,
    pub t_end: f64,
    /// First recorded grid time. Recording from later on saves memory in
    /// large ensembles when only the tail matters.
    #[serde(default)]
    pub record_start: f64,
    /// When set, the exact path over this window is kept as an event log.
    #[serde(default)]
    pub event_window: Option<(f64, f64)>,
}

impl SsaConfig {
    pub fn new(t_end: f64, seed: u64) -> Self {
        SsaConfig {
            method: Method::NextReaction,
            seed,
            light_mode: LightMode::DeterministicSwitch,
            record_grid: 0.1,
            t_end,
            record_start: 0.0,
            event_window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end must be positive"));
        }
        if !(self.record_grid > 0.0) {
            return Err(Error::invalid("record_grid must be positive"));
        }
        if !(self.record_start >= 0.0 && self.record_start <= self.t_end) {
            return Err(Error::invalid("record_start must lie in [0, t_end]"));
        }
        if let LightMode::StochasticClock { tick_rate } = self.light_mode {
            if !(tick_rate > 0.0 && tick_rate.is_finite()) {
                return Err(Error::invalid("tick_rate must be positive"));
            }
        }
        if let Some((a, b)) = self.event_window {
            if !(a >= 0.0 && a < b && b <= self.t_end) {
                return Err(Error::invalid("event window must satisfy 0 <= start < end <= t_end"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::covering(self.record_start, self.t_end, self.record_grid)
    }
}

/// Exact sample path over a window: the state at the window start followed
/// by every reaction event inside it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub start: f64,
    pub end: f64,
    pub initial: Vec<f64>,
    /// `(time, reaction index)`, ascending in time.
    pub events: Vec<(f64, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: Trace,
    pub event_count: u64,
    pub seed: u64,
    pub events: Option<EventLog>,
    /// Time at which all propensities vanished for good, if they did.
    pub absorbed_at: Option<f64>,
}

/// Simulates one sample path. The random stream is stream 0 of `cfg.seed`,
/// which is also run 0 of an ensemble with the same base seed.
pub fn simulate(net: &Network, sched: &LightSchedule, cfg: &SsaConfig) -> Result<RunResult> {
    let kin = prepare(net, sched, cfg)?;
    let mut rng = run_rng(cfg.seed, 0);
    run_compiled(&kin, &net.initial_state(), sched, cfg, &mut rng)
}

pub(crate) fn prepare(net: &Network, sched: &LightSchedule, cfg: &SsaConfig) -> Result<Kinetics> {
    cfg.validate()?;
    sched.validate()?;
    let kin = net.compile()?;
    if kin.uses_time() {
        return Err(Error::invalid(
            "rate laws that read `time` are not piecewise constant; the stochastic engine needs light_time instead",
        ));
    }
    Ok(kin)
}

pub(crate) fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

#[inline]
fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

struct Recorder {
    grid: Grid,
    next: usize,
    trace: Trace,
    log: Option<EventLog>,
    snapped: bool,
}

impl Recorder {
    fn new(cfg: &SsaConfig, n: usize) -> Self {
        let grid = cfg.grid();
        Recorder {
            grid,
            next: 0,
            trace: Trace::with_capacity(n, grid.len),
            log: cfg.event_window.map(|(start, end)| EventLog {
                start,
                end,
                ..EventLog::default()
            }),
            snapped: false,
        }
    }

    /// Called before the state changes at time `t`: records every grid point
    /// strictly earlier than `t`.
    #[inline]
    fn before(&mut self, t: f64, state: &[f64]) {
        while self.next < self.grid.len {
            let g = self.grid.time(self.next);
            if g >= t {
                break;
            }
            self.trace.push(g, state);
            self.next += 1;
        }
        if let Some(log) = &mut self.log {
            if !self.snapped && t > log.start {
                log.initial = state.to_vec();
                self.snapped = true;
            }
        }
    }

    #[inline]
    fn event(&mut self, t: f64, r: usize) {
        if let Some(log) = &mut self.log {
            if t > log.start && t <= log.end {
                log.events.push((t, r as u32));
            }
        }
    }

    fn finish(mut self, state: &[f64]) -> (Trace, Option<EventLog>) {
        while self.next < self.grid.len {
            self.trace.push(self.grid.time(self.next), state);
            self.next += 1;
        }
        if let Some(log) = &mut self.log {
            if !self.snapped {
                log.initial = state.to_vec();
            }
        }
        (self.trace, self.log)
    }
}

/// Light bookkeeping shared by both methods.
struct Light<'a> {
    sched: &'a LightSchedule,
    level: f64,
    /// Next deterministic switch before `t_end`, or infinity.
    next_switch: f64,
    t_end: f64,
    /// `Some(rate)` in stochastic-clock mode.
    tick_rate: Option<f64>,
    ticks: u64,
}

impl<'a> Light<'a> {
    fn new(sched: &'a LightSchedule, cfg: &SsaConfig) -> Self {
        let tick_rate = match cfg.light_mode {
            LightMode::DeterministicSwitch => None,
            LightMode::StochasticClock { tick_rate } => Some(tick_rate),
        };
        let mut l = Light {
            sched,
            level: sched.light_after(0.0),
            next_switch: f64::INFINITY,
            t_end: cfg.t_end,
            tick_rate,
            ticks: 0,
        };
        l.schedule_from(0.0);
        l
    }

    fn schedule_from(&mut self, t: f64) {
        if self.tick_rate.is_none() {
            self.next_switch = self
                .sched
                .next_switch_after(t)
                .filter(|&s| s < self.t_end)
                .unwrap_or(f64::INFINITY);
        }
    }

    /// Crosses the pending deterministic switch.
    fn switch(&mut self) {
        let t = self.next_switch;
        self.level = self.sched.light_after(t);
        self.schedule_from(t);
    }

    /// Advances the stochastic clock; returns whether the light changed.
    fn tick(&mut self) -> bool {
        self.ticks += 1;
        let clock = self.ticks as f64 / self.tick_rate.expect("tick only in clock mode");
        let new = self.sched.light_after(clock);
        let changed = new != self.level;
        self.level = new;
        changed
    }
}

pub(crate) fn run_compiled(
    kin: &Kinetics,
    x0: &[f64],
    sched: &LightSchedule,
    cfg: &SsaConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RunResult> {
    let mut state = x0.to_vec();
    let mut rec = Recorder::new(cfg, kin.n_species());
    let mut light = Light::new(sched, cfg);
    let (event_count, absorbed_at) = match cfg.method {
        Method::Direct => direct(kin, &mut state, &mut light, &mut rec, rng)?,
        Method::NextReaction => next_reaction(kin, &mut state, &mut light, &mut rec, rng)?,
    };
    let (trace, events) = rec.finish(&state);
    Ok(RunResult {
        trace,
        event_count,
        seed: cfg.seed,
        events,
        absorbed_at,
    })
}

fn direct(
    kin: &Kinetics,
    state: &mut [f64],
    light: &mut Light<'_>,
    rec: &mut Recorder,
    rng: &mut ChaCha8Rng,
) -> Result<(u64, Option<f64>)> {
    let nr = kin.n_reactions();
    let tick = light.tick_rate;
    let mut a = vec![0.0; nr + tick.is_some() as usize];
    for r in 0..nr {
        a[r] = kin.rate(r, state, light.level, 0.0)?;
    }
    if let Some(rate) = tick {
        a[nr] = rate;
    }
    let t_end = light.t_end;
    let mut t = 0.0;
    let mut events = 0u64;
    loop {
        let a0: f64 = a.iter().sum();
        let t_next = if a0 > 0.0 { t + exp1(rng) / a0 } else { f64::INFINITY };
        if light.next_switch.is_finite() && t_next >= light.next_switch {
            // discard the draw and restart the clock at the switch
            t = light.next_switch;
            light.switch();
            for &r in kin.light_dependent() {
                a[r] = kin.rate(r, state, light.level, 0.0)?;
            }
            continue;
        }
        if t_next > t_end {
            let absorbed = (a0 == 0.0).then_some(t);
            return Ok((events, absorbed));
        }
        rec.before(t_next, state);
        t = t_next;

        let target = rng.gen::<f64>() * a0;
        let mut acc = 0.0;
        let mut j = usize::MAX;
        for (r, &ar) in a.iter().enumerate() {
            if ar > 0.0 {
                j = r;
                acc += ar;
                if target < acc {
                    break;
                }
            }
        }
        if j == nr {
            if light.tick() {
                for &r in kin.light_dependent() {
                    a[r] = kin.rate(r, state, light.level, 0.0)?;
                }
            }
            continue;
        }
        kin.fire(j, state);
        events += 1;
        rec.event(t, j);
        for &q in kin.affects(j) {
            a[q] = kin.rate(q, state, light.level, 0.0)?;
        }
    }
}

fn next_reaction(
    kin: &Kinetics,
    state: &mut [f64],
    light: &mut Light<'_>,
    rec: &mut Recorder,
    rng: &mut ChaCha8Rng,
) -> Result<(u64, Option<f64>)> {
    let nr = kin.n_reactions();
    let tick = light.tick_rate;
    let n_ch = nr + tick.is_some() as usize;
    let mut a = vec![0.0; n_ch];
    let mut taus = vec![f64::INFINITY; n_ch];
    for r in 0..nr {
        a[r] = kin.rate(r, state, light.level, 0.0)?;
    }
    if let Some(rate) = tick {
        a[nr] = rate;
    }
    for r in 0..n_ch {
        if a[r] > 0.0 {
            taus[r] = exp1(rng) / a[r];
        }
    }
    let mut heap = IndexedHeap::new(taus);
    let t_end = light.t_end;
    let mut events = 0u64;

    // fresh firing times for the light-dependent channels at time t
    let resample_light = |t: f64,
                          a: &mut [f64],
                          heap: &mut IndexedHeap,
                          state: &[f64],
                          level: f64,
                          rng: &mut ChaCha8Rng|
     -> Result<()> {
        for &r in kin.light_dependent() {
            a[r] = kin.rate(r, state, level, 0.0)?;
            let tau = if a[r] > 0.0 { t + exp1(rng) / a[r] } else { f64::INFINITY };
            heap.update(r, tau);
        }
        Ok(())
    };

    let mut t = 0.0;
    loop {
        let (j, tj) = heap.min();
        if light.next_switch.is_finite() && tj >= light.next_switch {
            t = light.next_switch;
            light.switch();
            resample_light(t, &mut a, &mut heap, state, light.level, rng)?;
            continue;
        }
        if tj > t_end {
            let absorbed = tj.is_infinite().then_some(t);
            return Ok((events, absorbed));
        }
        rec.before(tj, state);
        t = tj;

        if j == nr {
            heap.update(nr, t + exp1(rng) / a[nr]);
            if light.tick() {
                resample_light(t, &mut a, &mut heap, state, light.level, rng)?;
            }
            continue;
        }
        kin.fire(j, state);
        events += 1;
        rec.event(t, j);
        let mut j_done = false;
        for &q in kin.affects(j) {
            let old = a[q];
            let new = kin.rate(q, state, light.level, 0.0)?;
            a[q] = new;
            let tau = if new <= 0.0 {
                f64::INFINITY
            } else if q != j && old > 0.0 {
                t + (old / new) * (heap.key(q) - t)
            } else {
                t + exp1(rng) / new
            };
            heap.update(q, tau);
            j_done |= q == j;
        }
        if !j_done {
            let tau = if a[j] > 0.0 { t + exp1(rng) / a[j] } else { f64::INFINITY };
            heap.update(j, tau);
        }
    }
}
