//! Peak and trough detection for noisy oscillations with a two-threshold
//! (Schmitt trigger) rule, and circular statistics of peak phases.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Schema;
use crate::trace::{fmt_time, fmt_value, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub low_frac: f64,
    pub high_frac: f64,
    /// Analysis window in hours.
    pub window: (f64, f64),
    pub period: f64,
    /// Centered moving-average width in samples; `None` analyses the raw
    /// signal.
    #[serde(default)]
    pub smoothing: Option<usize>,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            low_frac: 0.20,
            high_frac: 0.35,
            window: (0.0, 240.0),
            period: 24.0,
            smoothing: None,
        }
    }
}

impl PhaseConfig {
    pub fn with_window(self, start: f64, end: f64) -> Self {
        PhaseConfig {
            window: (start, end),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low_frac && self.low_frac < self.high_frac && self.high_frac < 1.0) {
            return Err(Error::invalid("thresholds must satisfy 0 < low_frac < high_frac < 1"));
        }
        if !(self.window.0 < self.window.1) {
            return Err(Error::invalid("phase window must be non-empty"));
        }
        if !(self.period > 0.0) {
            return Err(Error::invalid("period must be positive"));
        }
        if self.smoothing == Some(0) {
            return Err(Error::invalid("smoothing width must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub peak_time: f64,
    pub peak_value: f64,
    /// Trough following the peak, when one was observed.
    pub trough_time: Option<f64>,
    pub trough_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularSummary {
    pub n: usize,
    /// Circular mean phase in `[0, period)`.
    pub mean: f64,
    /// `sqrt(-2 ln R) * period / 2π`, in hours.
    pub sd: f64,
    /// `1 - R`.
    pub variance: f64,
    /// Mean resultant length R.
    pub resultant: f64,
}

/// Circular statistics of phases on a circle of circumference `period`.
/// `None` for an empty sample.
pub fn circular_summary(phases: &[f64], period: f64) -> Option<CircularSummary> {
    if phases.is_empty() {
        return None;
    }
    let n = phases.len() as f64;
    let (mut c, mut s) = (0.0, 0.0);
    for &p in phases {
        let a = TAU * p / period;
        c += a.cos();
        s += a.sin();
    }
    let (c, s) = (c / n, s / n);
    let r = c.hypot(s).min(1.0);
    let mean = (s.atan2(c) / TAU * period).rem_euclid(period);
    let sd = if r >= 1.0 { 0.0 } else { (-2.0 * r.ln()).sqrt() * period / TAU };
    Some(CircularSummary {
        n: phases.len(),
        mean,
        sd,
        variance: 1.0 - r,
        resultant: r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub cycles: Vec<Cycle>,
    pub period: f64,
    /// Signal range over the window (0 for a flat signal).
    pub range: f64,
}

impl PhaseResult {
    pub fn peak_times(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.peak_time).collect()
    }

    pub fn peak_phases(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.peak_time.rem_euclid(self.period)).collect()
    }

    /// Phases of peaks with `t0 <= peak_time <= t1`.
    pub fn peak_phases_in(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.cycles
            .iter()
            .filter(|c| c.peak_time >= t0 && c.peak_time <= t1)
            .map(|c| c.peak_time.rem_euclid(self.period))
            .collect()
    }

    pub fn summary(&self) -> Option<CircularSummary> {
        circular_summary(&self.peak_phases(), self.period)
    }
}

/// Detects cycles of the named species or observable of `trace`.
pub fn detect_phases(
    trace: &Trace,
    schema: &Schema,
    observable: &str,
    cfg: &PhaseConfig,
) -> Result<PhaseResult> {
    let obs = schema
        .column(observable)
        .ok_or_else(|| Error::InvalidQuery(format!("unknown observable `{observable}`")))?;
    detect_phases_series(trace.times(), &trace.observable(&obs), cfg)
}

fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + width - half).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Level {
    Unknown,
    High,
    Low,
}

/// Schmitt-trigger segmentation of a sampled signal.
///
/// The signal enters HIGH above `min + high_frac * range` and leaves it below
/// `min + low_frac * range`, with min and range taken over the window. Each
/// HIGH run yields its maximum as a peak and each LOW run its minimum as a
/// trough (earliest sample on ties). Runs cut by the window edges are kept
/// unless their extremum lies on the edge sample itself, where the true
/// extremum may lie outside the window.
pub fn detect_phases_series(times: &[f64], values: &[f64], cfg: &PhaseConfig) -> Result<PhaseResult> {
    cfg.validate()?;
    if times.len() != values.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    let (w0, w1) = cfg.window;
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= w0 - 1e-9 && times[i] <= w1 + 1e-9)
        .collect();
    if idx.is_empty() {
        return Err(Error::invalid(format!(
            "trace has no samples in the window [{w0}, {w1}]"
        )));
    }
    let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
    let raw: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    let x = match cfg.smoothing {
        Some(w) if w > 1 => moving_average(&raw, w),
        _ => raw,
    };
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) || !range.is_finite() {
        return Ok(PhaseResult {
            cycles: Vec::new(),
            period: cfg.period,
            range: 0.0,
        });
    }
    let hi_th = min + cfg.high_frac * range;
    let lo_th = min + cfg.low_frac * range;

    // segments as (level, first index, last index)
    let mut segments: Vec<(Level, usize, usize)> = Vec::new();
    let mut level = Level::Unknown;
    let mut start = 0;
    for (i, &v) in x.iter().enumerate() {
        let next = match level {
            Level::High if v < lo_th => Level::Low,
            Level::Low if v > hi_th => Level::High,
            Level::Unknown if v > hi_th => Level::High,
            Level::Unknown if v < lo_th => Level::Low,
            l => l,
        };
        if next != level {
            if level != Level::Unknown {
                segments.push((level, start, i - 1));
            }
            level = next;
            start = i;
        }
    }
    if level != Level::Unknown {
        segments.push((level, start, x.len() - 1));
    }

    let last = x.len() - 1;
    let extremum = |lo: usize, hi: usize, want_max: bool| -> usize {
        let mut best = lo;
        for i in lo + 1..=hi {
            if (want_max && x[i] > x[best]) || (!want_max && x[i] < x[best]) {
                best = i;
            }
        }
        best
    };
    // A segment touching the window edge whose extremum sits on that edge
    // is truncated: its true extremum lies outside the window.
    let truncated = |lo: usize, hi: usize, at: usize| -> bool {
        (lo == 0 && at == 0) || (hi == last && at == last)
    };

    let mut cycles: Vec<Cycle> = Vec::new();
    for &(lvl, lo, hi) in &segments {
        match lvl {
            Level::High => {
                let at = extremum(lo, hi, true);
                if !truncated(lo, hi, at) {
                    cycles.push(Cycle {
                        peak_time: t[at],
                        peak_value: x[at],
                        trough_time: None,
                        trough_value: None,
                    });
                }
            }
            Level::Low => {
                let at = extremum(lo, hi, false);
                if truncated(lo, hi, at) {
                    continue;
                }
                // attach to the peak that precedes this trough, if it is the
                // segment immediately before
                if let Some(c) = cycles.last_mut() {
                    if c.trough_time.is_none() && c.peak_time < t[lo] {
                        c.trough_time = Some(t[at]);
                        c.trough_value = Some(x[at]);
                    }
                }
            }
            Level::Unknown => unreachable!(),
        }
    }
    Ok(PhaseResult {
        cycles,
        period: cfg.period,
        range,
    })
}

/// Per-run phase CSV header.
pub const PHASE_CSV_HEADER: &str =
    "run,cycle,peak_time_h,peak_phase_h,peak_value,trough_time_h,trough_value";

pub fn write_phase_rows<W: Write>(run: usize, result: &PhaseResult, mut w: W) -> std::io::Result<()> {
    for (i, c) in result.cycles.iter().enumerate() {
        writeln!(
            w,
            "{run},{i},{},{},{},{},{}",
            fmt_time(c.peak_time),
            fmt_value(c.peak_time.rem_euclid(result.period)),
            fmt_value(c.peak_value),
            c.trough_time.map(fmt_time).unwrap_or_default(),
            c.trough_value.map(fmt_value).unwrap_or_default(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(days: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (days * 24.0 * 10.0) as usize;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 / 10.0).collect();
        let x = t.iter().map(|&t| (TAU * t / 24.0).sin()).collect();
        (t, x)
    }

    #[test]
    fn sinusoid_has_one_peak_per_day() {
        let (t, x) = sine(10.0);
        let r = detect_phases_series(&t, &x, &PhaseConfig::default()).unwrap();
        assert_eq!(r.cycles.len(), 10);
        for (i, c) in r.cycles.iter().enumerate() {
            assert!((c.peak_time - (6.0 + 24.0 * i as f64)).abs() < 1e-9);
            assert!((c.peak_value - 1.0).abs() < 1e-12);
        }
        assert!((r.cycles[0].trough_time.unwrap() - 18.0).abs() < 1e-9);
        let s = r.summary().unwrap();
        assert!(s.sd < 1e-6);
        assert!((s.mean - 6.0).abs() < 1e-6);
    }

    #[test]
    fn sub_band_spike_is_ignored() {
        let (t, mut x) = sine(10.0);
        // a spike of 0.25 * range at the trough of day 3
        let k = t.iter().position(|&v| (v - 66.0).abs() < 1e-9).unwrap();
        x[k] += 0.5;
        let r = detect_phases_series(&t, &x, &PhaseConfig::default()).unwrap();
        assert_eq!(r.cycles.len(), 10);
    }

    #[test]
    fn flat_signal_has_no_cycles() {
        let t: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let r = detect_phases_series(&t, &vec![3.0; 100], &PhaseConfig::default()).unwrap();
        assert!(r.cycles.is_empty());
        assert!(r.summary().is_none());
    }

    #[test]
    fn truncated_edge_peaks_are_dropped() {
        // starts at a maximum: the first peak's true time is unknown
        let n = 480;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 / 10.0).collect();
        let x: Vec<f64> = t.iter().map(|&t| (TAU * t / 24.0).cos()).collect();
        let r = detect_phases_series(&t, &x, &PhaseConfig::default().with_window(0.0, 48.0)).unwrap();
        assert_eq!(r.peak_times(), vec![24.0]);
    }

    #[test]
    fn ties_resolve_to_the_earliest_sample() {
        let t: Vec<f64> = (0..9).map(|k| k as f64).collect();
        let x = [0.0, 0.0, 5.0, 5.0, 5.0, 0.0, 0.0, 1.0, 0.0];
        let r = detect_phases_series(&t, &x, &PhaseConfig::default().with_window(0.0, 8.0)).unwrap();
        assert_eq!(r.peak_times(), vec![2.0]);
        assert_eq!(r.cycles[0].trough_time, Some(5.0));
    }

    #[test]
    fn circular_mean_wraps_midnight() {
        let s = circular_summary(&[23.0, 1.0], 24.0).unwrap();
        assert!(s.mean < 1e-9 || (24.0 - s.mean) < 1e-9);
        assert!(s.sd > 0.9 && s.sd < 1.1);
    }

    #[test]
    fn smoothing_and_validation() {
        assert!(PhaseConfig { low_frac: 0.4, ..PhaseConfig::default() }.validate().is_err());
        assert_eq!(moving_average(&[0.0, 3.0, 0.0, 3.0], 3), vec![1.5, 1.0, 2.0, 1.5]);
        let (t, x) = sine(3.0);
        let cfg = PhaseConfig {
            smoothing: Some(5),
            ..PhaseConfig::default().with_window(0.0, 72.0)
        };
        assert_eq!(detect_phases_series(&t, &x, &cfg).unwrap().cycles.len(), 3);
    }

    proptest! {
        #[test]
        fn scale_and_shift_invariance(
            xs in prop::collection::vec(-64i32..64, 10..200),
            a_exp in -3i32..4,
            b in -100i32..100,
        ) {
            let t: Vec<f64> = (0..xs.len()).map(|k| k as f64).collect();
            let x: Vec<f64> = xs.iter().map(|&v| v as f64 / 8.0).collect();
            let a = 2f64.powi(a_exp);
            let y: Vec<f64> = x.iter().map(|&v| a * v + b as f64).collect();
            let cfg = PhaseConfig::default().with_window(0.0, xs.len() as f64);
            let r1 = detect_phases_series(&t, &x, &cfg).unwrap();
            let r2 = detect_phases_series(&t, &y, &cfg).unwrap();
            prop_assert_eq!(r1.peak_times(), r2.peak_times());
            let tr1: Vec<_> = r1.cycles.iter().map(|c| c.trough_time).collect();
            let tr2: Vec<_> = r2.cycles.iter().map(|c| c.trough_time).collect();
            prop_assert_eq!(tr1, tr2);
        }

        #[test]
        fn hysteresis_guarantees(xs in prop::collection::vec(0.0f64..100.0, 10..300)) {
            let t: Vec<f64> = (0..xs.len()).map(|k| k as f64).collect();
            let cfg = PhaseConfig::default().with_window(0.0, xs.len() as f64);
            let r = detect_phases_series(&t, &xs, &cfg).unwrap();
            if r.range > 0.0 {
                let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let lo_th = min + 0.2 * r.range;
                for w in r.cycles.windows(2) {
                    prop_assert!(w[0].peak_time < w[1].peak_time);
                    // some sample between consecutive peaks is below the low threshold
                    let (i0, i1) = (w[0].peak_time as usize, w[1].peak_time as usize);
                    prop_assert!(xs[i0..i1].iter().any(|&v| v < lo_th));
                }
                for c in &r.cycles {
                    prop_assert!(c.peak_value >= min + 0.35 * r.range);
                    if let Some(tv) = c.trough_value {
                        prop_assert!(c.peak_value - tv >= 0.15 * r.range - 1e-9);
                    }
                }
            }
        }
    }
}
