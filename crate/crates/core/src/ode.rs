//! Deterministic integration with the Dormand–Prince 5(4) pair.
//!
//! Light is piecewise constant, so the integration is split into segments at
//! the switch instants of the schedule and no step ever straddles one. Each
//! segment is smooth and is integrated with PI step-size control; the fixed
//! output grid is filled from the pair's continuous extension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Kinetics, LightSchedule, Network};
use crate::trace::{Grid, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `None` picks the first step automatically.
    pub initial_step: Option<f64>,
    pub max_step: f64,
    /// Output sampling interval in hours.
    pub output_grid: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            initial_step: None,
            max_step: 1.0,
            output_grid: 0.1,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::invalid("ODE tolerances must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::invalid("max_step must be positive"));
        }
        if !(self.output_grid > 0.0) {
            return Err(Error::invalid("output grid spacing must be positive"));
        }
        if matches!(self.initial_step, Some(h) if !(h > 0.0)) {
            return Err(Error::invalid("initial_step must be positive"));
        }
        Ok(())
    }
}

/// Components may dip this far below zero before the run is aborted.
pub const UNDERSHOOT_LIMIT: f64 = -1e-9;

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// step control
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 50_000_000;

/// Deterministic right-hand side of the network at `state` under constant
/// `light`.
pub fn rhs(net: &Network, state: &[f64], light: f64) -> Result<Vec<f64>> {
    let k = net.compile()?;
    let mut out = vec![0.0; k.n_species()];
    k.rhs(state, light, 0.0, &mut out)?;
    Ok(out)
}

struct Stepper<'a> {
    kin: &'a Kinetics,
    light: f64,
    scratch: Vec<f64>,
}

impl Stepper<'_> {
    /// Evaluates f(t, max(x, 0)).
    fn eval(&mut self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (s, &v) in self.scratch.iter_mut().zip(x) {
            *s = v.max(0.0);
        }
        self.kin.rhs(&self.scratch, self.light, t, out)?;
        if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure {
                time: t,
                reason: format!("non-finite derivative {bad}"),
            });
        }
        Ok(())
    }
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], cfg: &OdeConfig) -> f64 {
    if y0.is_empty() {
        return 0.0;
    }
    let sum: f64 = y0
        .iter()
        .zip(y1)
        .zip(err)
        .map(|((&a, &b), &e)| {
            let sk = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / y0.len() as f64).sqrt()
}

/// Integrates the network from its initial state over `[0, t_end]`.
pub fn integrate(
    net: &Network,
    sched: &LightSchedule,
    t_end: f64,
    cfg: &OdeConfig,
) -> Result<Trace> {
    let y0 = net.initial_state();
    integrate_from(net, sched, &y0, 0.0, t_end, cfg)
}

/// Integrates from an arbitrary state `y0` at time `t0`. Output times lie on
/// the grid `t0 + k * cfg.output_grid`.
pub fn integrate_from(
    net: &Network,
    sched: &LightSchedule,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    cfg: &OdeConfig,
) -> Result<Trace> {
    cfg.validate()?;
    sched.validate()?;
    if !(t_end > t0) {
        return Err(Error::invalid(format!("t_end = {t_end} must exceed the start time {t0}")));
    }
    let kin = net.compile()?;
    let n = kin.n_species();
    if y0.len() != n {
        return Err(Error::invalid("initial state has the wrong length"));
    }
    let grid = Grid::covering(t0, t_end, cfg.output_grid);
    let mut trace = Trace::with_capacity(n, grid.len);
    trace.push(grid.time(0), &clamped(y0));
    let mut next_out = 1usize;

    let mut bounds = sched.switch_times(t0, t_end);
    bounds.push(t_end);

    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h_prev: Option<f64> = cfg.initial_step;
    let mut steps = 0usize;

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut dense = vec![[0.0f64; 5]; n];

    for &seg_end in &bounds {
        let mut st = Stepper {
            kin: &kin,
            light: sched.light_after(t),
            scratch: vec![0.0; n],
        };
        st.eval(t, &y, &mut k1)?;
        let mut h = match h_prev {
            Some(h) => h,
            None => initial_step(&mut st, t, &y, &k1, cfg)?,
        }
        .min(cfg.max_step);
        let mut facold: f64 = 1e-4;
        let mut last_rejected = false;

        while t < seg_end {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: "step budget exhausted".into(),
                });
            }
            let remaining = seg_end - t;
            let stepping_to_end = h >= remaining * (1.0 - 1e-12);
            let h_try = if stepping_to_end { remaining } else { h };
            if h_try < 1e-12 * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: format!("step size underflow (h = {h_try:e})"),
                });
            }

            for i in 0..n {
                ys[i] = y[i] + h_try * A21 * k1[i];
            }
            st.eval(t + C2 * h_try, &ys, &mut k2)?;
            for i in 0..n {
                ys[i] = y[i] + h_try * (A31 * k1[i] + A32 * k2[i]);
            }
            st.eval(t + C3 * h_try, &ys, &mut k3)?;
            for i in 0..n {
                ys[i] = y[i] + h_try * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            st.eval(t + C4 * h_try, &ys, &mut k4)?;
            for i in 0..n {
                ys[i] = y[i] + h_try * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            st.eval(t + C5 * h_try, &ys, &mut k5)?;
            for i in 0..n {
                ys[i] = y[i]
                    + h_try
                        * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if stepping_to_end { seg_end } else { t + h_try };
            st.eval(t_new, &ys, &mut k6)?;
            for i in 0..n {
                y1[i] = y[i]
                    + h_try
                        * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            st.eval(t_new, &y1, &mut k7)?;
            for i in 0..n {
                err[i] = h_try
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
            }
            let e = error_norm(&y, &y1, &err, cfg);
            if !e.is_finite() {
                return Err(Error::IntegrationFailure {
                    time: t,
                    reason: "non-finite error estimate".into(),
                });
            }
            let fac11 = e.powf(EXPO1);
            if e <= 1.0 {
                // accepted
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = h_try * k1[i] - ydiff;
                    dense[i] = [
                        y[i],
                        ydiff,
                        bspl,
                        ydiff - h_try * k7[i] - bspl,
                        h_try
                            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                                + D7 * k7[i]),
                    ];
                }
                while next_out < grid.len && grid.time(next_out) <= t_new + 1e-9 {
                    let g = grid.time(next_out);
                    let theta = ((g - t) / h_try).clamp(0.0, 1.0);
                    let theta1 = 1.0 - theta;
                    for (i, d) in dense.iter().enumerate() {
                        ys[i] = d[0]
                            + theta * (d[1] + theta1 * (d[2] + theta * (d[3] + theta1 * d[4])));
                    }
                    check_undershoot(&ys, g)?;
                    trace.push(g, &clamped(&ys));
                    next_out += 1;
                }
                check_undershoot(&y1, t_new)?;
                std::mem::swap(&mut y, &mut y1);
                std::mem::swap(&mut k1, &mut k7);
                t = t_new;

                let mut fac = fac11 / facold.powf(BETA);
                fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h_try / fac;
                if last_rejected {
                    h_new = h_new.min(h_try);
                }
                facold = e.max(1e-4);
                last_rejected = false;
                // keep the controller's proposal rather than the truncated step
                h = if stepping_to_end { h.max(h_new) } else { h_new }.min(cfg.max_step);
            } else {
                h = h_try / (fac11 / SAFETY).min(1.0 / FAC_MIN);
                last_rejected = true;
            }
        }
        h_prev = Some(h);
    }
    // t_end may fall between grid points; everything up to it has been written
    debug_assert_eq!(next_out, grid.len);
    Ok(trace)
}

fn check_undershoot(y: &[f64], t: f64) -> Result<()> {
    if let Some(&v) = y.iter().find(|&&v| v < UNDERSHOOT_LIMIT) {
        return Err(Error::IntegrationFailure {
            time: t,
            reason: format!("state component fell to {v:e}"),
        });
    }
    Ok(())
}

fn clamped(y: &[f64]) -> Vec<f64> {
    y.iter().map(|&v| v.max(0.0)).collect()
}

/// Starting step heuristic for explicit RK methods (order 5).
fn initial_step(st: &mut Stepper<'_>, t: f64, y: &[f64], f0: &[f64], cfg: &OdeConfig) -> Result<f64> {
    let n = y.len();
    if n == 0 {
        return Ok(cfg.max_step);
    }
    let sk: Vec<f64> = y.iter().map(|&v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&sk).map(|(&a, &s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(cfg.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(&a, &b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    st.eval(t + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(&a, &b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(cfg.max_step))
}
