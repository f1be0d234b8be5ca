use std::io::Write;

use crate::model::{Observable, Schema};

/// Uniform sampling grid `start + k * step`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Grid {
    /// Grid covering `[start, end]` with spacing `step`; the last point is
    /// the largest grid time not exceeding `end` (within 1e-9 h).
    pub fn covering(start: f64, end: f64, step: f64) -> Grid {
        let n = ((end - start) / step + 1e-9).floor().max(0.0) as usize;
        Grid {
            start,
            step,
            len: n + 1,
        }
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        // rounding keeps 0.1-spaced grids printing as 0.3 rather than 0.30000000000000004
        let t = self.start + k as f64 * self.step;
        (t * 1e9).round() / 1e9
    }

    pub fn end(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }

    /// Index of the grid point at `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.start) / self.step;
        let k = x.round();
        if k < 0.0 || (x - k).abs() > 1e-6 || k as usize >= self.len {
            return None;
        }
        Some(k as usize)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.time(k))
    }
}

/// A sampled trajectory: one state vector per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    times: Vec<f64>,
    n_species: usize,
    states: Vec<f64>,
}

impl Trace {
    pub fn new(n_species: usize) -> Self {
        Trace {
            times: Vec::new(),
            n_species,
            states: Vec::new(),
        }
    }

    pub fn with_capacity(n_species: usize, points: usize) -> Self {
        Trace {
            times: Vec::with_capacity(points),
            n_species,
            states: Vec::with_capacity(points * n_species),
        }
    }

    pub fn push(&mut self, t: f64, state: &[f64]) {
        debug_assert_eq!(state.len(), self.n_species);
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.states.extend_from_slice(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n_species..(i + 1) * self.n_species]
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    pub fn species(&self, s: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.state(i)[s]).collect()
    }

    pub fn observable(&self, obs: &Observable) -> Vec<f64> {
        (0..self.len()).map(|i| obs.eval(self.state(i))).collect()
    }

    /// Species or observable column by name.
    pub fn column(&self, schema: &Schema, name: &str) -> Option<Vec<f64>> {
        schema.column(name).map(|o| self.observable(&o))
    }

    /// CSV with `time_h`, species columns, then observable columns.
    pub fn write_csv<W: Write>(&self, schema: &Schema, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["time_h".to_string()];
        header.extend(schema.species.iter().cloned());
        header.extend(schema.observables.iter().map(|o| o.name.clone()));
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            line.push_str(&fmt_time(self.times[i]));
            let s = self.state(i);
            for &x in s {
                line.push(',');
                line.push_str(&fmt_value(x));
            }
            for o in &schema.observables {
                line.push(',');
                line.push_str(&fmt_value(o.eval(s)));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

pub fn fmt_time(t: f64) -> String {
    format!("{t}")
}

/// 17 significant digits; integral values (SSA counts) print as integers.
pub fn fmt_value(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = Grid::covering(0.0, 240.0, 0.1);
        assert_eq!(g.len, 2401);
        assert_eq!(g.time(3), 0.3);
        assert_eq!(g.end(), 240.0);
        assert_eq!(g.index_of(96.0), Some(960));
        assert_eq!(g.index_of(96.05), None);
        assert_eq!(g.index_of(240.1), None);
        assert_eq!(Grid::covering(0.0, 1.05, 0.1).len, 11);
    }

    #[test]
    fn value_formatting() {
        assert_eq!(fmt_value(201.0), "201");
        assert_eq!(fmt_value(0.0), "0");
        assert_eq!(fmt_value(0.1), "1.0000000000000001e-1");
        let x = 133.29715304764851;
        assert_eq!(fmt_value(x).parse::<f64>().unwrap(), x);
    }
}
