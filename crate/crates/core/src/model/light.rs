use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::expr::heaviside;

pub const DAY_HOURS: f64 = 24.0;

/// Environmental light protocol. Times are in hours from the start of the
/// experiment; periodic schedules use the absolute time of day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LightSchedule {
    ConstantDark,
    ConstantLight,
    Periodic {
        dawn: f64,
        dusk: f64,
    },
    Transfer {
        before: Box<LightSchedule>,
        switch_time: f64,
        after: Box<LightSchedule>,
    },
}

impl LightSchedule {
    pub fn periodic(dawn: f64, dusk: f64) -> Result<Self> {
        let s = LightSchedule::Periodic { dawn, dusk };
        s.validate()?;
        Ok(s)
    }

    /// LD `light`:`dark` photoperiod with lights on at 06:00.
    pub fn photoperiod(light_hours: f64, dark_hours: f64) -> Result<Self> {
        if !(light_hours > 0.0 && dark_hours > 0.0) {
            return Err(Error::invalid(format!(
                "photoperiod LD {light_hours}:{dark_hours} needs positive light and dark hours"
            )));
        }
        if (light_hours + dark_hours - DAY_HOURS).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "photoperiod LD {light_hours}:{dark_hours} must sum to 24 h"
            )));
        }
        if light_hours > 18.0 {
            // dawn at 6 leaves at most 18 lit hours before midnight
            let dawn = DAY_HOURS - light_hours;
            return Self::periodic(dawn, DAY_HOURS);
        }
        Self::periodic(6.0, 6.0 + light_hours)
    }

    pub fn transfer(before: LightSchedule, switch_time: f64, after: LightSchedule) -> Result<Self> {
        let s = LightSchedule::Transfer {
            before: Box::new(before),
            switch_time,
            after: Box::new(after),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LightSchedule::ConstantDark | LightSchedule::ConstantLight => Ok(()),
            LightSchedule::Periodic { dawn, dusk } => {
                if !(0.0..DAY_HOURS).contains(dawn) {
                    return Err(Error::invalid(format!("t_dawn = {dawn} must lie in [0, 24)")));
                }
                if !(*dusk > *dawn) {
                    return Err(Error::invalid(format!(
                        "t_dawn must be < t_dusk (got t_dawn = {dawn}, t_dusk = {dusk})"
                    )));
                }
                if *dusk > DAY_HOURS {
                    return Err(Error::invalid(format!("t_dusk = {dusk} must be <= 24")));
                }
                Ok(())
            }
            LightSchedule::Transfer {
                before,
                switch_time,
                after,
            } => {
                if !(*switch_time >= 0.0 && switch_time.is_finite()) {
                    return Err(Error::invalid(format!(
                        "transfer time {switch_time} must be a finite non-negative number of hours"
                    )));
                }
                for s in [before, after] {
                    if matches!(**s, LightSchedule::Transfer { .. }) {
                        return Err(Error::invalid("only one transfer per light protocol"));
                    }
                    s.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Light level at time `t` (hours): 1 in daytime, 0 at night. Dawn and
    /// dusk instants themselves are dark (H(0) = 0).
    pub fn light_at(&self, t: f64) -> f64 {
        match self {
            LightSchedule::ConstantDark => 0.0,
            LightSchedule::ConstantLight => 1.0,
            LightSchedule::Periodic { dawn, dusk } => {
                let tod = t - DAY_HOURS * (t / DAY_HOURS).floor();
                heaviside((tod - dawn) * (dusk - tod))
            }
            LightSchedule::Transfer {
                before,
                switch_time,
                after,
            } => {
                if t < *switch_time {
                    before.light_at(t)
                } else {
                    after.light_at(t)
                }
            }
        }
    }

    /// First instant strictly after `t` at which the light level may change.
    pub fn next_switch_after(&self, t: f64) -> Option<f64> {
        match self {
            LightSchedule::ConstantDark | LightSchedule::ConstantLight => None,
            LightSchedule::Periodic { dawn, dusk } => {
                let day = (t / DAY_HOURS).floor();
                let mut best = f64::INFINITY;
                for k in [day - 1.0, day, day + 1.0] {
                    for edge in [*dawn, *dusk] {
                        let s = k * DAY_HOURS + edge;
                        if s > t && s < best {
                            best = s;
                        }
                    }
                }
                Some(best)
            }
            LightSchedule::Transfer {
                before,
                switch_time,
                after,
            } => {
                if t < *switch_time {
                    let inner = before.next_switch_after(t).filter(|s| *s < *switch_time);
                    Some(inner.unwrap_or(*switch_time))
                } else {
                    after.next_switch_after(t)
                }
            }
        }
    }

    /// Light level on the open interval starting at `t` and ending at the
    /// next switch. Engines use this for each constant-light segment.
    pub fn light_after(&self, t: f64) -> f64 {
        let next = self.next_switch_after(t).unwrap_or(t + 1.0).min(t + 1.0);
        self.light_at(0.5 * (t + next))
    }

    /// Switch instants in the open interval `(t0, t1)`, ascending.
    pub fn switch_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = t0;
        while let Some(s) = self.next_switch_after(t) {
            if s >= t1 {
                break;
            }
            out.push(s);
            t = s;
        }
        out
    }

    pub fn label(&self) -> String {
        match self {
            LightSchedule::ConstantDark => "DD".into(),
            LightSchedule::ConstantLight => "LL".into(),
            LightSchedule::Periodic { dawn, dusk } => format!("LD(dawn={dawn},dusk={dusk})"),
            LightSchedule::Transfer {
                before,
                switch_time,
                after,
            } => format!("{}-{}@{switch_time}", before.label(), after.label()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ld12() -> LightSchedule {
        LightSchedule::periodic(6.0, 18.0).unwrap()
    }

    #[test]
    fn periodic_examples() {
        let s = ld12();
        assert_eq!(s.light_at(12.0), 1.0);
        assert_eq!(s.light_at(30.0), 0.0);
        assert_eq!(s.light_at(18.0), 0.0);
        assert_eq!(s.light_at(6.0001), 1.0);
        assert_eq!(s.light_at(17.9999), 1.0);
        assert_eq!(s.light_at(0.0), 0.0);
    }

    #[test]
    fn transfer_ll_dd() {
        let s = LightSchedule::transfer(
            LightSchedule::ConstantLight,
            160.0,
            LightSchedule::ConstantDark,
        )
        .unwrap();
        assert_eq!(s.light_at(159.9), 1.0);
        assert_eq!(s.light_at(160.1), 0.0);
        assert_eq!(s.switch_times(0.0, 500.0), vec![160.0]);
    }

    #[test]
    fn invalid_schedules() {
        assert!(LightSchedule::periodic(18.0, 6.0).is_err());
        assert!(LightSchedule::periodic(12.0, 12.0).is_err());
        assert!(LightSchedule::periodic(6.0, 25.0).is_err());
        let inner = LightSchedule::transfer(
            LightSchedule::ConstantLight,
            10.0,
            LightSchedule::ConstantDark,
        )
        .unwrap();
        assert!(LightSchedule::transfer(inner, 20.0, LightSchedule::ConstantDark).is_err());
        assert!(LightSchedule::photoperiod(18.0, 7.0).is_err());
    }

    #[test]
    fn photoperiods() {
        assert_eq!(LightSchedule::photoperiod(12.0, 12.0).unwrap(), ld12());
        assert_eq!(
            LightSchedule::photoperiod(6.0, 18.0).unwrap(),
            LightSchedule::Periodic { dawn: 6.0, dusk: 12.0 }
        );
        assert_eq!(
            LightSchedule::photoperiod(18.0, 6.0).unwrap(),
            LightSchedule::Periodic { dawn: 6.0, dusk: 24.0 }
        );
        assert_eq!(
            LightSchedule::photoperiod(20.0, 4.0).unwrap(),
            LightSchedule::Periodic { dawn: 4.0, dusk: 24.0 }
        );
    }

    #[test]
    fn twelve_lit_hours_per_day() {
        let s = ld12();
        let n = 240_000;
        let dt = 24.0 / n as f64;
        for day in 0..3 {
            let lit: f64 = (0..n)
                .map(|k| s.light_at(day as f64 * 24.0 + (k as f64 + 0.5) * dt) * dt)
                .sum();
            assert!((lit - 12.0).abs() < 1e-6, "{lit}");
        }
    }

    #[test]
    fn switch_times_ld() {
        let s = ld12();
        assert_eq!(s.switch_times(0.0, 48.0), vec![6.0, 18.0, 30.0, 42.0]);
        assert_eq!(s.switch_times(6.0, 30.0), vec![18.0]);
        assert_eq!(s.light_after(6.0), 1.0);
        assert_eq!(s.light_after(18.0), 0.0);
        let dusk24 = LightSchedule::photoperiod(18.0, 6.0).unwrap();
        assert_eq!(dusk24.switch_times(0.0, 49.0), vec![6.0, 24.0, 30.0, 48.0]);
        assert_eq!(dusk24.light_after(24.0), 0.0);
        assert_eq!(dusk24.light_after(23.0), 1.0);
    }

    proptest! {
        #[test]
        fn periodic_has_period_24(t in 0.0f64..1.0e4, dawn in 0.0f64..20.0, len in 0.5f64..4.0) {
            let s = LightSchedule::periodic(dawn, dawn + len).unwrap();
            // exact period-24 shifts of binary fractions keep t mod 24 exact
            let t = (t * 1024.0).round() / 1024.0;
            prop_assert_eq!(s.light_at(t), s.light_at(t + 24.0));
        }

        #[test]
        fn light_constant_between_switches(t in 0.0f64..500.0) {
            let s = ld12();
            let next = s.next_switch_after(t).unwrap();
            prop_assert!(next > t && next - t <= 12.0 + 1e-9);
            let l = s.light_after(t);
            for k in 1..10 {
                let u = t + (next - t) * k as f64 / 10.0;
                prop_assert_eq!(s.light_at(u), l);
            }
        }
    }
}
