use clocksim::LightSchedule;

use crate::CliError;

/// Parses `DD`, `LL`, `LD <light> <dark>` (photoperiod, lights on at 06:00)
/// or `PERIODIC <dawn> <dusk>` (times of day).
pub fn parse_light(tokens: &[String]) -> Result<LightSchedule, CliError> {
    let joined = tokens.join(" ");
    let words: Vec<&str> = joined.split_whitespace().collect();
    let num = |s: &str| -> Result<f64, CliError> {
        s.parse()
            .map_err(|_| CliError::Config(format!("light: `{s}` is not a number in `{joined}`")))
    };
    let sched = match words.as_slice() {
        [w] if w.eq_ignore_ascii_case("DD") => LightSchedule::ConstantDark,
        [w] if w.eq_ignore_ascii_case("LL") => LightSchedule::ConstantLight,
        [w, a, b] if w.eq_ignore_ascii_case("LD") => LightSchedule::photoperiod(num(a)?, num(b)?)?,
        [w, a, b] if w.eq_ignore_ascii_case("PERIODIC") => LightSchedule::periodic(num(a)?, num(b)?)?,
        _ => {
            return Err(CliError::Config(format!(
                "light: cannot parse `{joined}` (expected DD, LL, LD <light> <dark> or PERIODIC <dawn> <dusk>)"
            )))
        }
    };
    Ok(sched)
}

/// Applies an optional transfer: `then` takes over at `switch_at`.
pub fn build_schedule(
    light: &[String],
    switch_at: Option<f64>,
    then: Option<&[String]>,
) -> Result<LightSchedule, CliError> {
    let first = parse_light(light)?;
    match (switch_at, then) {
        (None, None) => Ok(first),
        (Some(t), Some(after)) => Ok(LightSchedule::transfer(first, t, parse_light(after)?)?),
        _ => Err(CliError::Config("light: --switch-at and --then must be given together".into())),
    }
}
