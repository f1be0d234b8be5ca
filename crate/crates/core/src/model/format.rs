//! Line-oriented model files.
//!
//! ```text
//! # birth-death
//! [parameters]
//! k = 10
//! d = 0.5
//! [species]
//! X = 0            # initial concentration; count = floor(value * omega)
//! [omega]
//! 1
//! [observables]
//! Total = X
//! [reactions]
//! birth: -> X @ k
//! death: X -> @ d * X
//! ```
//!
//! Reactions read `id: reactants -> products | modifiers @ rate`, where the
//! modifier list is comma separated and optional.

use std::fmt::{self, Write as _};

use indexmap::IndexMap;

use super::expr::{parse_expr_at, BinOp, Expr};
use super::{Network, Observable, Reaction};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Parameters,
    Species,
    Omega,
    Observables,
    Reactions,
}

struct Line<'a> {
    number: usize,
    text: &'a str,
}

impl Line<'_> {
    fn err(&self, byte: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.number,
            column: self.text[..byte.min(self.text.len())].chars().count() + 1,
            message: message.into(),
        }
    }

    fn col_of(&self, byte: usize) -> usize {
        self.text[..byte].chars().count() + 1
    }
}

fn offset(outer: &str, inner: &str) -> usize {
    inner.as_ptr() as usize - outer.as_ptr() as usize
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn number(line: &Line<'_>, s: &str) -> Result<f64> {
    let t = s.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| line.err(offset(line.text, t), format!("expected a number, found `{t}`")))
}

fn assignment<'a>(line: &Line<'a>) -> Result<(&'a str, &'a str)> {
    let Some(eq) = line.text.find('=') else {
        return Err(line.err(0, "expected `name = value`"));
    };
    let name = line.text[..eq].trim();
    if !is_identifier(name) {
        return Err(line.err(offset(line.text, name), format!("invalid name `{name}`")));
    }
    Ok((name, &line.text[eq + 1..]))
}

struct Draft<'a> {
    parameters: Vec<(&'a str, f64)>,
    species: Vec<(&'a str, f64)>,
    omega: Option<f64>,
    observables: Vec<(Line<'a>, &'a str, Expr)>,
    reactions: Vec<(Line<'a>, RawReaction<'a>)>,
}

struct RawReaction<'a> {
    id: &'a str,
    reactants: Vec<(&'a str, u32, usize)>,
    products: Vec<(&'a str, u32, usize)>,
    modifiers: Vec<(&'a str, usize)>,
    rate: Expr,
}

fn stoich_list<'a>(line: &Line<'a>, part: &'a str) -> Result<Vec<(&'a str, u32, usize)>> {
    let mut out = Vec::new();
    if part.trim().is_empty() {
        return Ok(out);
    }
    for term in part.split('+') {
        let t = term.trim();
        let at = offset(line.text, t);
        if t.is_empty() {
            return Err(line.err(offset(line.text, term), "empty species term"));
        }
        let (k, name) = match t.find(|c: char| !c.is_ascii_digit()) {
            Some(0) => (1, t),
            Some(i) => {
                let k: u32 = t[..i]
                    .parse()
                    .map_err(|_| line.err(at, "malformed stoichiometry"))?;
                (k, t[i..].trim_start().trim_start_matches('*').trim_start())
            }
            None => return Err(line.err(at, format!("missing species after `{t}`"))),
        };
        if k == 0 {
            return Err(line.err(at, "stoichiometry must be at least 1"));
        }
        if !is_identifier(name) {
            return Err(line.err(at, format!("invalid species name `{name}`")));
        }
        out.push((name, k, offset(line.text, name)));
    }
    Ok(out)
}

fn reaction_line<'a>(line: &Line<'a>) -> Result<RawReaction<'a>> {
    let text = line.text;
    let Some(colon) = text.find(':') else {
        return Err(line.err(0, "expected `id: reactants -> products @ rate`"));
    };
    let id = text[..colon].trim();
    if !is_identifier(id) {
        return Err(line.err(offset(text, id), format!("invalid reaction id `{id}`")));
    }
    let Some(at) = text.find('@') else {
        return Err(line.err(text.len(), "missing `@ rate`"));
    };
    if at < colon {
        return Err(line.err(at, "`@` before reaction id"));
    }
    let scheme = &text[colon + 1..at];
    let Some(arrow) = scheme.find("->") else {
        return Err(line.err(colon + 1, "missing `->`"));
    };
    let lhs = &scheme[..arrow];
    let rest = &scheme[arrow + 2..];
    let (rhs, mods) = match rest.find('|') {
        Some(bar) => (&rest[..bar], Some(&rest[bar + 1..])),
        None => (rest, None),
    };
    let mut modifiers = Vec::new();
    if let Some(mods) = mods {
        for m in mods.split(',') {
            let name = m.trim();
            if !is_identifier(name) {
                return Err(line.err(offset(text, m), format!("invalid modifier `{name}`")));
            }
            modifiers.push((name, offset(text, name)));
        }
    }
    let rate_src = &text[at + 1..];
    let rate = parse_expr_at(rate_src, line.number, line.col_of(at + 1))?;
    Ok(RawReaction {
        id,
        reactants: stoich_list(line, lhs)?,
        products: stoich_list(line, rhs)?,
        modifiers,
        rate,
    })
}

/// Flattens `c1 * A + B - c3 * C` into coefficient/name pairs.
fn linear_terms(e: &Expr, sign: f64, out: &mut Vec<(f64, String)>) -> std::result::Result<(), ()> {
    match e {
        Expr::Var(name) => out.push((sign, name.clone())),
        Expr::Neg(a) => linear_terms(a, -sign, out)?,
        Expr::Bin(BinOp::Add, a, b) => {
            linear_terms(a, sign, out)?;
            linear_terms(b, sign, out)?;
        }
        Expr::Bin(BinOp::Sub, a, b) => {
            linear_terms(a, sign, out)?;
            linear_terms(b, -sign, out)?;
        }
        Expr::Bin(BinOp::Mul, a, b) => match (&**a, &**b) {
            (Expr::Num(c), Expr::Var(name)) | (Expr::Var(name), Expr::Num(c)) => {
                out.push((sign * c, name.clone()))
            }
            _ => return Err(()),
        },
        _ => return Err(()),
    }
    Ok(())
}

/// Parses a model file into a validated [`Network`].
pub fn parse_network(text: &str) -> Result<Network> {
    let mut draft = Draft {
        parameters: Vec::new(),
        species: Vec::new(),
        omega: None,
        observables: Vec::new(),
        reactions: Vec::new(),
    };
    let mut section = Section::None;
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let line = Line {
            number: i + 1,
            text: body,
        };
        let trimmed = body.trim();
        if trimmed.starts_with('[') {
            section = match trimmed {
                "[parameters]" => Section::Parameters,
                "[species]" => Section::Species,
                "[omega]" => Section::Omega,
                "[observables]" => Section::Observables,
                "[reactions]" => Section::Reactions,
                _ => {
                    return Err(line.err(
                        offset(body, trimmed),
                        format!("unknown section `{trimmed}`"),
                    ))
                }
            };
            continue;
        }
        match section {
            Section::None => return Err(line.err(0, "content before the first section header")),
            Section::Parameters => {
                let (name, value) = assignment(&line)?;
                draft.parameters.push((name, number(&line, value)?));
            }
            Section::Species => {
                let (name, value) = assignment(&line)?;
                draft.species.push((name, number(&line, value)?));
            }
            Section::Omega => {
                if draft.omega.is_some() {
                    return Err(line.err(0, "omega given twice"));
                }
                let value = match trimmed.find('=') {
                    Some(eq) => {
                        let (name, value) = trimmed.split_at(eq);
                        if name.trim() != "omega" {
                            return Err(line.err(0, "expected `omega = value`"));
                        }
                        &value[1..]
                    }
                    None => trimmed,
                };
                draft.omega = Some(number(&line, value)?);
            }
            Section::Observables => {
                let (name, value) = assignment(&line)?;
                let at = offset(body, value);
                let e = parse_expr_at(value, line.number, line.col_of(at))?;
                draft.observables.push((line, name, e));
            }
            Section::Reactions => {
                let r = reaction_line(&line)?;
                draft.reactions.push((line, r));
            }
        }
    }
    build(draft)
}

fn build(draft: Draft<'_>) -> Result<Network> {
    let omega = draft
        .omega
        .ok_or_else(|| Error::InvalidNetwork("missing [omega] section".into()))?;
    let mut parameters = IndexMap::new();
    for (name, v) in draft.parameters {
        if parameters.insert(name.to_string(), v).is_some() {
            return Err(Error::InvalidNetwork(format!("duplicate parameter `{name}`")));
        }
    }
    let species_names: Vec<&str> = draft.species.iter().map(|(n, _)| *n).collect();
    let resolve = |name: &str| -> Result<usize> {
        species_names
            .iter()
            .position(|s| *s == name)
            .ok_or_else(|| Error::UndeclaredReference {
                kind: "species",
                name: name.to_string(),
            })
    };

    let mut observables = Vec::new();
    for (line, name, e) in &draft.observables {
        let mut terms = Vec::new();
        linear_terms(e, 1.0, &mut terms)
            .map_err(|_| line.err(0, format!("observable `{name}` is not a linear combination of species")))?;
        let terms = terms
            .into_iter()
            .map(|(c, s)| Ok((c, resolve(&s)?)))
            .collect::<Result<Vec<_>>>()?;
        observables.push(Observable {
            name: name.to_string(),
            terms,
        });
    }

    let mut reactions = Vec::new();
    for (_, r) in &draft.reactions {
        let side = |list: &[(&str, u32, usize)]| -> Result<Vec<(usize, u32)>> {
            list.iter()
                .map(|&(name, k, _)| Ok((resolve(name)?, k)))
                .collect()
        };
        reactions.push(Reaction {
            id: r.id.to_string(),
            reactants: side(&r.reactants)?,
            products: side(&r.products)?,
            modifiers: r
                .modifiers
                .iter()
                .map(|&(name, _)| resolve(name))
                .collect::<Result<_>>()?,
            rate: r.rate.clone(),
        });
    }

    let species = draft
        .species
        .into_iter()
        .map(|(n, c)| (n.to_string(), c))
        .collect();
    Network::new(species, reactions, parameters, omega, observables)
}

fn write_side(out: &mut String, net: &Network, side: &[(usize, u32)]) {
    for (i, &(s, k)) in side.iter().enumerate() {
        if i > 0 {
            out.push_str(" + ");
        }
        if k != 1 {
            let _ = write!(out, "{k} ");
        }
        out.push_str(&net.species[s].name);
    }
}

impl fmt::Display for Network {
    /// Serializes in the model file format; `parse_network` reads it back.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        out.push_str("[parameters]\n");
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("\n[species]\n");
        for s in &self.species {
            let _ = writeln!(out, "{} = {}", s.name, s.concentration);
        }
        let _ = writeln!(out, "\n[omega]\n{}", self.omega);
        out.push_str("\n[observables]\n");
        for o in &self.observables {
            let _ = write!(out, "{} =", o.name);
            for (i, &(c, s)) in o.terms.iter().enumerate() {
                let name = &self.species[s].name;
                let sign = if c < 0.0 { "-" } else if i == 0 { "" } else { "+" };
                if !sign.is_empty() {
                    let _ = write!(out, " {sign}");
                }
                if c.abs() == 1.0 {
                    let _ = write!(out, " {name}");
                } else {
                    let _ = write!(out, " {} * {name}", c.abs());
                }
            }
            out.push('\n');
        }
        out.push_str("\n[reactions]\n");
        for r in &self.reactions {
            let _ = write!(out, "{}: ", r.id);
            write_side(&mut out, self, &r.reactants);
            out.push_str(" -> ");
            write_side(&mut out, self, &r.products);
            if !r.modifiers.is_empty() {
                let names: Vec<&str> = r
                    .modifiers
                    .iter()
                    .map(|&s| self.species[s].name.as_str())
                    .collect();
                let _ = write!(out, " | {}", names.join(", "));
            }
            let _ = writeln!(out, " @ {}", r.rate);
        }
        f.write_str(&out)
    }
}
