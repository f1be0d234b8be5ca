//! Reaction networks with general rate laws and a light input.

mod builtin;
pub mod expr;
mod format;
pub mod light;

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use builtin::{builtin_ostreococcus, BUILTIN_OMEGA};
pub use expr::{Expr, Program};
pub use format::parse_network;
pub use light::LightSchedule;

use crate::error::{Error, Result};
use expr::Scope;

/// Counts above this cannot be represented exactly in the `f64` state vectors.
pub const MAX_EXACT_COUNT: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesDef {
    pub name: String,
    /// Initial amount in concentration units; the count is `floor(c * omega)`.
    pub concentration: f64,
    pub initial_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub id: String,
    /// `(species index, stoichiometry)`
    pub reactants: Vec<(usize, u32)>,
    pub products: Vec<(usize, u32)>,
    /// Species read by the rate law but left unchanged by firing.
    pub modifiers: Vec<usize>,
    pub rate: Expr,
}

impl Reaction {
    /// Net change of each touched species when the reaction fires once.
    pub fn net_change(&self) -> Vec<(usize, i64)> {
        let mut net: IndexMap<usize, i64> = IndexMap::new();
        for &(s, k) in &self.reactants {
            *net.entry(s).or_default() -= k as i64;
        }
        for &(s, k) in &self.products {
            *net.entry(s).or_default() += k as i64;
        }
        net.into_iter().filter(|&(_, d)| d != 0).collect()
    }
}

/// Linear combination of species counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub name: String,
    /// `(coefficient, species index)`
    pub terms: Vec<(f64, usize)>,
}

impl Observable {
    #[inline]
    pub fn eval(&self, state: &[f64]) -> f64 {
        self.terms.iter().map(|&(c, s)| c * state[s]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    species: Vec<SpeciesDef>,
    reactions: Vec<Reaction>,
    parameters: IndexMap<String, f64>,
    omega: f64,
    observables: Vec<Observable>,
}

/// Species/observable description shared by trace files and ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub species: Vec<String>,
    pub observables: Vec<Observable>,
    pub net_changes: Vec<Vec<(usize, i64)>>,
}

impl Schema {
    pub fn observable_index(&self, name: &str) -> Option<usize> {
        self.observables.iter().position(|o| o.name == name)
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    /// Column accessor for an observable or a bare species name.
    pub fn column(&self, name: &str) -> Option<Observable> {
        if let Some(i) = self.observable_index(name) {
            return Some(self.observables[i].clone());
        }
        self.species_index(name).map(|i| Observable {
            name: name.to_string(),
            terms: vec![(1.0, i)],
        })
    }
}

fn floor_count(concentration: f64, omega: f64) -> Result<u64> {
    let c = (concentration * omega).floor();
    if !(c >= 0.0) || c > MAX_EXACT_COUNT {
        return Err(Error::InvalidNetwork(format!(
            "initial count {c} (concentration {concentration} x omega {omega}) is not representable"
        )));
    }
    Ok(c as u64)
}

impl Network {
    /// Builds and validates a network. Species initial amounts are given as
    /// concentrations and floored after scaling by `omega`.
    pub fn new(
        species: Vec<(String, f64)>,
        reactions: Vec<Reaction>,
        parameters: IndexMap<String, f64>,
        omega: f64,
        observables: Vec<Observable>,
    ) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::invalid(format!("omega must be positive, got {omega}")));
        }
        let species = species
            .into_iter()
            .map(|(name, concentration)| {
                if !(concentration >= 0.0 && concentration.is_finite()) {
                    return Err(Error::InvalidNetwork(format!(
                        "negative or non-finite initial value {concentration} for species `{name}`"
                    )));
                }
                Ok(SpeciesDef {
                    initial_count: floor_count(concentration, omega)?,
                    name,
                    concentration,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Network {
            species,
            reactions,
            parameters,
            omega,
            observables,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for s in &self.species {
            if expr::is_reserved(&s.name) {
                return Err(Error::InvalidNetwork(format!("`{}` is a reserved name", s.name)));
            }
            if !names.insert(s.name.as_str()) {
                return Err(Error::InvalidNetwork(format!("duplicate species `{}`", s.name)));
            }
        }
        for (p, v) in &self.parameters {
            if expr::is_reserved(p) {
                return Err(Error::InvalidNetwork(format!("`{p}` is a reserved name")));
            }
            if names.contains(p.as_str()) {
                return Err(Error::InvalidNetwork(format!(
                    "`{p}` is declared both as a species and a parameter"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidNetwork(format!("parameter `{p}` is not finite")));
            }
        }
        let n = self.species.len();
        let mut ids = BTreeSet::new();
        for r in &self.reactions {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::InvalidNetwork(format!("duplicate reaction `{}`", r.id)));
            }
            for &(s, k) in r.reactants.iter().chain(&r.products) {
                if s >= n {
                    return Err(Error::InvalidNetwork(format!("reaction `{}` names species #{s}", r.id)));
                }
                if k == 0 {
                    return Err(Error::InvalidNetwork(format!(
                        "reaction `{}` has a zero stoichiometry",
                        r.id
                    )));
                }
            }
            let involved: BTreeSet<&str> = r
                .reactants
                .iter()
                .chain(&r.products)
                .map(|&(s, _)| s)
                .chain(r.modifiers.iter().copied())
                .map(|s| self.species[s].name.as_str())
                .collect();
            for ident in r.rate.identifiers() {
                if matches!(ident, expr::OMEGA | expr::LIGHT | expr::TIME) {
                    continue;
                }
                if names.contains(ident) {
                    if !involved.contains(ident) {
                        return Err(Error::InvalidNetwork(format!(
                            "rate of `{}` reads `{ident}`, which is not a reactant, product or modifier",
                            r.id
                        )));
                    }
                } else if !self.parameters.contains_key(ident) {
                    return Err(Error::UndeclaredReference {
                        kind: "identifier",
                        name: ident.to_string(),
                    });
                }
            }
        }
        for o in &self.observables {
            if o.terms.iter().any(|&(_, s)| s >= n) {
                return Err(Error::InvalidNetwork(format!(
                    "observable `{}` references an undeclared species",
                    o.name
                )));
            }
        }
        self.check_rates_by_sampling()
    }

    /// Evaluates every rate law on a fixed set of pseudo-random states and
    /// both light levels.
    fn check_rates_by_sampling(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let n = self.species.len();
        let mut states: Vec<Vec<f64>> = vec![vec![0.0; n], self.initial_state()];
        for scale in [1.0, 10.0, 1e3, 1e6] {
            for _ in 0..8 {
                states.push((0..n).map(|_| (rng.gen::<f64>() * scale).floor()).collect());
            }
        }
        for state in &states {
            for light in [0.0, 1.0] {
                for r in &self.reactions {
                    self.eval_rate_at(r, state, light, 0.0)?;
                }
            }
        }
        Ok(())
    }

    pub fn species(&self) -> &[SpeciesDef] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn parameters(&self) -> &IndexMap<String, f64> {
        &self.parameters
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn reaction_index(&self, id: &str) -> Option<usize> {
        self.reactions.iter().position(|r| r.id == id)
    }

    pub fn observable(&self, name: &str) -> Option<&Observable> {
        self.observables.iter().find(|o| o.name == name)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.initial_count as f64).collect()
    }

    pub fn schema(&self) -> Schema {
        Schema {
            species: self.species.iter().map(|s| s.name.clone()).collect(),
            observables: self.observables.clone(),
            net_changes: self.reactions.iter().map(Reaction::net_change).collect(),
        }
    }

    /// Same network with a different system size. Initial counts are
    /// recomputed from the stored concentrations, so rescaling composes.
    pub fn rescale(&self, new_omega: f64) -> Result<Network> {
        if !(new_omega > 0.0 && new_omega.is_finite()) {
            return Err(Error::invalid(format!("omega must be positive, got {new_omega}")));
        }
        let mut net = self.clone();
        net.omega = new_omega;
        for s in &mut net.species {
            s.initial_count = floor_count(s.concentration, new_omega)?;
        }
        Ok(net)
    }

    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Network> {
        let mut net = self.clone();
        match net.parameters.get_mut(name) {
            Some(v) => *v = value,
            None => {
                return Err(Error::UndeclaredReference {
                    kind: "parameter",
                    name: name.to_string(),
                })
            }
        }
        Ok(net)
    }

    /// Overrides initial counts directly (e.g. to start from a trajectory
    /// endpoint); concentrations are updated to match.
    pub fn with_initial_counts(&self, counts: &[u64]) -> Result<Network> {
        if counts.len() != self.species.len() {
            return Err(Error::invalid("initial count vector has the wrong length"));
        }
        let mut net = self.clone();
        for (s, &c) in net.species.iter_mut().zip(counts) {
            s.initial_count = c;
            s.concentration = c as f64 / self.omega;
        }
        Ok(net)
    }

    fn eval_rate_at(&self, r: &Reaction, state: &[f64], light: f64, time: f64) -> Result<f64> {
        let lookup = |name: &str| -> f64 {
            match name {
                expr::OMEGA => self.omega,
                expr::LIGHT => light,
                expr::TIME => time,
                _ => match self.species_index(name) {
                    Some(i) => state[i],
                    None => self.parameters[name],
                },
            }
        };
        let v = r.rate.eval(&lookup);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(Error::RateEvaluation {
                reaction: r.id.clone(),
                value: v,
            })
        }
    }

    /// Reference (interpreted) evaluation of a reaction's rate law. The
    /// value is both the stochastic propensity and the deterministic flux.
    pub fn eval_rate(&self, reaction: &str, state: &[f64], light: f64) -> Result<f64> {
        let r = self
            .reactions
            .iter()
            .find(|r| r.id == reaction)
            .ok_or_else(|| Error::UndeclaredReference {
                kind: "reaction",
                name: reaction.to_string(),
            })?;
        if state.len() != self.species.len() || state.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::invalid("state must hold one non-negative entry per species"));
        }
        self.eval_rate_at(r, state, light, 0.0)
    }

    pub fn compile(&self) -> Result<Kinetics> {
        Kinetics::new(self)
    }
}

/// Compiled rate laws plus the bookkeeping the engines need.
#[derive(Debug, Clone)]
pub struct Kinetics {
    n_species: usize,
    ids: Vec<String>,
    /// Rate programs with `light_time` folded to 0 and to 1.
    by_light: [Vec<Program>; 2],
    net_changes: Vec<Vec<(usize, f64)>>,
    /// Reactions whose propensity must be refreshed after reaction `r` fires.
    affects: Vec<Vec<usize>>,
    light_dependent: Vec<usize>,
    uses_time: bool,
}

impl Kinetics {
    fn new(net: &Network) -> Result<Self> {
        let species: HashMap<String, usize> = net
            .species
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        let parameters: HashMap<String, f64> =
            net.parameters.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let compile_for = |light: f64| -> Result<Vec<Program>> {
            let scope = Scope {
                species: &species,
                parameters: &parameters,
                omega: net.omega,
                light: Some(light),
            };
            net.reactions.iter().map(|r| Program::compile(&r.rate, &scope)).collect()
        };
        let by_light = [compile_for(0.0)?, compile_for(1.0)?];

        let reads: Vec<BTreeSet<usize>> = (0..net.reactions.len())
            .map(|r| {
                let mut s = by_light[0][r].species();
                s.extend(by_light[1][r].species());
                s
            })
            .collect();
        let net_changes: Vec<Vec<(usize, f64)>> = net
            .reactions
            .iter()
            .map(|r| r.net_change().into_iter().map(|(s, d)| (s, d as f64)).collect())
            .collect();
        let affects = net_changes
            .iter()
            .map(|changes| {
                (0..net.reactions.len())
                    .filter(|&q| changes.iter().any(|(s, _)| reads[q].contains(s)))
                    .collect()
            })
            .collect();
        let light_dependent = (0..net.reactions.len())
            .filter(|&r| by_light[0][r] != by_light[1][r])
            .collect();
        let uses_time = by_light.iter().flatten().any(Program::uses_time);
        Ok(Kinetics {
            n_species: net.species.len(),
            ids: net.reactions.iter().map(|r| r.id.clone()).collect(),
            by_light,
            net_changes,
            affects,
            light_dependent,
            uses_time,
        })
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn n_reactions(&self) -> usize {
        self.ids.len()
    }

    pub fn reaction_id(&self, r: usize) -> &str {
        &self.ids[r]
    }

    pub fn affects(&self, r: usize) -> &[usize] {
        &self.affects[r]
    }

    pub fn light_dependent(&self) -> &[usize] {
        &self.light_dependent
    }

    pub fn uses_time(&self) -> bool {
        self.uses_time
    }

    pub fn net_change(&self, r: usize) -> &[(usize, f64)] {
        &self.net_changes[r]
    }

    /// Compiled rate of reaction `r`. `light` must be 0 or 1.
    #[inline]
    pub fn rate(&self, r: usize, state: &[f64], light: f64, time: f64) -> Result<f64> {
        debug_assert!(light == 0.0 || light == 1.0);
        let v = self.by_light[(light != 0.0) as usize][r].eval(state, light, time);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(Error::RateEvaluation {
                reaction: self.ids[r].clone(),
                value: v,
            })
        }
    }

    #[inline]
    pub fn fire(&self, r: usize, state: &mut [f64]) {
        for &(s, d) in &self.net_changes[r] {
            state[s] += d;
        }
    }

    /// Deterministic right-hand side: sum over reactions of net change
    /// times rate.
    pub fn rhs(&self, state: &[f64], light: f64, time: f64, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..self.n_reactions() {
            let v = self.rate(r, state, light, time)?;
            for &(s, d) in &self.net_changes[r] {
                out[s] += d * v;
            }
        }
        Ok(())
    }
}
