//! Exact stochastic simulation with piecewise-constant, light-driven
//! propensities.

pub(crate) mod engine;
mod ensemble;
mod heap;

pub use engine::{simulate, EventLog, LightMode, Method, RunResult, SsaConfig};
pub use ensemble::{
    simulate_ensemble, Ensemble, EnsembleOptions, GridStats, Retention, FORMAT_VERSION, MAGIC,
};
