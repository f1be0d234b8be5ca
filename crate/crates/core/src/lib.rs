#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod model;
pub mod ode;
pub mod phase;
pub mod robustness;
pub mod ssa;
pub mod steady;
pub mod trace;

pub use error::{Error, ErrorCategory, Result};
pub use model::{builtin_ostreococcus, parse_network, LightSchedule, Network};
pub use ode::{integrate, OdeConfig};
pub use trace::{Grid, Trace};
