//! Joint data partition and transmission rate control for edge learning
//! tasks that share one uplink and finish at different deadlines.

pub mod baselines;
pub mod error;
pub mod fitting;
pub mod instances;
pub mod merged;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod rate_control;
pub mod stratified;

pub use error::{Error, Result, ViolationKind};
pub use model::*;
