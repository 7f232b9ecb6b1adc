//! Model-based reinforcement learning for online resource allocation with
//! known immediate rewards, applied to two-domain service federation.
//!
//! The crate is organized bottom-up:
//!
//! * [`catalog`]: service types and their demands, revenues and rates
//! * [`env`]: federation state, feasible actions, rewards, bookkeeping
//! * [`traffic`]: true request processes and the EMA process learner
//! * [`rl`]: value tables, TD rules and the behavior policy
//! * [`model`]: the learned sample model
//! * [`planner`]: exploration and backward-updating exploitation rollouts
//! * [`agent`]: the four planning variants and the agent lifecycle
//! * [`harness`]: discrete-event simulation, offline baseline, experiments

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod catalog;
pub mod env;
pub mod error;
pub mod harness;
pub mod model;
pub mod planner;
pub mod rl;
pub mod rng;
pub mod traffic;

pub use agent::{make_variant, Allocator, FrozenPolicy, RadarAgent, VariantConfig, VariantName};
pub use catalog::{Catalog, ServiceType};
pub use env::{Action, ActionSet, DomainCapacities, State, StateKey};
pub use error::{Error, Result};
