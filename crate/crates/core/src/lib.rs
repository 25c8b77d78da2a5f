//! Search and placement in tiered cache networks.
//!
//! Caches are grouped into domains, domains into tiers. A request that misses
//! at the cache it lands on triggers a random walk inside the domain for at
//! most `T` seconds before being forwarded one tier up, eventually reaching the
//! custodian. Content placement is driven by reinforced counters: a per-content
//! counter incremented by inter-domain requests, decremented at rate `mu`, with
//! the content stored while the counter exceeds a threshold `K`.
//!
//! The crate is split into:
//!
//! * [`analytic`]: closed-form occupancy, miss and delay expressions.
//! * [`optimizer`]: placement (`pi`) and search (`T`) tuning procedures.
//! * [`sim`]: a discrete-event simulator used as an independent oracle.
//! * [`harness`]: experiment presets, config ingestion and the CLI back end.

pub mod analytic;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod sim;

pub use analytic::{
    ContentSpec, CostModel, DomainConfig, SearchVariant, Tier, TierState, Topology, Ttl,
};
pub use error::{Error, Result};
pub use optimizer::{AllocationProblem, AllocationResult, Diagnostics, KnapsackMethod};
pub use sim::{Horizon, Placement, SimConfig, SimReport, WalkMode};


