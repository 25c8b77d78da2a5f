//! Closed-form model of one content in a tiered cache network.
//!
//! Every function here is pure. Probabilities are plain `f64` in `[0, 1]`,
//! rates are per second.

mod delay;
mod occupancy;
pub mod quadrature;
mod search;
mod types;

pub use delay::{
    aggregate_delay, custodian_cost, expected_content_delay, expected_content_delay_from_tiers,
    expected_domain_delay, expected_search_time, large_n_delay, miss_prob_at, publisher_load,
    relative_expm1, tier_states,
};
pub use occupancy::{insertion_rate, miss_rate, occupancy_probability, saturated_occupancy};
pub use search::{
    binomial, large_n_valid, ln_binomial, ln_poisson_pmf, replica_count_pmf,
    stateful_miss_prob_exact, stateful_miss_prob_large_n, stateful_preselected_miss_prob,
    stateful_tail_correction, stateless_miss_prob,
};
pub use types::{ContentSpec, CostModel, DomainConfig, SearchVariant, Tier, TierState, Topology, Ttl};
