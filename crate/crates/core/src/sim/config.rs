use serde::{Deserialize, Serialize};

use crate::analytic::{CostModel, SearchVariant, Topology};
use crate::error::{Error, Result};

/// How a walker chooses the next cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    /// Uniform over the other `N - 1` caches; revisits allowed.
    Stateless,
    /// Uniform over caches not yet visited in this walk.
    StatefulNoRevisit,
    /// Follows a random visiting order drawn when the walk starts.
    StatefulPreselected,
}

impl WalkMode {
    /// Analytic model describing this walk.
    pub fn analytic_variant(self) -> SearchVariant {
        match self {
            WalkMode::Stateless => SearchVariant::Stateless,
            WalkMode::StatefulNoRevisit | WalkMode::StatefulPreselected => {
                SearchVariant::StatefulExact
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Reinforced counters evolve with arrivals and decrement ticks.
    Dynamic,
    /// Each cache holds the content independently with the tier's stationary
    /// occupancy, drawn afresh for every walk.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Simulated seconds, warmup included.
    Time(f64),
    /// Exogenous requests counted after warmup.
    Requests(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub topology: Topology,
    pub walk: WalkMode,
    pub placement: Placement,
    pub custodian: CostModel,
    pub horizon: Horizon,
    #[serde(default)]
    pub seed: u64,
    /// Seconds discarded before statistics are collected.
    #[serde(default)]
    pub warmup: f64,
    /// Number of time batches used for batch-means standard errors.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_batches() -> usize {
    50
}

impl SimConfig {
    pub fn new(topology: Topology, walk: WalkMode, placement: Placement, horizon: Horizon) -> Self {
        SimConfig {
            topology,
            walk,
            placement,
            custodian: CostModel::Fixed { cost: 0.0 },
            horizon,
            seed: 0,
            warmup: 0.0,
            batches: default_batches(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_warmup(mut self, warmup: f64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_custodian(mut self, cost: CostModel) -> Self {
        self.custodian = cost;
        self
    }

    pub fn total_rate(&self) -> f64 {
        self.topology.exogenous_rates.iter().sum()
    }

    /// Length of the measurement window, when known in advance.
    pub(crate) fn window(&self) -> f64 {
        match self.horizon {
            Horizon::Time(t) => t - self.warmup,
            Horizon::Requests(n) => n as f64 / self.total_rate(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.custodian.validate()?;
        if !(self.warmup >= 0.0 && self.warmup.is_finite()) {
            return Err(Error::config(format!("warmup must be >= 0, got {}", self.warmup)));
        }
        if self.batches == 0 {
            return Err(Error::config("need at least one batch"));
        }
        match self.horizon {
            Horizon::Time(t) if !(t > self.warmup && t.is_finite()) => {
                return Err(Error::config(format!(
                    "time horizon {t} must exceed warmup {}",
                    self.warmup
                )));
            }
            Horizon::Requests(0) => return Err(Error::config("request horizon must be positive")),
            Horizon::Requests(_) if !(self.total_rate() > 0.0) => {
                return Err(Error::config("request horizon needs a positive exogenous rate"));
            }
            _ => {}
        }
        for (i, tier) in self.topology.tiers.iter().enumerate() {
            for c in 0..self.topology.n_contents() {
                let unbounded = tier.ttl_for(c).is_unbounded();
                if unbounded
                    && self.placement == Placement::Dynamic
                    && matches!(self.horizon, Horizon::Requests(_))
                {
                    // in-flight walks are drained after the last request and
                    // an unbounded one may never finish
                    return Err(Error::config(
                        "unbounded TTL with dynamic placement needs a time horizon",
                    ));
                }
                if unbounded && self.placement == Placement::Frozen {
                    let pi = frozen_occupancy(&self.topology, i, c);
                    if pi <= 0.0 && self.walk == WalkMode::Stateless {
                        return Err(Error::config(format!(
                            "tier {} content {c}: unbounded stateless walk can never end",
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stationary occupancy used by frozen placement; saturates at 1.
pub(crate) fn frozen_occupancy(topology: &Topology, tier: usize, content: usize) -> f64 {
    let spec = &topology.tiers[tier].contents[content];
    crate::analytic::saturated_occupancy(spec.lambda, spec.alpha, spec.k_threshold)
}
