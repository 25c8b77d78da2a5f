use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Per-content workload and reinforced-counter parameters at one cache.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentSpec {
    /// Request rate seen by a typical cache (requests/second).
    pub lambda: f64,
    /// Counter threshold `K`; the content is stored while the counter exceeds it.
    pub k_threshold: u32,
    /// Mean decrement interval `1/mu` (seconds).
    pub alpha: f64,
}

impl ContentSpec {
    pub fn new(lambda: f64, k_threshold: u32, alpha: f64) -> Result<Self> {
        let spec = ContentSpec {
            lambda,
            k_threshold,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec from the decrement rate `mu` instead of its mean interval.
    pub fn with_mu(lambda: f64, k_threshold: u32, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::domain(format!("mu must be positive, got {mu}")));
        }
        Self::new(lambda, k_threshold, 1.0 / mu)
    }

    /// Picks `alpha` so that the occupancy equals `pi` at rate `lambda`.
    pub fn for_target_occupancy(lambda: f64, k_threshold: u32, pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::domain(format!("target occupancy {pi} not in (0,1)")));
        }
        let rho = pi.powf(1.0 / (k_threshold as f64 + 1.0));
        Self::new(lambda, k_threshold, rho / lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn mu(&self) -> f64 {
        1.0 / self.alpha
    }

    /// Load factor `lambda / mu`.
    pub fn rho(&self) -> f64 {
        self.lambda * self.alpha
    }
}

/// Maximum search time inside a domain.
///
/// `Unbounded` is kept distinct from any float so that `T -> inf` limits are
/// taken exactly rather than through overflowing exponentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ttl {
    Finite(f64),
    Unbounded,
}

impl Ttl {
    pub fn finite(t: f64) -> Result<Self> {
        if t >= 0.0 && t.is_finite() {
            Ok(Ttl::Finite(t))
        } else {
            Err(Error::domain(format!("ttl must be finite and >= 0, got {t}")))
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Ttl::Unbounded)
    }

    /// Seconds, with `Unbounded` mapped to `f64::INFINITY`.
    pub fn as_secs(&self) -> f64 {
        match *self {
            Ttl::Finite(t) => t,
            Ttl::Unbounded => f64::INFINITY,
        }
    }
}

impl Default for Ttl {
    fn default() -> Self {
        Ttl::Finite(0.0)
    }
}

impl fmt::Display for Ttl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ttl::Finite(t) => write!(f, "{t}"),
            Ttl::Unbounded => f.write_str("inf"),
        }
    }
}

impl Serialize for Ttl {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ttl::Finite(t) => s.serialize_f64(*t),
            Ttl::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Ttl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct TtlVisitor;

        impl Visitor<'_> for TtlVisitor {
            type Value = Ttl;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Ttl, E> {
                Ttl::finite(v).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Ttl, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Ttl, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Ttl, E> {
                if v == "inf" {
                    Ok(Ttl::Unbounded)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        d.deserialize_any(TtlVisitor)
    }
}

/// One domain: `n_caches` fully connected caches searched at `hop_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub n_caches: usize,
    pub hop_rate: f64,
    #[serde(default)]
    pub ttl: Ttl,
}

impl DomainConfig {
    pub fn new(n_caches: usize, hop_rate: f64, ttl: Ttl) -> Result<Self> {
        let dom = DomainConfig {
            n_caches,
            hop_rate,
            ttl,
        };
        dom.validate()?;
        Ok(dom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_caches == 0 {
            return Err(Error::domain("a domain needs at least one cache"));
        }
        if !(self.hop_rate > 0.0 && self.hop_rate.is_finite()) {
            return Err(Error::domain(format!(
                "hop rate must be positive, got {}",
                self.hop_rate
            )));
        }
        if let Ttl::Finite(t) = self.ttl {
            Ttl::finite(t)?;
        }
        Ok(())
    }
}

/// Which miss-probability model to evaluate inside a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchVariant {
    /// Walk may revisit caches; placement frozen during the walk.
    Stateless,
    /// No revisits, exact finite-`N` expression.
    StatefulExact,
    /// No revisits, `N -> inf` approximation.
    StatefulLargeN,
}

/// Custodian service delay as a function of the load reaching it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CostModel {
    Fixed { cost: f64 },
    /// Mean sojourn time of an M/M/1 queue with the given service capacity.
    Mm1 { capacity: f64 },
    /// `exp(load)`.
    Exponential,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CostModel::Fixed { cost } if !(cost >= 0.0 && cost.is_finite()) => Err(
                Error::domain(format!("fixed custodian cost must be >= 0, got {cost}")),
            ),
            CostModel::Mm1 { capacity } if !(capacity > 0.0 && capacity.is_finite()) => Err(
                Error::domain(format!("M/M/1 capacity must be positive, got {capacity}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A tier: its domain and the per-content counter parameters of its caches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub domain: DomainConfig,
    pub contents: Vec<ContentSpec>,
    /// Per-content TTL overrides; `None` means every content uses `domain.ttl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttls: Option<Vec<Ttl>>,
}

impl Tier {
    pub fn ttl_for(&self, content: usize) -> Ttl {
        self.ttls
            .as_ref()
            .and_then(|t| t.get(content).copied())
            .unwrap_or(self.domain.ttl)
    }
}

/// Tiers ordered custodian side first: `tiers[0]` is tier 1, the last entry is
/// tier `M`, where exogenous requests arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub tiers: Vec<Tier>,
    /// Exogenous request rate per content at tier `M`.
    pub exogenous_rates: Vec<f64>,
}

impl Topology {
    pub fn n_tiers(&self) -> usize {
        self.tiers.len()
    }

    pub fn n_contents(&self) -> usize {
        self.exogenous_rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() {
            return Err(Error::config("topology needs at least one tier"));
        }
        let c = self.exogenous_rates.len();
        if c == 0 {
            return Err(Error::config("topology needs at least one content"));
        }
        for (i, tier) in self.tiers.iter().enumerate() {
            tier.domain.validate()?;
            if tier.contents.len() != c {
                return Err(Error::config(format!(
                    "tier {} lists {} contents, expected {c}",
                    i + 1,
                    tier.contents.len()
                )));
            }
            if let Some(t) = &tier.ttls {
                if t.len() != c {
                    return Err(Error::config(format!(
                        "tier {} lists {} ttls, expected {c}",
                        i + 1,
                        t.len()
                    )));
                }
            }
            for spec in &tier.contents {
                spec.validate()?;
            }
        }
        if let Some(r) = self.exogenous_rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::config(format!("negative exogenous rate {r}")));
        }
        Ok(())
    }
}

/// Resolved per-tier quantities for one content: domain, occupancy and TTL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierState {
    pub domain: DomainConfig,
    pub pi: f64,
    pub ttl: Ttl,
}
