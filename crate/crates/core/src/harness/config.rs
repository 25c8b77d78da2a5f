//! Experiment configuration: a single JSON document with sections
//! `topology`, `contents`, `cost`, `search` and `experiment`.

use serde::{Deserialize, Serialize};

use crate::analytic::{
    miss_prob_at, saturated_occupancy, ContentSpec, CostModel, DomainConfig, SearchVariant, Tier,
    Topology, Ttl,
};
use crate::error::{Error, Result};
use crate::optimizer::linear_grid;
use crate::sim::{Horizon, Placement, WalkMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    TtlTradeoff,
    LoadAggregation,
    OptimalValidation,
    #[default]
    Custom,
}

impl Scenario {
    pub fn parse(name: &str) -> Result<Scenario> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::config(format!("unknown scenario {name:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SquareRoot,
    TopB,
    QuadraticBreakpoint,
    QuadraticDual,
    BangBang,
    Heuristic,
    Grid,
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::config(format!("unknown method {name:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierSection {
    pub n_caches: usize,
    pub hop_rate: f64,
    #[serde(default)]
    pub ttl: Ttl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    /// Custodian side first; requests arrive at the last tier.
    pub tiers: Vec<TierSection>,
    /// Number of lower-tier domains whose misses feed one domain of the next
    /// tier up.
    #[serde(default = "one")]
    pub fan_in: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentsSection {
    /// Exogenous request rate per content.
    pub rates: Vec<f64>,
    #[serde(default)]
    pub k_threshold: u32,
    /// Target occupancy per content, held equal in every tier by choosing
    /// each tier's decrement rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<Vec<f64>>,
    /// Decrement rate per content, shared by all tiers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Per-cache request rate at the user-side tier; defaults to the
    /// exogenous rate split evenly over that tier's caches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Analytic walk model.
    #[serde(default = "default_variant")]
    pub variant: SearchVariant,
    /// Simulated walk.
    #[serde(default = "default_walk")]
    pub walk: WalkMode,
    #[serde(default = "default_placement")]
    pub placement: Placement,
}

fn default_variant() -> SearchVariant {
    SearchVariant::Stateless
}

fn default_walk() -> WalkMode {
    WalkMode::Stateless
}

fn default_placement() -> Placement {
    Placement::Frozen
}

/// A list of values or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<Ttl>),
    Range { start: f64, end: f64, step: f64 },
}

impl GridSpec {
    pub fn range(start: f64, end: f64, step: f64) -> Self {
        GridSpec::Range { start, end, step }
    }

    pub fn ttls(&self) -> Result<Vec<Ttl>> {
        match self {
            GridSpec::Values(v) => Ok(v.clone()),
            GridSpec::Range { start, end, step } => {
                if !(*step > 0.0 && end >= start && *start >= 0.0) {
                    return Err(Error::config(format!(
                        "bad grid range {start}..{end} step {step}"
                    )));
                }
                Ok(linear_grid(*start, *end, *step).into_iter().map(Ttl::Finite).collect())
            }
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        let v = self.ttls()?;
        if v.iter().any(|t| t.is_unbounded()) {
            return Err(Error::config("\"inf\" is only allowed in TTL grids"));
        }
        Ok(v.iter().map(|t| t.as_secs()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttl_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Horizon>,
    #[serde(default)]
    pub warmup: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Configuration document as read from disk; sections may be omitted when a
/// named scenario supplies them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contents: Option<ContentsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSection>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn scenario(name: Scenario) -> Self {
        ExperimentConfig {
            experiment: ExperimentSection {
                scenario: name,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    /// Fills omitted sections from the named scenario's defaults.
    pub fn resolve(self) -> Result<Resolved> {
        let scenario = self.experiment.scenario;
        let preset = match scenario {
            Scenario::Custom => None,
            s => Some(preset(s)),
        };
        let pick = |name: &str| Error::config(format!("custom scenario needs a `{name}` section"));
        let topology = match (self.topology, &preset) {
            (Some(t), _) => t,
            (None, Some(p)) => p.topology.clone(),
            (None, None) => return Err(pick("topology")),
        };
        let contents = match (self.contents, &preset) {
            (Some(c), _) => c,
            (None, Some(p)) => p.contents.clone(),
            (None, None) => return Err(pick("contents")),
        };
        let cost = match (self.cost, &preset) {
            (Some(c), _) => c,
            (None, Some(p)) => p.cost,
            (None, None) => return Err(pick("cost")),
        };
        let search = match (self.search, &preset) {
            (Some(s), _) => s,
            (None, Some(p)) => p.search,
            (None, None) => SearchSection {
                variant: default_variant(),
                walk: default_walk(),
                placement: default_placement(),
            },
        };
        let mut experiment = self.experiment;
        if let Some(p) = &preset {
            let d = &p.experiment;
            experiment.ttl_grid = experiment.ttl_grid.or_else(|| d.ttl_grid.clone());
            experiment.occupancy_grid = experiment.occupancy_grid.or_else(|| d.occupancy_grid.clone());
            experiment.budget = experiment.budget.or(d.budget);
            experiment.method = experiment.method.or(d.method);
            experiment.horizon = experiment.horizon.or(d.horizon);
            experiment.replications = experiment.replications.or(d.replications);
            experiment.seed = experiment.seed.or(d.seed);
        }
        let r = Resolved {
            scenario,
            topology,
            contents,
            cost,
            search,
            experiment,
        };
        r.validate()?;
        Ok(r)
    }
}

/// A configuration with every section present.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub scenario: Scenario,
    pub topology: TopologySection,
    pub contents: ContentsSection,
    pub cost: CostModel,
    pub search: SearchSection,
    pub experiment: ExperimentSection,
}

fn preset(s: Scenario) -> Resolved {
    let tiers = |n: usize, n_caches: usize, hop_rate: f64, ttl: Ttl| {
        vec![
            TierSection {
                n_caches,
                hop_rate,
                ttl
            };
            n
        ]
    };
    let stateless_frozen = SearchSection {
        variant: SearchVariant::Stateless,
        walk: WalkMode::Stateless,
        placement: Placement::Frozen,
    };
    match s {
        Scenario::TtlTradeoff => Resolved {
            scenario: s,
            topology: TopologySection {
                tiers: tiers(3, 10, 1.0, Ttl::Finite(1.5)),
                fan_in: 1.0,
            },
            contents: ContentsSection {
                rates: vec![1.0],
                k_threshold: 0,
                occupancy: Some(vec![0.1]),
                mu: None,
                cache_rates: None,
            },
            cost: CostModel::Mm1 { capacity: 0.9 },
            search: stateless_frozen,
            experiment: ExperimentSection {
                scenario: s,
                ttl_grid: Some(GridSpec::range(0.0, 5.0, 0.01)),
                occupancy_grid: Some(GridSpec::Values(vec![
                    Ttl::Finite(0.05),
                    Ttl::Finite(0.1),
                    Ttl::Finite(0.3),
                ])),
                horizon: Some(Horizon::Requests(100_000)),
                ..Default::default()
            },
        },
        Scenario::LoadAggregation => {
            let rates = vec![0.8, 0.5, 0.1, 0.01];
            Resolved {
                scenario: s,
                topology: TopologySection {
                    tiers: tiers(3, 10, 10.0, Ttl::Finite(0.1)),
                    fan_in: 10.0,
                },
                contents: ContentsSection {
                    cache_rates: Some(rates.clone()),
                    mu: Some(vec![1.0; rates.len()]),
                    rates,
                    k_threshold: 0,
                    occupancy: None,
                },
                cost: CostModel::Exponential,
                search: stateless_frozen,
                experiment: ExperimentSection {
                    scenario: s,
                    ttl_grid: Some(GridSpec::range(0.0, 0.5, 0.01)),
                    horizon: Some(Horizon::Requests(100_000)),
                    ..Default::default()
                },
            }
        }
        Scenario::OptimalValidation => Resolved {
            scenario: s,
            topology: TopologySection {
                tiers: tiers(1, 100, 25.0, Ttl::Unbounded),
                fan_in: 1.0,
            },
            contents: ContentsSection {
                rates: vec![0.8, 0.1, 0.002],
                k_threshold: 0,
                occupancy: Some(vec![0.71, 0.25, 0.04]),
                mu: None,
                cache_rates: None,
            },
            cost: CostModel::Fixed { cost: 10.0 },
            search: SearchSection {
                variant: SearchVariant::StatefulLargeN,
                walk: WalkMode::StatefulNoRevisit,
                placement: Placement::Frozen,
            },
            experiment: ExperimentSection {
                scenario: s,
                ttl_grid: Some(GridSpec::range(0.0, 30.0, 0.1)),
                occupancy_grid: Some(GridSpec::range(0.01, 0.99, 0.01)),
                budget: Some(1.0),
                method: Some(Method::SquareRoot),
                horizon: Some(Horizon::Requests(100_000)),
                ..Default::default()
            },
        },
        Scenario::Custom => unreachable!("custom has no preset"),
    }
}

impl Resolved {
    pub fn n_contents(&self) -> usize {
        self.contents.rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.n_contents();
        if self.topology.tiers.is_empty() {
            return Err(Error::config("topology needs at least one tier"));
        }
        if c == 0 {
            return Err(Error::config("contents.rates is empty"));
        }
        if !(self.topology.fan_in > 0.0) {
            return Err(Error::config("fan_in must be positive"));
        }
        let check_len = |name: &str, v: &Option<Vec<f64>>| match v {
            Some(v) if v.len() != c => Err(Error::config(format!(
                "contents.{name} has {} entries, expected {c}",
                v.len()
            ))),
            _ => Ok(()),
        };
        check_len("occupancy", &self.contents.occupancy)?;
        check_len("mu", &self.contents.mu)?;
        check_len("cache_rates", &self.contents.cache_rates)?;
        match (&self.contents.occupancy, &self.contents.mu) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give either contents.occupancy or contents.mu, not both"))
            }
            (None, None) => {
                return Err(Error::config("contents needs occupancy or mu"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn ttl_grid(&self) -> Result<Vec<Ttl>> {
        self.experiment
            .ttl_grid
            .as_ref()
            .ok_or_else(|| Error::config("experiment.ttl_grid is required"))?
            .ttls()
    }

    pub fn occupancy_grid(&self) -> Result<Vec<f64>> {
        self.experiment
            .occupancy_grid
            .as_ref()
            .ok_or_else(|| Error::config("experiment.occupancy_grid is required"))?
            .values()
    }

    /// Copy with a different tier list, e.g. the user-side tier alone.
    pub fn with_tiers(&self, tiers: Vec<TierSection>) -> Resolved {
        let mut r = self.clone();
        r.topology.tiers = tiers;
        r
    }

    /// Copy holding every content at occupancy `pi`.
    pub fn with_occupancy(&self, pi: f64) -> Resolved {
        let mut r = self.clone();
        r.contents.occupancy = Some(vec![pi; self.n_contents()]);
        r.contents.mu = None;
        r
    }

    /// Builds the analytic/simulation topology.
    ///
    /// Per-cache rates are propagated from the user-side tier towards the
    /// custodian: a tier receives `fan_in` times the per-cache rate of the
    /// tier below multiplied by that tier's miss probability. `ttl`, when
    /// given, overrides every tier's timeout.
    pub fn build_topology(&self, ttl: Option<Ttl>) -> Result<Topology> {
        let m = self.topology.tiers.len();
        let c = self.n_contents();
        let k = self.contents.k_threshold;
        let user = &self.topology.tiers[m - 1];
        let mut per_tier: Vec<Vec<ContentSpec>> = vec![Vec::with_capacity(c); m];
        let mut domains = Vec::with_capacity(m);
        for t in &self.topology.tiers {
            domains.push(DomainConfig::new(t.n_caches, t.hop_rate, ttl.unwrap_or(t.ttl))?);
        }
        for content in 0..c {
            let mut rate = match &self.contents.cache_rates {
                Some(r) => r[content],
                None => self.contents.rates[content] / user.n_caches as f64,
            };
            for i in (0..m).rev() {
                let lambda = rate.max(f64::MIN_POSITIVE);
                let spec = match (&self.contents.occupancy, &self.contents.mu) {
                    (Some(pis), _) => spec_for_occupancy(lambda, k, pis[content])?,
                    (None, Some(mus)) => ContentSpec::with_mu(lambda, k, mus[content])?,
                    (None, None) => unreachable!("checked by validate"),
                };
                let pi = saturated_occupancy(spec.lambda, spec.alpha, k);
                let miss = miss_prob_at(self.search.variant, &domains[i], pi, domains[i].ttl)?;
                per_tier[i].push(spec);
                rate = self.topology.fan_in * rate * miss;
            }
        }
        let topo = Topology {
            tiers: domains
                .into_iter()
                .zip(per_tier)
                .map(|(domain, contents)| Tier {
                    domain,
                    contents,
                    ttls: None,
                })
                .collect(),
            exogenous_rates: self.contents.rates.clone(),
        };
        topo.validate()?;
        Ok(topo)
    }
}

/// Counter parameters giving stationary occupancy exactly `pi` (`pi = 1`
/// yields a counter that never drains).
fn spec_for_occupancy(lambda: f64, k: u32, pi: f64) -> Result<ContentSpec> {
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(Error::domain(format!("target occupancy {pi} not in (0, 1]")));
    }
    let rho = pi.powf(1.0 / (k as f64 + 1.0));
    ContentSpec::new(lambda, k, rho / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::tier_states;

    #[test]
    fn presets_resolve() {
        for s in [Scenario::TtlTradeoff, Scenario::LoadAggregation, Scenario::OptimalValidation] {
            let r = ExperimentConfig::scenario(s).resolve().unwrap();
            r.build_topology(None).unwrap();
        }
        assert!(matches!(
            ExperimentConfig::default().resolve(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn preset_values() {
        let r = ExperimentConfig::scenario(Scenario::LoadAggregation).resolve().unwrap();
        assert_eq!(r.contents.rates, vec![0.8, 0.5, 0.1, 0.01]);
        assert_eq!(r.contents.mu, Some(vec![1.0; 4]));
        assert_eq!(r.cost, CostModel::Exponential);
        let r = ExperimentConfig::scenario(Scenario::OptimalValidation).resolve().unwrap();
        assert_eq!(r.contents.rates, vec![0.8, 0.1, 0.002]);
        assert_eq!(r.experiment.budget, Some(1.0));
        assert_eq!(r.cost, CostModel::Fixed { cost: 10.0 });
        assert_eq!(r.topology.tiers[0].hop_rate, 25.0);
        let r = ExperimentConfig::scenario(Scenario::TtlTradeoff).resolve().unwrap();
        assert_eq!(r.cost, CostModel::Mm1 { capacity: 0.9 });
        assert_eq!(r.occupancy_grid().unwrap(), vec![0.05, 0.1, 0.3]);
        assert_eq!(r.ttl_grid().unwrap().len(), 501);
    }

    #[test]
    fn equal_occupancy_in_every_tier() {
        let r = ExperimentConfig::scenario(Scenario::TtlTradeoff).resolve().unwrap();
        let topo = r.with_occupancy(0.05).build_topology(Some(Ttl::Finite(1.0))).unwrap();
        for s in tier_states(&topo, 0).unwrap() {
            assert!((s.pi - 0.05).abs() < 1e-12);
            assert_eq!(s.ttl, Ttl::Finite(1.0));
        }
        // upper tiers see the filtered, smaller rate
        let l: Vec<f64> = topo.tiers.iter().map(|t| t.contents[0].lambda).collect();
        assert!(l[0] < l[1] && l[1] < l[2]);
        assert!((l[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn aggregation_saturates_popular_contents() {
        let r = ExperimentConfig::scenario(Scenario::LoadAggregation).resolve().unwrap();
        let topo = r.build_topology(None).unwrap();
        let states = tier_states(&topo, 0).unwrap();
        assert!((states[2].pi - 0.8).abs() < 1e-12);
        // 10 domains each pass 0.8 * R upwards
        let miss = crate::analytic::stateless_miss_prob(0.1, &states[2].domain, 0.8).unwrap();
        assert!((topo.tiers[1].contents[0].lambda - 8.0 * miss).abs() < 1e-12);
        let hot = r.with_tiers(r.topology.tiers.clone());
        let hot = ContentsSection {
            cache_rates: Some(vec![5.0, 0.5, 0.1, 0.01]),
            ..hot.contents
        };
        let r = Resolved { contents: hot, ..r };
        let states = tier_states(&r.build_topology(None).unwrap(), 0).unwrap();
        assert_eq!(states[2].pi, 1.0);
    }

    #[test]
    fn parses_documents() {
        let doc = r#"{
            "topology": {"tiers": [{"n_caches": 4, "hop_rate": 2.0, "ttl": "inf"}]},
            "contents": {"rates": [1.0, 0.5], "mu": [2.0, 2.0]},
            "cost": {"model": "fixed", "cost": 3.0},
            "experiment": {"ttl_grid": [0.0, 1.0, "inf"], "horizon": {"time": 100.0}}
        }"#;
        let r = ExperimentConfig::from_json(doc).unwrap().resolve().unwrap();
        assert_eq!(r.topology.tiers[0].ttl, Ttl::Unbounded);
        assert_eq!(r.ttl_grid().unwrap()[2], Ttl::Unbounded);
        assert_eq!(r.experiment.horizon, Some(Horizon::Time(100.0)));
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let both = doc.replace(r#""mu": [2.0, 2.0]"#, r#""mu": [2.0, 2.0], "occupancy": [0.1, 0.1]"#);
        assert!(ExperimentConfig::from_json(&both).unwrap().resolve().is_err());
    }

    #[test]
    fn names_parse() {
        assert_eq!(Scenario::parse("ttl_tradeoff").unwrap(), Scenario::TtlTradeoff);
        assert_eq!(Method::parse("quadratic_dual").unwrap(), Method::QuadraticDual);
        assert!(Method::parse("magic").is_err());
    }
}
