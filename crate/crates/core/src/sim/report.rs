use serde::{Deserialize, Serialize};

use crate::analytic::{custodian_cost, CostModel};
use crate::error::{Error, Result};

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn proportion(hits: u64, trials: u64) -> Estimate {
        if trials == 0 {
            return Estimate {
                value: f64::NAN,
                se: f64::NAN,
            };
        }
        let p = hits as f64 / trials as f64;
        Estimate {
            value: p,
            se: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    /// Mean and standard error of independent batch means.
    pub fn batch_means(batches: &[f64]) -> Estimate {
        let n = batches.len() as f64;
        let mean = batches.iter().sum::<f64>() / n;
        let se = if batches.len() > 1 {
            let var = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            f64::NAN
        };
        Estimate { value: mean, se }
    }

    /// `(value - expected) / se`.
    pub fn z_score(&self, expected: f64) -> f64 {
        let d = self.value - expected;
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}

/// Counters for one content in one tier, summed over the tier's caches.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct CellStats {
    pub entries: u64,
    pub entry_hits: u64,
    /// Requests not found within the TTL.
    pub not_found: u64,
    pub insertions: u64,
    pub evictions: u64,
    /// Largest per-cache `|insertions - evictions|` over the whole run.
    pub flow_imbalance: u64,
    pub stored_time: f64,
    pub batch_occupancy: Vec<f64>,
    pub batch_insertions: Vec<f64>,
    pub batch_evictions: Vec<f64>,
    /// Time into the walk at which the content was found (0 for an entry
    /// hit), `+inf` when it was not found within the TTL.
    pub found_times: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ContentStats {
    pub requests: u64,
    pub completed: u64,
    pub custodian_arrivals: u64,
    /// Sums over completed requests of in-network delay `w` and of the
    /// custodian indicator `r`.
    pub sum_w: f64,
    pub sum_w2: f64,
    pub sum_r: f64,
    pub sum_wr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawStats {
    pub duration: f64,
    pub n_caches: Vec<usize>,
    pub dynamic: bool,
    /// `cells[tier][content]`
    pub cells: Vec<Vec<CellStats>>,
    pub contents: Vec<ContentStats>,
    pub replications: usize,
}

impl RawStats {
    pub fn new(n_caches: Vec<usize>, n_contents: usize, dynamic: bool) -> Self {
        RawStats {
            duration: 0.0,
            cells: vec![vec![CellStats::default(); n_contents]; n_caches.len()],
            n_caches,
            dynamic,
            contents: vec![ContentStats::default(); n_contents],
            replications: 1,
        }
    }

    /// Pools another replication of the same configuration.
    pub fn absorb(&mut self, other: RawStats) {
        self.duration += other.duration;
        self.replications += other.replications;
        for (mine, theirs) in self.cells.iter_mut().zip(other.cells) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.entries += b.entries;
                a.entry_hits += b.entry_hits;
                a.not_found += b.not_found;
                a.insertions += b.insertions;
                a.evictions += b.evictions;
                a.flow_imbalance = a.flow_imbalance.max(b.flow_imbalance);
                a.stored_time += b.stored_time;
                a.batch_occupancy.extend(b.batch_occupancy);
                a.batch_insertions.extend(b.batch_insertions);
                a.batch_evictions.extend(b.batch_evictions);
                a.found_times.extend(b.found_times);
            }
        }
        for (a, b) in self.contents.iter_mut().zip(other.contents) {
            a.requests += b.requests;
            a.completed += b.completed;
            a.custodian_arrivals += b.custodian_arrivals;
            a.sum_w += b.sum_w;
            a.sum_w2 += b.sum_w2;
            a.sum_r += b.sum_r;
            a.sum_wr += b.sum_wr;
        }
    }

    pub fn report(&self, cost: &CostModel) -> Result<SimReport> {
        let total_custodian: u64 = self.contents.iter().map(|c| c.custodian_arrivals).sum();
        let load = total_custodian as f64 / self.duration;
        let cost_value = custodian_cost(cost, load)?;
        let tiers = self
            .cells
            .iter()
            .zip(&self.n_caches)
            .map(|(cells, &n)| TierReport {
                contents: cells.iter().map(|c| c.report(n, self.duration, self.dynamic)).collect(),
            })
            .collect();
        let contents = self
            .contents
            .iter()
            .map(|c| c.report(cost_value, self.duration))
            .collect();
        Ok(SimReport {
            requests: self.contents.iter().map(|c| c.requests).sum(),
            duration: self.duration,
            replications: self.replications,
            publisher_load: Estimate {
                value: load,
                se: (total_custodian as f64).sqrt() / self.duration,
            },
            custodian_cost: cost_value,
            tiers,
            contents,
        })
    }
}

impl CellStats {
    fn report(&self, n_caches: usize, duration: f64, dynamic: bool) -> CellReport {
        let rate = |count: u64| count as f64 / (n_caches as f64 * duration);
        let batched = |v: &[f64], total: f64| {
            let mut e = Estimate::batch_means(v);
            // the pooled total is the better point estimate; batches give the error
            e.value = total;
            e
        };
        CellReport {
            entries: self.entries,
            entry_hits: self.entry_hits,
            not_found: self.not_found,
            entry_hit_fraction: Estimate::proportion(self.entry_hits, self.entries),
            miss_prob: Estimate::proportion(self.not_found, self.entries),
            insertions: self.insertions,
            evictions: self.evictions,
            flow_imbalance: self.flow_imbalance,
            occupancy: dynamic.then(|| {
                batched(&self.batch_occupancy, self.stored_time / (n_caches as f64 * duration))
            }),
            insertion_rate: dynamic.then(|| batched(&self.batch_insertions, rate(self.insertions))),
            eviction_rate: dynamic.then(|| batched(&self.batch_evictions, rate(self.evictions))),
        }
    }
}

impl ContentStats {
    fn report(&self, cost: f64, duration: f64) -> ContentReport {
        let n = self.completed as f64;
        let (mean, se) = if self.completed == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = (self.sum_w + cost * self.sum_r) / n;
            let second = (self.sum_w2 + 2.0 * cost * self.sum_wr + cost * cost * self.sum_r) / n;
            let var = (second - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            (mean, (var / n).sqrt())
        };
        ContentReport {
            requests: self.requests,
            completed: self.completed,
            custodian_arrivals: self.custodian_arrivals,
            mean_delay: Estimate { value: mean, se },
            publisher_load: Estimate {
                value: self.custodian_arrivals as f64 / duration,
                se: (self.custodian_arrivals as f64).sqrt() / duration,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub entries: u64,
    pub entry_hits: u64,
    pub not_found: u64,
    /// Fraction of arriving requests that found the entry cache stocked.
    pub entry_hit_fraction: Estimate,
    /// Fraction of requests not found within the TTL.
    pub miss_prob: Estimate,
    pub insertions: u64,
    pub evictions: u64,
    pub flow_imbalance: u64,
    /// Time-average fraction of caches holding the content (dynamic only).
    pub occupancy: Option<Estimate>,
    /// Per-cache insertion rate (dynamic only).
    pub insertion_rate: Option<Estimate>,
    pub eviction_rate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub contents: Vec<CellReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentReport {
    pub requests: u64,
    pub completed: u64,
    pub custodian_arrivals: u64,
    /// Walk time plus custodian cost at the pooled load estimate.
    pub mean_delay: Estimate,
    pub publisher_load: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Exogenous requests inside the measurement window.
    pub requests: u64,
    /// Measurement window, summed over replications.
    pub duration: f64,
    pub replications: usize,
    /// Requests per second reaching the custodian.
    pub publisher_load: Estimate,
    pub custodian_cost: f64,
    /// Same order as the topology: custodian side first.
    pub tiers: Vec<TierReport>,
    pub contents: Vec<ContentReport>,
}

impl SimReport {
    pub fn cell(&self, tier: usize, content: usize) -> Result<&CellReport> {
        let max = self.tiers.len();
        let t = self.tiers.get(tier).ok_or(Error::Range {
            name: "tier",
            value: tier,
            max,
        })?;
        t.contents.get(content).ok_or(Error::Range {
            name: "content",
            value: content,
            max: t.contents.len(),
        })
    }
}
