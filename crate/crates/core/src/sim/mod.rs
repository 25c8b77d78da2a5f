//! Discrete-event simulation of a tiered cache network.
//!
//! Exogenous requests arrive as a Poisson stream and land on a uniformly
//! chosen cache of the user-side tier (the last entry of the topology). The
//! receiving cache answers from its pre-arrival
//! state and then bumps its reinforced counter; on a miss a walker hops
//! between caches of the domain with exponential hop times until it finds the
//! content or the TTL runs out. A hop that would complete after the TTL is
//! abandoned and the request is forwarded at exactly `T` to a uniform entry
//! cache of the next tier towards the custodian, and past `tiers[0]` to the
//! custodian itself. Walk visits never
//! touch counters.
//!
//! Custodian delay is the deterministic cost model evaluated at the run's
//! own publisher-load estimate.

mod config;
mod engine;
mod report;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use engine::Engine;
use report::RawStats;

pub use config::{Horizon, Placement, SimConfig, WalkMode};
pub use report::{CellReport, ContentReport, Estimate, SimReport, TierReport};

/// Fewest walks accepted by [`Simulation::survival_curve`].
pub const MIN_SURVIVAL_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub t: f64,
    /// Fraction of requests not yet served by the domain at walk time `t`.
    pub survival: f64,
    pub se: f64,
}

/// Output of a (possibly replicated) run: the report plus raw samples.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub report: SimReport,
    raw: RawStats,
}

impl Simulation {
    fn from_raw(cfg: &SimConfig, raw: RawStats) -> Result<Self> {
        Ok(Simulation {
            report: raw.report(&cfg.custodian)?,
            raw,
        })
    }

    /// Walk times at which requests entering `tier` were served there
    /// (`0` for an entry hit, `+inf` when the TTL ran out), in event order.
    pub fn found_times(&self, tier: usize, content: usize) -> Result<&[f64]> {
        self.report.cell(tier, content)?;
        Ok(&self.raw.cells[tier][content].found_times)
    }

    /// Empirical survival `P(not found by t)` with binomial standard error.
    pub fn survival_curve(
        &self,
        tier: usize,
        content: usize,
        grid: &[f64],
    ) -> Result<Vec<SurvivalPoint>> {
        let samples = self.found_times(tier, content)?;
        if samples.len() < MIN_SURVIVAL_SAMPLES {
            return Err(Error::InsufficientSamples {
                observed: samples.len(),
                required: MIN_SURVIVAL_SAMPLES,
            });
        }
        if grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("survival grid must be sorted"));
        }
        if let Some(t) = grid.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::domain(format!("negative survival grid point {t}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        Ok(grid
            .iter()
            .map(|&t| {
                let served = sorted.partition_point(|s| *s <= t);
                let p = 1.0 - served as f64 / n;
                SurvivalPoint {
                    t,
                    survival: p,
                    se: (p * (1.0 - p) / n).sqrt(),
                }
            })
            .collect())
    }
}

/// One replication on substream 0.
pub fn simulate(cfg: &SimConfig) -> Result<Simulation> {
    let raw = Engine::new(cfg, 0, None)?.run()?;
    Simulation::from_raw(cfg, raw)
}

/// Like [`simulate`], writing one JSON record per event to `trace`.
pub fn simulate_traced(cfg: &SimConfig, trace: &mut dyn Write) -> Result<Simulation> {
    let raw = Engine::new(cfg, 0, Some(trace))?.run()?;
    Simulation::from_raw(cfg, raw)
}

/// `reps` independent replications on substreams `0..reps`, run in parallel
/// and pooled in substream order.
pub fn simulate_replicated(cfg: &SimConfig, reps: usize) -> Result<Simulation> {
    if reps == 0 {
        return Err(Error::config("need at least one replication"));
    }
    let runs: Vec<Result<RawStats>> = (0..reps as u64)
        .into_par_iter()
        .map(|stream| Engine::new(cfg, stream, None)?.run())
        .collect();
    let mut runs = runs.into_iter();
    let mut pooled = runs.next().expect("reps > 0")?;
    for r in runs {
        pooled.absorb(r?);
    }
    Simulation::from_raw(cfg, pooled)
}

pub fn run(cfg: &SimConfig) -> Result<SimReport> {
    Ok(simulate(cfg)?.report)
}

pub fn estimate_survival_curve(
    cfg: &SimConfig,
    content: usize,
    tier: usize,
    grid: &[f64],
) -> Result<Vec<SurvivalPoint>> {
    simulate(cfg)?.survival_curve(tier, content, grid)
}

/// Time-average fraction of `tier`'s caches holding `content`.
pub fn estimate_rc_occupancy(cfg: &SimConfig, content: usize, tier: usize) -> Result<Estimate> {
    if cfg.placement != Placement::Dynamic {
        return Err(Error::config("occupancy needs dynamic placement"));
    }
    let report = run(cfg)?;
    Ok(report
        .cell(tier, content)?
        .occupancy
        .expect("dynamic runs report occupancy"))
}
