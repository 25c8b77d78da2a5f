//! Simulator-versus-model and optimizer-versus-oracle checks.

use serde::Serialize;

use crate::analytic::{
    insertion_rate, occupancy_probability, publisher_load, stateful_miss_prob_large_n,
    stateless_miss_prob, ContentSpec, CostModel, DomainConfig, Tier, Topology, Ttl,
};
use crate::error::Result;
use crate::harness::table::{Cell, Table};
use crate::optimizer::{solve_quadratic_knapsack, square_root_allocation, KnapsackMethod};
use crate::sim::{simulate_replicated, Estimate, Horizon, Placement, SimConfig, WalkMode};

/// Closed forms the suite compares against. Swapping one out is how the
/// negative-control tests make the suite fail.
#[derive(Debug, Clone, Copy)]
pub struct Formulas {
    /// Survival of a no-revisit walk at time `t`.
    pub stateful_miss: fn(f64, &DomainConfig, f64) -> Result<f64>,
    /// Survival of a stateless walk at time `t`.
    pub stateless_miss: fn(f64, &DomainConfig, f64) -> Result<f64>,
    pub occupancy: fn(&ContentSpec) -> Result<f64>,
    pub insertion_rate: fn(&ContentSpec) -> Result<f64>,
    pub publisher_load: fn(f64, &[f64]) -> f64,
    pub square_root: fn(&[f64], f64) -> Result<Vec<f64>>,
}

impl Default for Formulas {
    fn default() -> Self {
        Formulas {
            stateful_miss: |t, dom, pi| stateful_miss_prob_large_n(t, dom.hop_rate, pi),
            stateless_miss: stateless_miss_prob,
            occupancy: occupancy_probability,
            insertion_rate,
            publisher_load,
            square_root: square_root_allocation,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationSettings {
    /// Largest accepted `|z|` for statistical checks.
    pub z_threshold: f64,
    /// Multiplies every simulated sample size.
    pub scale: f64,
    pub seed: u64,
    pub replications: usize,
    pub formulas: Formulas,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            z_threshold: 3.0,
            scale: 1.0,
            seed: 1,
            replications: 1,
            formulas: Formulas::default(),
        }
    }
}

/// How a check is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `|z| <= z_threshold`.
    Statistical,
    /// `|observed - expected| <= tolerance`.
    Tolerance(f64),
    /// `observed <= expected`.
    AtMost,
    /// `observed >= expected`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub quantity: String,
    pub expected: f64,
    pub observed: f64,
    pub se: f64,
    pub criterion: Criterion,
}

impl CheckRow {
    pub fn z(&self) -> f64 {
        match self.criterion {
            Criterion::Statistical => Estimate {
                value: self.observed,
                se: self.se,
            }
            .z_score(self.expected),
            _ => f64::NAN,
        }
    }

    pub fn passes(&self, z_threshold: f64) -> bool {
        match self.criterion {
            Criterion::Statistical => self.z().abs() <= z_threshold,
            Criterion::Tolerance(tol) => (self.observed - self.expected).abs() <= tol,
            Criterion::AtMost => self.observed <= self.expected,
            Criterion::AtLeast => self.observed >= self.expected,
        }
    }

    fn threshold(&self, z_threshold: f64) -> f64 {
        match self.criterion {
            Criterion::Statistical => z_threshold,
            Criterion::Tolerance(tol) => tol,
            Criterion::AtMost | Criterion::AtLeast => self.expected,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<CheckRow>,
    pub z_threshold: f64,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&CheckRow> {
        self.rows.iter().filter(|r| !r.passes(self.z_threshold)).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    /// Names of checks with at least one failing row, in suite order.
    pub fn failed_checks(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in self.failures() {
            if !names.contains(&r.check) {
                names.push(r.check.clone());
            }
        }
        names
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "check",
            "quantity",
            "expected",
            "observed",
            "se",
            "z",
            "threshold",
            "pass",
        ]);
        for r in &self.rows {
            let se = match r.criterion {
                Criterion::Statistical => Cell::Num(r.se),
                _ => Cell::Text(String::new()),
            };
            let z = match r.criterion {
                Criterion::Statistical => Cell::Num(r.z()),
                _ => Cell::Text(String::new()),
            };
            t.push(vec![
                r.check.as_str().into(),
                r.quantity.as_str().into(),
                r.expected.into(),
                r.observed.into(),
                se,
                z,
                r.threshold(self.z_threshold).into(),
                r.passes(self.z_threshold).into(),
            ]);
        }
        t
    }
}

fn scaled(n: f64, scale: f64) -> u64 {
    (n * scale).round().max(1.0) as u64
}

fn one_tier(n_caches: usize, hop_rate: f64, ttl: Ttl, spec: ContentSpec) -> Result<Topology> {
    let rate = spec.lambda * n_caches as f64;
    Ok(Topology {
        tiers: vec![Tier {
            domain: DomainConfig::new(n_caches, hop_rate, ttl)?,
            contents: vec![spec],
            ttls: None,
        }],
        exogenous_rates: vec![rate],
    })
}

/// Survival at each grid point with a batch-means standard error over
/// contiguous blocks of walks, which absorbs the correlation between walks
/// that see the same counters.
fn batched_survival(samples: &[f64], t: f64, batches: usize) -> Estimate {
    let per = samples.len() / batches;
    let means: Vec<f64> = samples
        .chunks(per.max(1))
        .take(batches)
        .map(|b| b.iter().filter(|s| **s > t).count() as f64 / b.len() as f64)
        .collect();
    let mut e = Estimate::batch_means(&means);
    e.value = samples.iter().filter(|s| **s > t).count() as f64 / samples.len() as f64;
    e
}

fn survival_rows(
    check: &str,
    cfg: &SimConfig,
    reps: usize,
    min_walks: u64,
    grid: &[f64],
    formula: &dyn Fn(f64) -> Result<f64>,
) -> Result<Vec<CheckRow>> {
    let sim = simulate_replicated(cfg, reps)?;
    let samples = sim.found_times(0, 0)?;
    let mut rows = Vec::with_capacity(grid.len() + 1);
    rows.push(CheckRow {
        check: check.into(),
        quantity: "walks".into(),
        expected: min_walks as f64,
        observed: samples.len() as f64,
        se: 0.0,
        criterion: Criterion::AtLeast,
    });
    for &t in grid {
        let e = batched_survival(samples, t, 50);
        rows.push(CheckRow {
            check: check.into(),
            quantity: format!("survival(t={t:.4})"),
            expected: formula(t)?,
            observed: e.value,
            se: e.se,
            criterion: Criterion::Statistical,
        });
    }
    Ok(rows)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Dynamic counters with a no-revisit walk that is fast compared with the
/// counter dynamics.
fn check_dynamic_survival(s: &ValidationSettings) -> Result<Vec<CheckRow>> {
    let (n, gamma, ttl) = (20, 100.0, 0.08);
    let spec = ContentSpec::with_mu(0.25, 0, 1.0)?;
    let topo = one_tier(n, gamma, Ttl::Finite(ttl), spec)?;
    let dom = topo.tiers[0].domain;
    let pi = occupancy_probability(&spec)?;
    let walks = scaled(1e5, s.scale);
    let cfg = SimConfig::new(
        topo,
        WalkMode::StatefulNoRevisit,
        Placement::Dynamic,
        Horizon::Requests(walks),
    )
    .with_warmup(50.0)
    .with_seed(s.seed);
    let f = s.formulas.stateful_miss;
    survival_rows("survival_dynamic_stateful", &cfg, s.replications, walks, &linspace(0.0, ttl, 10), &|t| {
        f(t, &dom, pi)
    })
}

fn check_frozen_survival(s: &ValidationSettings) -> Result<Vec<CheckRow>> {
    let (n, gamma, ttl, pi) = (20, 100.0, 0.5, 0.25);
    let spec = ContentSpec::for_target_occupancy(0.25, 0, pi)?;
    let topo = one_tier(n, gamma, Ttl::Finite(ttl), spec)?;
    let dom = topo.tiers[0].domain;
    let walks = scaled(1e5, s.scale);
    let cfg = SimConfig::new(
        topo,
        WalkMode::Stateless,
        Placement::Frozen,
        Horizon::Requests(walks),
    )
    .with_seed(s.seed.wrapping_add(1));
    let f = s.formulas.stateless_miss;
    survival_rows("survival_frozen_stateless", &cfg, s.replications, walks, &linspace(0.0, 0.1, 10), &|t| {
        f(t, &dom, pi)
    })
}

/// Occupancy and insertion rate of isolated counters for every `(K, rho)`.
fn check_counters(s: &ValidationSettings) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let mu = 1.0;
    let mut seed = s.seed.wrapping_add(100);
    for k in [0u32, 1, 2] {
        for rho in [0.25, 0.5, 0.8] {
            let spec = ContentSpec::with_mu(rho * mu, k, mu)?;
            let topo = one_tier(20, 1.0, Ttl::Finite(0.0), spec)?;
            // batches must be long against the counter's relaxation time
            // 1 / (sqrt(mu) - sqrt(lambda))^2, or batch means understate the error
            let relax = 1.0 / (mu.sqrt() - (rho * mu).sqrt()).powi(2);
            let horizon = (2500.0 * relax).max(2e4) * s.scale;
            let warmup = 20.0 * relax;
            let cfg = SimConfig::new(
                topo,
                WalkMode::Stateless,
                Placement::Dynamic,
                Horizon::Time(warmup + horizon),
            )
            .with_warmup(warmup)
            .with_seed(seed);
            seed = seed.wrapping_add(1);
            let sim = simulate_replicated(&cfg, s.replications)?;
            let cell = sim.report.cell(0, 0)?;
            let label = format!("K={k},rho={rho}");
            let occ = cell.occupancy.expect("dynamic run");
            let ins = cell.insertion_rate.expect("dynamic run");
            rows.push(CheckRow {
                check: "rc_occupancy".into(),
                quantity: label.clone(),
                expected: (s.formulas.occupancy)(&spec)?,
                observed: occ.value,
                se: occ.se,
                criterion: Criterion::Statistical,
            });
            rows.push(CheckRow {
                check: "rc_insertion_rate".into(),
                quantity: label.clone(),
                expected: (s.formulas.insertion_rate)(&spec)?,
                observed: ins.value,
                se: ins.se,
                criterion: Criterion::Statistical,
            });
            rows.push(CheckRow {
                check: "rc_flow_balance".into(),
                quantity: label,
                expected: 1.0,
                observed: cell.flow_imbalance as f64,
                se: 0.0,
                criterion: Criterion::AtMost,
            });
        }
    }
    Ok(rows)
}

/// Three-tier frozen network: per-tier miss probabilities and the load that
/// reaches the custodian.
fn check_publisher_load(s: &ValidationSettings) -> Result<Vec<CheckRow>> {
    let (pi, ttl, rate) = (0.1, 1.0, 1.0);
    let dom = DomainConfig::new(10, 1.0, Ttl::Finite(ttl))?;
    let spec = ContentSpec::for_target_occupancy(0.1, 0, pi)?;
    let topo = Topology {
        tiers: vec![
            Tier {
                domain: dom,
                contents: vec![spec],
                ttls: None,
            };
            3
        ],
        exogenous_rates: vec![rate],
    };
    let cfg = SimConfig::new(
        topo,
        WalkMode::Stateless,
        Placement::Frozen,
        Horizon::Requests(scaled(1e5, s.scale)),
    )
    .with_custodian(CostModel::Mm1 { capacity: 0.9 })
    .with_seed(s.seed.wrapping_add(200));
    let sim = simulate_replicated(&cfg, s.replications)?;
    let miss = (s.formulas.stateless_miss)(ttl, &dom, pi)?;
    let mut rows = Vec::new();
    for tier in 0..3 {
        let m = &sim.report.cell(tier, 0)?.miss_prob;
        rows.push(CheckRow {
            check: "tier_miss_prob".into(),
            quantity: format!("tier {tier}"),
            expected: miss,
            observed: m.value,
            se: m.se,
            criterion: Criterion::Statistical,
        });
    }
    let load = &sim.report.publisher_load;
    rows.push(CheckRow {
        check: "publisher_load".into(),
        quantity: "three tiers".into(),
        expected: (s.formulas.publisher_load)(rate, &[miss; 3]),
        observed: load.value,
        se: load.se,
        criterion: Criterion::Statistical,
    });
    Ok(rows)
}

fn check_optimizers(s: &ValidationSettings) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let pis = (s.formulas.square_root)(&[0.8, 0.1, 0.002], 1.0)?;
    for (i, (got, want)) in pis.iter().zip([0.71, 0.25, 0.04]).enumerate() {
        rows.push(CheckRow {
            check: "square_root_reference".into(),
            quantity: format!("content {}", i + 1),
            expected: want,
            observed: *got,
            se: 0.0,
            criterion: Criterion::Tolerance(0.01),
        });
    }
    let k2 = [0.5, 1.0, 2.0, 4.0, 0.25];
    let k1 = [-1.0, -1.5, -2.0, -1.0, -0.5];
    let a = solve_quadratic_knapsack(&k2, &k1, 2.0, KnapsackMethod::Breakpoint)?;
    let b = solve_quadratic_knapsack(&k2, &k1, 2.0, KnapsackMethod::DualGradient)?;
    let gap = a
        .pis
        .iter()
        .zip(&b.pis)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    rows.push(CheckRow {
        check: "knapsack_methods_agree".into(),
        quantity: "max |breakpoint - dual|".into(),
        expected: 0.0,
        observed: gap,
        se: 0.0,
        criterion: Criterion::Tolerance(1e-6),
    });
    for (name, sol) in [("breakpoint", &a), ("dual_gradient", &b)] {
        rows.push(CheckRow {
            check: "knapsack_kkt".into(),
            quantity: name.into(),
            expected: 0.0,
            observed: sol.kkt_residual,
            se: 0.0,
            criterion: Criterion::Tolerance(1e-6),
        });
    }
    Ok(rows)
}

/// Runs every check; rows keep suite order.
pub fn run_validation(s: &ValidationSettings) -> Result<ValidationReport> {
    let mut rows = Vec::new();
    rows.extend(check_dynamic_survival(s)?);
    rows.extend(check_frozen_survival(s)?);
    rows.extend(check_counters(s)?);
    rows.extend(check_publisher_load(s)?);
    rows.extend(check_optimizers(s)?);
    Ok(ValidationReport {
        rows,
        z_threshold: s.z_threshold,
    })
}
