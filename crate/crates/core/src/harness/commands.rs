use std::time::Instant;

use serde::Serialize;

use crate::analytic::{
    expected_content_delay, expected_domain_delay, miss_prob_at, publisher_load,
    custodian_cost, tier_states, CostModel, Ttl,
};
use crate::error::{Error, Result};
use crate::harness::config::{Method, Resolved, Scenario};
use crate::harness::table::{Cell, Table};
use crate::optimizer::{
    bang_bang_ttl, combined_heuristic, content_objective, delay_objective, grid_search_oracle,
    small_gamma_t_allocation, square_root_allocation, top_b_allocation, AllocationProblem,
    AllocationResult, Diagnostics, KnapsackMethod,
};
use crate::sim::{simulate_replicated, simulate_traced, Horizon, SimConfig, Simulation};

/// Files produced by a command, written by the caller.
#[derive(Debug, Clone, Default)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
}

impl Output {
    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.files.push((name.to_string(), t.to_csv()?));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }
}

/// Delay with an overloaded custodian reported as `+inf`.
fn delay_or_inf(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::Overload { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

fn ttl_cell(t: Ttl) -> Cell {
    match t {
        Ttl::Finite(v) => Cell::Num(v),
        Ttl::Unbounded => Cell::Text("inf".into()),
    }
}

/// One row of the TTL sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtlPoint {
    pub content: usize,
    pub occupancy: f64,
    pub ttl: Ttl,
    pub domain_delay: f64,
    pub miss_prob: f64,
    pub publisher_load: f64,
    pub custodian_cost: f64,
    pub total_delay: f64,
}

/// End-to-end delay over the TTL grid (common to all tiers) for every
/// occupancy in the occupancy grid, or the configured occupancies when no
/// grid is given.
pub fn ttl_sweep(cfg: &Resolved) -> Result<Vec<TtlPoint>> {
    let ttls = cfg.ttl_grid()?;
    let variants: Vec<Option<f64>> = match &cfg.experiment.occupancy_grid {
        Some(g) => g.values()?.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut out = Vec::new();
    for pi in variants {
        let base = match pi {
            Some(p) => cfg.with_occupancy(p),
            None => cfg.clone(),
        };
        for &ttl in &ttls {
            let topo = base.build_topology(Some(ttl))?;
            for c in 0..cfg.n_contents() {
                let states = tier_states(&topo, c)?;
                let user = states.last().expect("at least one tier");
                let misses: Vec<f64> = states
                    .iter()
                    .map(|s| miss_prob_at(cfg.search.variant, &s.domain, s.pi, s.ttl))
                    .collect::<Result<_>>()?;
                let load = publisher_load(topo.exogenous_rates[c], &misses);
                let domain_delay = match ttl {
                    Ttl::Unbounded if user.pi < 1.0 => f64::INFINITY,
                    _ => expected_domain_delay(cfg.search.variant, &user.domain, user.pi)?,
                };
                out.push(TtlPoint {
                    content: c,
                    occupancy: user.pi,
                    ttl,
                    domain_delay,
                    miss_prob: *misses.last().expect("at least one tier"),
                    publisher_load: load,
                    custodian_cost: delay_or_inf(custodian_cost(&cfg.cost, load))?,
                    total_delay: delay_or_inf(expected_content_delay(
                        &topo,
                        cfg.search.variant,
                        &cfg.cost,
                        c,
                    ))?,
                });
            }
        }
    }
    Ok(out)
}

/// `(content, occupancy, best ttl, best delay)` per curve of a sweep; ties
/// go to the smaller TTL.
pub fn sweep_argmins(points: &[TtlPoint]) -> Vec<(usize, f64, Ttl, f64)> {
    let mut best: Vec<(usize, f64, Ttl, f64)> = Vec::new();
    for p in points {
        match best
            .iter_mut()
            .find(|b| b.0 == p.content && b.1 == p.occupancy)
        {
            Some(b) if p.total_delay < b.3 => {
                b.2 = p.ttl;
                b.3 = p.total_delay;
            }
            Some(_) => {}
            None => best.push((p.content, p.occupancy, p.ttl, p.total_delay)),
        }
    }
    best
}

/// Delay of every content over the TTL grid for the configured topology and
/// for its user-side tier alone.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationCurve {
    pub content: usize,
    pub rate: f64,
    pub ttls: Vec<Ttl>,
    pub single_tier: Vec<f64>,
    pub multi_tier: Vec<f64>,
}

pub fn load_aggregation_curves(cfg: &Resolved) -> Result<Vec<AggregationCurve>> {
    let ttls = cfg.ttl_grid()?;
    let user_only = cfg.with_tiers(vec![cfg.topology.tiers.last().expect("validated").clone()]);
    let mut curves: Vec<AggregationCurve> = (0..cfg.n_contents())
        .map(|c| AggregationCurve {
            content: c,
            rate: cfg.contents.rates[c],
            ttls: ttls.clone(),
            single_tier: Vec::new(),
            multi_tier: Vec::new(),
        })
        .collect();
    for &ttl in &ttls {
        let multi = cfg.build_topology(Some(ttl))?;
        let single = user_only.build_topology(Some(ttl))?;
        for (c, curve) in curves.iter_mut().enumerate() {
            let v = cfg.search.variant;
            curve
                .multi_tier
                .push(delay_or_inf(expected_content_delay(&multi, v, &cfg.cost, c))?);
            curve
                .single_tier
                .push(delay_or_inf(expected_content_delay(&single, v, &cfg.cost, c))?);
        }
    }
    Ok(curves)
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc })
        .0
}

impl AggregationCurve {
    pub fn best_single(&self) -> (Ttl, f64) {
        let i = argmin(&self.single_tier);
        (self.ttls[i], self.single_tier[i])
    }

    pub fn best_multi(&self) -> (Ttl, f64) {
        let i = argmin(&self.multi_tier);
        (self.ttls[i], self.multi_tier[i])
    }

    /// Multi-tier delay never exceeds single-tier delay on the grid.
    pub fn dominates(&self) -> bool {
        self.multi_tier
            .iter()
            .zip(&self.single_tier)
            .all(|(m, s)| *m <= *s + 1e-12)
    }
}

pub fn cmd_analytic(cfg: &Resolved) -> Result<Output> {
    let mut out = Output::default();
    match cfg.scenario {
        Scenario::LoadAggregation => {
            let curves = load_aggregation_curves(cfg)?;
            let mut t = Table::new(&["content", "rate", "ttl", "delay_single_tier", "delay_multi_tier"]);
            let mut s = Table::new(&[
                "content",
                "rate",
                "best_ttl_single_tier",
                "best_delay_single_tier",
                "best_ttl_multi_tier",
                "best_delay_multi_tier",
                "reduction",
                "multi_tier_dominates",
            ]);
            for cv in &curves {
                for i in 0..cv.ttls.len() {
                    t.push(vec![
                        cv.content.into(),
                        cv.rate.into(),
                        ttl_cell(cv.ttls[i]),
                        cv.single_tier[i].into(),
                        cv.multi_tier[i].into(),
                    ]);
                }
                let (ts, ds) = cv.best_single();
                let (tm, dm) = cv.best_multi();
                s.push(vec![
                    cv.content.into(),
                    cv.rate.into(),
                    ttl_cell(ts),
                    ds.into(),
                    ttl_cell(tm),
                    dm.into(),
                    (ds / dm).into(),
                    cv.dominates().into(),
                ]);
                out.summary.push(format!(
                    "content {} (rate {}): best multi-tier delay {:.6} at T={}, single-tier {:.6} at T={}",
                    cv.content, cv.rate, dm, tm, ds, ts
                ));
            }
            out.table("load_aggregation.csv", &t)?;
            out.table("load_aggregation_summary.csv", &s)?;
        }
        Scenario::OptimalValidation => {
            let problem = allocation_problem(cfg)?;
            let pis = cfg.occupancy_grid()?;
            let ttls = cfg.ttl_grid()?;
            let w = problem.weights();
            let mut t = Table::new(&["content", "occupancy", "ttl", "weighted_delay"]);
            for c in 0..problem.n_contents() {
                for &pi in &pis {
                    for &ttl in &ttls {
                        let v = content_objective(pi, ttl, problem.custodian_cost, problem.hop_rate);
                        t.push(vec![c.into(), pi.into(), ttl_cell(ttl), (w[c] * v).into()]);
                    }
                }
            }
            out.table("content_objective.csv", &t)?;
            out.summary.push(format!("{} objective cells", t.rows.len()));
        }
        Scenario::TtlTradeoff | Scenario::Custom => {
            let points = ttl_sweep(cfg)?;
            let mut t = Table::new(&[
                "content",
                "occupancy",
                "ttl",
                "domain_delay",
                "miss_prob",
                "publisher_load",
                "custodian_cost",
                "total_delay",
            ]);
            for p in &points {
                t.push(vec![
                    p.content.into(),
                    p.occupancy.into(),
                    ttl_cell(p.ttl),
                    p.domain_delay.into(),
                    p.miss_prob.into(),
                    p.publisher_load.into(),
                    p.custodian_cost.into(),
                    p.total_delay.into(),
                ]);
            }
            let mut a = Table::new(&["content", "occupancy", "best_ttl", "best_delay"]);
            for (c, pi, ttl, d) in sweep_argmins(&points) {
                a.push(vec![c.into(), pi.into(), ttl_cell(ttl), d.into()]);
                out.summary
                    .push(format!("content {c} occupancy {pi}: minimum delay {d:.6} at T={ttl}"));
            }
            out.table("ttl_sweep.csv", &t)?;
            out.table("ttl_sweep_argmin.csv", &a)?;
        }
    }
    Ok(out)
}

/// Single-tier allocation problem: the user-side tier's hop rate and TTL,
/// a fixed custodian cost and the configured budget.
pub fn allocation_problem(cfg: &Resolved) -> Result<AllocationProblem> {
    let cost = match cfg.cost {
        CostModel::Fixed { cost } => cost,
        other => {
            return Err(Error::config(format!(
                "optimization needs a fixed custodian cost, got {other:?}"
            )))
        }
    };
    let tier = cfg.topology.tiers.last().expect("validated");
    let budget = cfg
        .experiment
        .budget
        .ok_or_else(|| Error::config("experiment.budget is required"))?;
    let p = AllocationProblem::new(cfg.contents.rates.clone(), budget, cost, tier.hop_rate)
        .with_ttl(tier.ttl);
    p.validate()?;
    Ok(p)
}

fn wrap(problem: &AllocationProblem, method: &str, pis: Vec<f64>, ttls: Vec<Ttl>) -> AllocationResult {
    AllocationResult {
        objective: delay_objective(problem, &pis, &ttls),
        diagnostics: Diagnostics {
            method: method.into(),
            iterations: 1,
            kkt_residual: (pis.iter().sum::<f64>() - problem.budget).abs(),
            ..Default::default()
        },
        pis,
        ttls,
    }
}

pub fn cmd_optimize(cfg: &Resolved, method: Option<Method>) -> Result<Output> {
    let method = method
        .or(cfg.experiment.method)
        .ok_or_else(|| Error::config("no optimization method given"))?;
    let problem = allocation_problem(cfg)?;
    let tier_ttl = problem.ttl.unwrap_or(Ttl::Unbounded);
    let common = |n: usize| vec![tier_ttl; n];
    let mut out = Output::default();
    let c = problem.n_contents();
    let result = match method {
        Method::SquareRoot => {
            let pis = square_root_allocation(&problem.lambdas, problem.budget)?;
            wrap(&problem, "square_root", pis, common(c))
        }
        Method::TopB => {
            let b = problem.budget;
            if b.fract() != 0.0 {
                return Err(Error::config(format!("top_b needs an integer budget, got {b}")));
            }
            let pis = top_b_allocation(&problem.lambdas, b as usize)?;
            wrap(&problem, "top_b", pis, common(c))
        }
        Method::QuadraticBreakpoint => small_gamma_t_allocation(&problem, KnapsackMethod::Breakpoint)?,
        Method::QuadraticDual => small_gamma_t_allocation(&problem, KnapsackMethod::DualGradient)?,
        Method::BangBang => {
            let pis = match &cfg.contents.occupancy {
                Some(p) => p.clone(),
                None => square_root_allocation(&problem.lambdas, problem.budget)?,
            };
            let ttls = bang_bang_ttl(&pis, problem.custodian_cost, problem.hop_rate);
            wrap(&problem, "bang_bang", pis, ttls)
        }
        Method::Heuristic => combined_heuristic(&problem)?,
        Method::Grid => {
            let g = grid_search_oracle(&problem, &cfg.occupancy_grid()?, &cfg.ttl_grid()?)?;
            let mut pe = Table::new(&["content", "occupancy", "objective"]);
            let mut te = Table::new(&["content", "ttl", "objective"]);
            for k in 0..c {
                for (p, v) in g.pi_grid.iter().zip(&g.pi_envelopes[k]) {
                    pe.push(vec![k.into(), (*p).into(), (*v).into()]);
                }
                for (t, v) in g.ttl_grid.iter().zip(&g.ttl_envelopes[k]) {
                    te.push(vec![k.into(), ttl_cell(*t), (*v).into()]);
                }
            }
            out.table("occupancy_envelope.csv", &pe)?;
            out.table("ttl_envelope.csv", &te)?;
            g.best
        }
    };
    let mut t = Table::new(&["content", "rate", "occupancy", "ttl"]);
    for k in 0..c {
        t.push(vec![
            k.into(),
            problem.lambdas[k].into(),
            result.pis[k].into(),
            ttl_cell(result.ttls[k]),
        ]);
    }
    out.summary.push(format!(
        "{}: objective {:.9} with occupancies {:?}",
        result.diagnostics.method, result.objective, result.pis
    ));
    out.table("allocation.csv", &t)?;
    out.json("allocation.json", &result)?;
    Ok(out)
}

pub fn sim_config(cfg: &Resolved, seed: Option<u64>) -> Result<SimConfig> {
    let topology = cfg.build_topology(None)?;
    let horizon = cfg.experiment.horizon.unwrap_or(Horizon::Requests(100_000));
    let mut s = SimConfig::new(topology, cfg.search.walk, cfg.search.placement, horizon)
        .with_custodian(cfg.cost)
        .with_warmup(cfg.experiment.warmup)
        .with_seed(seed.or(cfg.experiment.seed).unwrap_or(0));
    s.batches = 50;
    s.validate()?;
    Ok(s)
}

#[derive(Serialize)]
struct Runtime {
    wall_seconds: f64,
    replications: usize,
    workers: usize,
}

/// Runs the simulator; `trace` additionally records substream 0 event by
/// event.
pub fn cmd_simulate(
    cfg: &Resolved,
    seed: Option<u64>,
    reps: Option<usize>,
    trace: bool,
) -> Result<Output> {
    let sc = sim_config(cfg, seed)?;
    let reps = reps.or(cfg.experiment.replications).unwrap_or(1);
    let started = Instant::now();
    let sim = simulate_replicated(&sc, reps)?;
    let wall = started.elapsed().as_secs_f64();
    let mut out = Output::default();
    if trace {
        let mut buf = Vec::new();
        simulate_traced(&sc, &mut buf)?;
        out.files.push(("trace.jsonl".into(), buf));
    }
    out.json("report.json", &sim.report)?;
    out.json(
        "runtime.json",
        &Runtime {
            wall_seconds: wall,
            replications: reps,
            workers: rayon::current_num_threads(),
        },
    )?;
    let (cells, contents) = simulation_tables(&sc, &sim)?;
    out.table("sim_tiers.csv", &cells)?;
    out.table("sim_contents.csv", &contents)?;
    out.summary.push(format!(
        "{} requests over {} replications, publisher load {:.6} +- {:.6}",
        sim.report.requests, reps, sim.report.publisher_load.value, sim.report.publisher_load.se
    ));
    Ok(out)
}

fn opt_value(e: Option<crate::sim::Estimate>) -> (Cell, Cell) {
    match e {
        Some(e) => (e.value.into(), e.se.into()),
        None => (Cell::Text(String::new()), Cell::Text(String::new())),
    }
}

fn simulation_tables(sc: &SimConfig, sim: &Simulation) -> Result<(Table, Table)> {
    let variant = sc.walk.analytic_variant();
    let mut cells = Table::new(&[
        "tier",
        "content",
        "entries",
        "entry_hit_fraction",
        "miss_prob",
        "miss_prob_se",
        "analytic_miss_prob",
        "occupancy",
        "occupancy_se",
        "analytic_occupancy",
        "insertion_rate",
        "insertion_rate_se",
        "eviction_rate",
        "eviction_rate_se",
    ]);
    let mut rows_contents = Table::new(&[
        "content",
        "requests",
        "completed",
        "mean_delay",
        "mean_delay_se",
        "publisher_load",
        "publisher_load_se",
        "analytic_publisher_load",
    ]);
    let n_contents = sc.topology.n_contents();
    for c in 0..n_contents {
        let states = tier_states(&sc.topology, c)?;
        let misses: Vec<f64> = states
            .iter()
            .map(|s| miss_prob_at(variant, &s.domain, s.pi, s.ttl))
            .collect::<Result<_>>()?;
        for (i, s) in states.iter().enumerate() {
            let cell = sim.report.cell(i, c)?;
            let (occ, occ_se) = opt_value(cell.occupancy);
            let (ins, ins_se) = opt_value(cell.insertion_rate);
            let (ev, ev_se) = opt_value(cell.eviction_rate);
            cells.push(vec![
                i.into(),
                c.into(),
                cell.entries.into(),
                cell.entry_hit_fraction.value.into(),
                cell.miss_prob.value.into(),
                cell.miss_prob.se.into(),
                misses[i].into(),
                occ,
                occ_se,
                s.pi.into(),
                ins,
                ins_se,
                ev,
                ev_se,
            ]);
        }
        let r = &sim.report.contents[c];
        rows_contents.push(vec![
            c.into(),
            r.requests.into(),
            r.completed.into(),
            r.mean_delay.value.into(),
            r.mean_delay.se.into(),
            r.publisher_load.value.into(),
            r.publisher_load.se.into(),
            publisher_load(sc.topology.exogenous_rates[c], &misses).into(),
        ]);
    }
    Ok((cells, rows_contents))
}
