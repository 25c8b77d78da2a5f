//! Exhaustive search over a product grid of occupancies and TTLs.
//!
//! The objective is a sum of per-content terms, so for each occupancy the best
//! TTL is found independently and only occupancy vectors need enumeration.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::Ttl;
use crate::error::{Error, Result};
use crate::optimizer::{content_objective, AllocationProblem, AllocationResult, Diagnostics};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub best: AllocationResult,
    pub pi_grid: Vec<f64>,
    pub ttl_grid: Vec<Ttl>,
    /// `pi_envelopes[c][p]`: best objective with content `c` pinned to
    /// `pi_grid[p]`; `+inf` where no feasible vector exists.
    pub pi_envelopes: Vec<Vec<f64>>,
    /// `ttl_envelopes[c][t]`: best objective with content `c` pinned to
    /// `ttl_grid[t]`.
    pub ttl_envelopes: Vec<Vec<f64>>,
    pub feasible_points: usize,
    /// Budget tolerance: half the smallest occupancy spacing.
    pub tolerance: f64,
}

struct Tables {
    /// `terms[c][p][t]`, weighted.
    terms: Vec<Vec<Vec<f64>>>,
    /// best over `t` of `terms[c][p][t]` and its index
    best: Vec<Vec<(f64, usize)>>,
}

#[derive(Clone)]
struct Accum {
    best: f64,
    arg: Vec<usize>,
    pi_env: Vec<Vec<f64>>,
    ttl_env: Vec<Vec<f64>>,
    feasible: usize,
}

impl Accum {
    fn new(contents: usize, n_pi: usize, n_ttl: usize) -> Self {
        Accum {
            best: f64::INFINITY,
            arg: Vec::new(),
            pi_env: vec![vec![f64::INFINITY; n_pi]; contents],
            ttl_env: vec![vec![f64::INFINITY; n_ttl]; contents],
            feasible: 0,
        }
    }

    /// Folds `other` in; `self` comes first in enumeration order, so ties keep
    /// `self`'s argmin.
    fn merge(mut self, other: Accum) -> Accum {
        if other.best < self.best {
            self.best = other.best;
            self.arg = other.arg;
        }
        for (a, b) in self.pi_env.iter_mut().zip(&other.pi_env) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = x.min(*y);
            }
        }
        for (a, b) in self.ttl_env.iter_mut().zip(&other.ttl_env) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = x.min(*y);
            }
        }
        self.feasible += other.feasible;
        self
    }

    fn visit(&mut self, tables: &Tables, combo: &[usize]) {
        let total: f64 = combo.iter().enumerate().map(|(c, p)| tables.best[c][*p].0).sum();
        self.feasible += 1;
        if total < self.best {
            self.best = total;
            self.arg = combo.to_vec();
        }
        for (c, &p) in combo.iter().enumerate() {
            let env = &mut self.pi_env[c][p];
            *env = env.min(total);
            let rest = total - tables.best[c][p].0;
            for (t, term) in tables.terms[c][p].iter().enumerate() {
                let env = &mut self.ttl_env[c][t];
                *env = env.min(rest + term);
            }
        }
    }
}

struct Enumerator<'a> {
    tables: &'a Tables,
    pi_grid: &'a [f64],
    budget: f64,
    tol: f64,
    max_pi: f64,
    min_pi: f64,
}

impl Enumerator<'_> {
    fn walk(&self, combo: &mut Vec<usize>, partial: f64, acc: &mut Accum) {
        let contents = self.tables.terms.len();
        let remaining = (contents - combo.len()) as f64;
        if partial + remaining * self.min_pi > self.budget + self.tol
            || partial + remaining * self.max_pi < self.budget - self.tol
        {
            return;
        }
        if combo.len() == contents {
            acc.visit(self.tables, combo);
            return;
        }
        for (p, pi) in self.pi_grid.iter().enumerate() {
            combo.push(p);
            self.walk(combo, partial + pi, acc);
            combo.pop();
        }
    }
}

/// Minimises the delay objective over `pi_grid^C x ttl_grid^C` subject to
/// `|sum pi - B| <= tolerance`.
///
/// Work is split over the first content's occupancy; ties resolve to the
/// earliest vector in lexicographic grid order regardless of thread count.
pub fn grid_search_oracle(
    problem: &AllocationProblem,
    pi_grid: &[f64],
    ttl_grid: &[Ttl],
) -> Result<GridSearchResult> {
    problem.validate()?;
    if pi_grid.is_empty() {
        return Err(Error::EmptyInput("occupancy grid"));
    }
    if ttl_grid.is_empty() {
        return Err(Error::EmptyInput("TTL grid"));
    }
    if let Some(p) = pi_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain(format!("grid occupancy {p} outside [0, 1]")));
    }
    let mut sorted = pi_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tol = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let tol = if tol.is_finite() { 0.5 * tol } else { 1e-9 };

    let weights = problem.weights();
    let terms: Vec<Vec<Vec<f64>>> = weights
        .iter()
        .map(|w| {
            pi_grid
                .iter()
                .map(|pi| {
                    ttl_grid
                        .iter()
                        .map(|t| {
                            w * content_objective(*pi, *t, problem.custodian_cost, problem.hop_rate)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let best = terms
        .iter()
        .map(|per_pi| {
            per_pi
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .fold((f64::INFINITY, 0), |acc, (t, v)| if *v < acc.0 { (*v, t) } else { acc })
                })
                .collect()
        })
        .collect();
    let tables = Tables { terms, best };
    let contents = problem.n_contents();
    let en = Enumerator {
        tables: &tables,
        pi_grid,
        budget: problem.budget,
        tol,
        max_pi: sorted[sorted.len() - 1],
        min_pi: sorted[0],
    };

    let partials: Vec<Accum> = (0..pi_grid.len())
        .into_par_iter()
        .map(|p| {
            let mut acc = Accum::new(contents, pi_grid.len(), ttl_grid.len());
            let mut combo = vec![p];
            en.walk(&mut combo, pi_grid[p], &mut acc);
            acc
        })
        .collect();
    let acc = partials
        .into_iter()
        .fold(Accum::new(contents, pi_grid.len(), ttl_grid.len()), Accum::merge);
    if acc.feasible == 0 || !acc.best.is_finite() {
        return Err(Error::NoFeasiblePoint { tolerance: tol });
    }

    let pis: Vec<f64> = acc.arg.iter().map(|p| pi_grid[*p]).collect();
    let ttls: Vec<Ttl> = acc
        .arg
        .iter()
        .enumerate()
        .map(|(c, p)| ttl_grid[tables.best[c][*p].1])
        .collect();
    Ok(GridSearchResult {
        best: AllocationResult {
            diagnostics: Diagnostics {
                method: "grid_search".into(),
                iterations: acc.feasible,
                kkt_residual: (pis.iter().sum::<f64>() - problem.budget).abs(),
                clamp_events: 0,
                budget_multiplier: None,
                notes: Vec::new(),
            },
            objective: acc.best,
            pis,
            ttls,
        },
        pi_grid: pi_grid.to_vec(),
        ttl_grid: ttl_grid.to_vec(),
        pi_envelopes: acc.pi_env,
        ttl_envelopes: acc.ttl_env,
        feasible_points: acc.feasible,
        tolerance: tol,
    })
}

/// `start, start + step, ...` up to and including `end` (within rounding).
pub fn linear_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::delay_objective;

    fn reference() -> (AllocationProblem, Vec<f64>, Vec<Ttl>) {
        let p = AllocationProblem::new(vec![0.8, 0.1, 0.002], 1.0, 10.0, 25.0);
        let pis = linear_grid(0.01, 0.99, 0.01);
        let ttls: Vec<Ttl> = linear_grid(0.0, 30.0, 0.1).into_iter().map(Ttl::Finite).collect();
        (p, pis, ttls)
    }

    #[test]
    fn reference_instance_optimum() {
        let (p, pis, ttls) = reference();
        let r = grid_search_oracle(&p, &pis, &ttls).unwrap();
        for (got, want) in r.best.pis.iter().zip([0.71, 0.25, 0.04]) {
            assert!((got - want).abs() < 1e-9, "{:?}", r.best.pis);
        }
        assert!((r.best.objective - 0.0299229).abs() < 1e-6, "{}", r.best.objective);
        let again = delay_objective(&p, &r.best.pis, &r.best.ttls);
        assert!((again - r.best.objective).abs() < 1e-12);
        // each occupancy envelope bottoms out at the optimum
        for c in 0..3 {
            let env = &r.pi_envelopes[c];
            let arg = env
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!((pis[arg] - r.best.pis[c]).abs() < 1e-9);
            let ttl_min = r.ttl_envelopes[c].iter().copied().fold(f64::INFINITY, f64::min);
            assert!((ttl_min - r.best.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (p, pis, ttls) = reference();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| grid_search_oracle(&p, &pis, &ttls).unwrap());
        let b = grid_search_oracle(&p, &pis, &ttls).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_feasible_point() {
        let p = AllocationProblem::new(vec![0.5, 0.5], 1.0, 10.0, 1.0);
        let r = grid_search_oracle(&p, &[0.1, 0.2], &[Ttl::Finite(0.0)]);
        assert!(matches!(r, Err(Error::NoFeasiblePoint { .. })));
    }

    #[test]
    fn linear_grid_endpoints() {
        let g = linear_grid(0.0, 30.0, 0.1);
        assert_eq!(g.len(), 301);
        assert!((g[300] - 30.0).abs() < 1e-9);
    }
}
