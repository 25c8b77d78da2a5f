//! Placement and search tuning for a single tier with a fixed custodian cost.
//!
//! The objective throughout is the popularity-weighted stateful large-`N`
//! delay
//!
//! `E[D] = sum_c (lambda_c / lambda)(1 - pi_c)((1 - e^{-gamma pi_c T_c})/(pi_c gamma) + C e^{-gamma pi_c T_c})`
//!
//! minimised subject to `sum_c pi_c = B`.

mod allocation;
mod grid;
mod heuristic;
mod knapsack;
mod ttl;

use serde::{Deserialize, Serialize};

use crate::analytic::{relative_expm1, Ttl};
use crate::error::{Error, Result};

pub use allocation::{popularity_fill, square_root_allocation, top_b_allocation};
pub use grid::{grid_search_oracle, linear_grid, GridSearchResult};
pub use heuristic::combined_heuristic;
pub use knapsack::{
    kkt_residual, quadratic_coefficients, quadratic_objective, small_gamma_t_allocation,
    solve_quadratic_knapsack,
    KnapsackMethod, KnapsackSolution,
};
pub use ttl::{bang_bang_ttl, search_cost};

/// Single-tier placement/search problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub lambdas: Vec<f64>,
    /// Expected number of stored items, `sum_c pi_c`.
    pub budget: f64,
    /// Fixed custodian delay `C`.
    pub custodian_cost: f64,
    pub hop_rate: f64,
    /// Common TTL, used by the small-`gamma T` quadratic program.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttl: Option<Ttl>,
}

impl AllocationProblem {
    pub fn new(lambdas: Vec<f64>, budget: f64, custodian_cost: f64, hop_rate: f64) -> Self {
        AllocationProblem {
            lambdas,
            budget,
            custodian_cost,
            hop_rate,
            ttl: None,
        }
    }

    pub fn with_ttl(mut self, ttl: Ttl) -> Self {
        self.ttl = Some(ttl);
        self
    }

    pub fn n_contents(&self) -> usize {
        self.lambdas.len()
    }

    pub fn validate(&self) -> Result<()> {
        validate_lambdas(&self.lambdas)?;
        validate_budget(self.budget, self.lambdas.len())?;
        if !(self.custodian_cost >= 0.0 && self.custodian_cost.is_finite()) {
            return Err(Error::domain(format!(
                "custodian cost must be >= 0, got {}",
                self.custodian_cost
            )));
        }
        if !(self.hop_rate > 0.0 && self.hop_rate.is_finite()) {
            return Err(Error::domain(format!(
                "hop rate must be positive, got {}",
                self.hop_rate
            )));
        }
        Ok(())
    }

    /// Popularity weights `lambda_c / lambda`.
    pub fn weights(&self) -> Vec<f64> {
        let total: f64 = self.lambdas.iter().sum();
        self.lambdas.iter().map(|l| l / total).collect()
    }
}

pub(crate) fn validate_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::EmptyInput("no contents"));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::domain(format!("request rates must be positive, got {l}")));
    }
    Ok(())
}

pub(crate) fn validate_budget(budget: f64, contents: usize) -> Result<()> {
    if !(budget >= 0.0) || budget > contents as f64 {
        return Err(Error::InfeasibleBudget { budget, contents });
    }
    Ok(())
}

/// Solver bookkeeping attached to every allocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: String,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Coordinates pinned to a box bound by water-filling.
    pub clamp_events: usize,
    /// Multiplier of the budget constraint, when the method produces one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub pis: Vec<f64>,
    pub ttls: Vec<Ttl>,
    /// `E[D]` in seconds.
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

/// Delay of one content at `(pi, T)` without its popularity weight.
pub fn content_objective(pi: f64, ttl: Ttl, custodian_cost: f64, hop_rate: f64) -> f64 {
    let miss = 1.0 - pi;
    if miss <= 0.0 {
        return 0.0;
    }
    match ttl {
        Ttl::Finite(t) => {
            let x = hop_rate * pi * t;
            miss * (t * relative_expm1(x) + custodian_cost * (-x).exp())
        }
        Ttl::Unbounded if pi > 0.0 => miss / (pi * hop_rate),
        Ttl::Unbounded => f64::INFINITY,
    }
}

/// Popularity-weighted delay of an allocation.
///
/// Contents never cached but searched forever contribute `+inf`.
pub fn delay_objective(problem: &AllocationProblem, pis: &[f64], ttls: &[Ttl]) -> f64 {
    debug_assert_eq!(pis.len(), problem.lambdas.len());
    debug_assert_eq!(ttls.len(), problem.lambdas.len());
    problem
        .weights()
        .iter()
        .zip(pis.iter().zip(ttls))
        .map(|(w, (pi, ttl))| {
            w * content_objective(*pi, *ttl, problem.custodian_cost, problem.hop_rate)
        })
        .sum()
}
