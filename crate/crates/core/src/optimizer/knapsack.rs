//! Small-`gamma T` regime: expanding the objective to second order in
//! `gamma pi T` turns the allocation into a separable convex quadratic
//! knapsack `min sum k2_i pi_i^2 + k1_i pi_i` over `sum pi_i = B`,
//! `0 <= pi_i <= 1`.

use serde::{Deserialize, Serialize};

use crate::analytic::Ttl;
use crate::error::{Error, Result};
use crate::optimizer::{delay_objective, AllocationProblem, AllocationResult, Diagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnapsackMethod {
    /// Exact search over the breakpoints of the budget multiplier.
    Breakpoint,
    /// Projected gradient ascent on the dual of the box and budget constraints.
    DualGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackSolution {
    pub pis: Vec<f64>,
    /// Budget multiplier `epsilon`.
    pub multiplier: f64,
    /// Multipliers of `pi_i <= 1`.
    pub upper: Vec<f64>,
    /// Multipliers of `pi_i >= 0`.
    pub lower: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// `(k2, k1, constant)` of the quadratic surrogate for a common TTL `T`:
/// `k2_i = w_i C T gamma`, `k1_i = -w_i (C + T + C T gamma)`,
/// constant `sum_i w_i (C + T)`.
pub fn quadratic_coefficients(problem: &AllocationProblem) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    problem.validate()?;
    let t = match problem.ttl {
        Some(Ttl::Finite(t)) => t,
        Some(Ttl::Unbounded) => {
            return Err(Error::domain("quadratic surrogate needs a finite TTL"));
        }
        None => return Err(Error::domain("quadratic surrogate needs a TTL")),
    };
    let c = problem.custodian_cost;
    let g = problem.hop_rate;
    let w = problem.weights();
    let k2: Vec<f64> = w.iter().map(|w| w * c * t * g).collect();
    let k1: Vec<f64> = w.iter().map(|w| -w * (c + t + c * t * g)).collect();
    if let Some((index, value)) = k2.iter().copied().enumerate().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonConvex { index, value });
    }
    Ok((k2, k1, w.iter().map(|w| w * (c + t)).sum()))
}

pub fn quadratic_objective(k2: &[f64], k1: &[f64], constant: f64, pis: &[f64]) -> f64 {
    constant
        + k2.iter()
            .zip(k1)
            .zip(pis)
            .map(|((a, b), p)| a * p * p + b * p)
            .sum::<f64>()
}

fn response(k2: f64, k1: f64, eps: f64) -> f64 {
    ((-k1 - eps) / (2.0 * k2)).clamp(0.0, 1.0)
}

/// Largest violation of the KKT conditions at `pis`, with multipliers
/// reconstructed from the primal point.
///
/// Covers primal feasibility, stationarity of interior coordinates and the
/// sign of the box multipliers implied by coordinates at a bound.
/// Coordinates within `1e-7` of a bound are classified as at the bound.
pub fn kkt_residual(k2: &[f64], k1: &[f64], budget: f64, pis: &[f64]) -> f64 {
    const EDGE: f64 = 1e-7;
    let grads: Vec<f64> = k2.iter().zip(k1).zip(pis).map(|((a, b), p)| 2.0 * a * p + b).collect();
    let on_bound = |p: f64| p <= EDGE || p >= 1.0 - EDGE;
    let mut residual = (pis.iter().sum::<f64>() - budget).abs();
    for p in pis {
        residual = residual.max(-p).max(p - 1.0);
    }
    let interior: Vec<f64> = grads
        .iter()
        .zip(pis)
        .filter(|(_, p)| !on_bound(**p))
        .map(|(g, _)| -g)
        .collect();
    // eps must satisfy eps >= -grad at zero and eps <= -grad at one
    let lo = grads
        .iter()
        .zip(pis)
        .filter(|(_, p)| **p <= EDGE)
        .map(|(g, _)| -g)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = grads
        .iter()
        .zip(pis)
        .filter(|(_, p)| **p >= 1.0 - EDGE)
        .map(|(g, _)| -g)
        .fold(f64::INFINITY, f64::min);
    let eps = if interior.is_empty() {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    } else {
        interior.iter().sum::<f64>() / interior.len() as f64
    };
    for (g, p) in grads.iter().zip(pis) {
        let r = if *p <= EDGE {
            (-(g + eps)).max(0.0)
        } else if *p >= 1.0 - EDGE {
            (g + eps).max(0.0)
        } else {
            (g + eps).abs()
        };
        residual = residual.max(r);
    }
    residual
}

fn solve_breakpoint(k2: &[f64], k1: &[f64], budget: f64) -> KnapsackSolution {
    let total = |eps: f64| -> f64 { k2.iter().zip(k1).map(|(a, b)| response(*a, *b, eps)).sum() };
    // each coordinate is linear in eps between -k1-2k2 (value 1) and -k1 (value 0)
    let mut points: Vec<f64> = k2
        .iter()
        .zip(k1)
        .flat_map(|(a, b)| [-b - 2.0 * a, -b])
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut eps = points[0];
    let mut iterations = 0;
    if budget >= k2.len() as f64 {
        eps = points[0];
    } else if budget <= 0.0 {
        eps = *points.last().unwrap();
    } else {
        for pair in points.windows(2) {
            iterations += 1;
            let (s0, s1) = (total(pair[0]), total(pair[1]));
            if s0 >= budget && budget >= s1 {
                eps = if s0 == s1 {
                    pair[0]
                } else {
                    pair[0] + (s0 - budget) * (pair[1] - pair[0]) / (s0 - s1)
                };
                break;
            }
        }
    }
    let pis: Vec<f64> = k2.iter().zip(k1).map(|(a, b)| response(*a, *b, eps)).collect();
    let grads: Vec<f64> = k2.iter().zip(k1).zip(&pis).map(|((a, b), p)| 2.0 * a * p + b).collect();
    let upper = grads.iter().map(|g| (-(g + eps)).max(0.0)).collect();
    let lower = grads.iter().map(|g| (g + eps).max(0.0)).collect();
    let kkt = kkt_residual(k2, k1, budget, &pis);
    KnapsackSolution {
        pis,
        multiplier: eps,
        upper,
        lower,
        iterations,
        kkt_residual: kkt,
    }
}

/// Projected gradient ascent on the dual `g(nu, ups, eps)`, with primal
/// minimiser `pi_i = -(k1_i + nu_i - ups_i + eps) / (2 k2_i)`.
///
/// For fixed `eps` the box multipliers have a closed-form maximiser (the
/// projection of the unconstrained response onto `[0, 1]`), so each
/// iteration sets them exactly and takes an ascent step in `eps`. The step
/// doubles while the gradient keeps its sign and halves once it overshoots:
/// curvatures `2 k2_i` can differ by many orders of
/// magnitude, and a fixed `1/L` step then crawls across the flat stretches
/// of the dual.
fn solve_dual_gradient(k2: &[f64], k1: &[f64], budget: f64) -> KnapsackSolution {
    const TOL: f64 = 1e-13;
    const MAX_ITER: usize = 100_000;
    let n = k2.len();
    let q: Vec<f64> = k2.iter().map(|a| 2.0 * a).collect();
    let boxes = |eps: f64| -> (Vec<f64>, Vec<f64>) {
        let nu = (0..n).map(|i| (-(k1[i] + eps) - q[i]).max(0.0)).collect();
        let ups = (0..n).map(|i| (k1[i] + eps).max(0.0)).collect();
        (nu, ups)
    };
    // dual gradient `sum pi - B`, non-increasing in eps
    let slope = |eps: f64| -> f64 {
        let (nu, ups) = boxes(eps);
        (0..n).map(|i| -(k1[i] + nu[i] - ups[i] + eps) / q[i]).sum::<f64>() - budget
    };
    let mut step = 1.0 / q.iter().map(|v| 1.0 / v).sum::<f64>();
    let mut eps = 0.0;
    let mut grad = slope(eps);
    let mut iterations = 0;
    while iterations < MAX_ITER && grad.abs() > TOL * (n as f64) {
        iterations += 1;
        let trial = eps + step * grad;
        let g = slope(trial);
        if g * grad > 0.0 {
            // still climbing
            eps = trial;
            grad = g;
            step *= 2.0;
        } else if g.abs() < grad.abs() {
            // stepped over the maximum but got closer
            eps = trial;
            grad = g;
            step *= 0.5;
        } else {
            step *= 0.5;
            if step * grad.abs() <= f64::EPSILON * eps.abs().max(1.0) {
                break;
            }
        }
    }
    let (nu, ups) = boxes(eps);
    let pis: Vec<f64> = (0..n)
        .map(|i| (-(k1[i] + nu[i] - ups[i] + eps) / q[i]).clamp(0.0, 1.0))
        .collect();
    let kkt = kkt_residual(k2, k1, budget, &pis);
    KnapsackSolution {
        pis,
        multiplier: eps,
        upper: nu,
        lower: ups,
        iterations,
        kkt_residual: kkt,
    }
}

pub fn solve_quadratic_knapsack(
    k2: &[f64],
    k1: &[f64],
    budget: f64,
    method: KnapsackMethod,
) -> Result<KnapsackSolution> {
    if k2.is_empty() {
        return Err(Error::EmptyInput("no contents"));
    }
    if let Some((index, value)) = k2.iter().copied().enumerate().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonConvex { index, value });
    }
    crate::optimizer::validate_budget(budget, k2.len())?;
    Ok(match method {
        KnapsackMethod::Breakpoint => solve_breakpoint(k2, k1, budget),
        KnapsackMethod::DualGradient => solve_dual_gradient(k2, k1, budget),
    })
}

/// Allocation minimising the quadratic surrogate at the problem's common TTL.
pub fn small_gamma_t_allocation(
    problem: &AllocationProblem,
    method: KnapsackMethod,
) -> Result<AllocationResult> {
    let (k2, k1, constant) = quadratic_coefficients(problem)?;
    let sol = solve_quadratic_knapsack(&k2, &k1, problem.budget, method)?;
    let ttl = problem.ttl.expect("checked by quadratic_coefficients");
    let ttls = vec![ttl; problem.n_contents()];
    let gamma_t = problem.hop_rate * ttl.as_secs();
    let mut notes = vec![format!(
        "surrogate objective {:.9e}",
        quadratic_objective(&k2, &k1, constant, &sol.pis)
    )];
    if gamma_t > 0.5 {
        notes.push(format!("gamma*T = {gamma_t} is not small; surrogate may be loose"));
    }
    Ok(AllocationResult {
        objective: delay_objective(problem, &sol.pis, &ttls),
        diagnostics: Diagnostics {
            method: match method {
                KnapsackMethod::Breakpoint => "quadratic_breakpoint".into(),
                KnapsackMethod::DualGradient => "quadratic_dual_gradient".into(),
            },
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            clamp_events: sol.pis.iter().filter(|p| **p <= 0.0 || **p >= 1.0).count(),
            budget_multiplier: Some(sol.multiplier),
            notes,
        },
        pis: sol.pis,
        ttls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(lambdas: Vec<f64>, budget: f64) -> AllocationProblem {
        AllocationProblem::new(lambdas, budget, 10.0, 1.0).with_ttl(Ttl::Finite(0.01))
    }

    #[test]
    fn coefficients_match_definition() {
        let p = problem(vec![0.6, 0.4], 1.0);
        let (k2, k1, c0) = quadratic_coefficients(&p).unwrap();
        assert!((k2[0] - 0.6 * 10.0 * 0.01).abs() < 1e-15);
        assert!((k1[1] + 0.4 * (10.0 + 0.01 + 0.1)).abs() < 1e-15);
        assert!((c0 - 10.01).abs() < 1e-12);
    }

    #[test]
    fn zero_ttl_is_not_strictly_convex() {
        let p = AllocationProblem::new(vec![0.6, 0.4], 1.0, 10.0, 1.0).with_ttl(Ttl::Finite(0.0));
        assert!(matches!(quadratic_coefficients(&p), Err(Error::NonConvex { .. })));
    }

    #[test]
    fn symmetric_instance_splits_evenly() {
        let p = problem(vec![0.25; 4], 2.0);
        for m in [KnapsackMethod::Breakpoint, KnapsackMethod::DualGradient] {
            let r = small_gamma_t_allocation(&p, m).unwrap();
            for pi in &r.pis {
                assert!((pi - 0.5).abs() < 1e-8, "{m:?} {:?}", r.pis);
            }
        }
    }

    #[test]
    fn methods_agree_and_satisfy_kkt() {
        let p = problem(vec![0.5, 0.3, 0.15, 0.05], 1.5);
        let a = small_gamma_t_allocation(&p, KnapsackMethod::Breakpoint).unwrap();
        let b = small_gamma_t_allocation(&p, KnapsackMethod::DualGradient).unwrap();
        assert!(a.diagnostics.kkt_residual < 1e-10);
        assert!(b.diagnostics.kkt_residual < 1e-8, "{}", b.diagnostics.kkt_residual);
        for (x, y) in a.pis.iter().zip(&b.pis) {
            assert!((x - y).abs() < 1e-6);
        }
        assert!((a.pis.iter().sum::<f64>() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn popular_contents_saturate() {
        // tiny k2 makes the problem nearly linear: fill by popularity
        let p = AllocationProblem::new(vec![0.7, 0.2, 0.1], 1.5, 10.0, 1.0)
            .with_ttl(Ttl::Finite(1e-4));
        let r = small_gamma_t_allocation(&p, KnapsackMethod::Breakpoint).unwrap();
        assert!((r.pis[0] - 1.0).abs() < 1e-12);
        assert!(r.pis[1] > r.pis[2]);
    }

    #[test]
    fn kkt_residual_detects_suboptimal_points() {
        let p = problem(vec![0.5, 0.3, 0.2], 1.0);
        let (k2, k1, _) = quadratic_coefficients(&p).unwrap();
        let opt = solve_quadratic_knapsack(&k2, &k1, 1.0, KnapsackMethod::Breakpoint).unwrap();
        assert!(kkt_residual(&k2, &k1, 1.0, &opt.pis) < 1e-12);
        assert!(kkt_residual(&k2, &k1, 1.0, &[1.0 / 3.0; 3]) > 1e-3);
    }
}
