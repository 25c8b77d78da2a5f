use crate::error::{Error, Result};
use crate::optimizer::{validate_budget, validate_lambdas};

/// `pi_c = B sqrt(lambda_c) / sum_j sqrt(lambda_j)`, water-filled when some
/// `pi_c` would exceed 1: those are pinned to 1 and the remaining budget is
/// shared over the rest in the same proportions.
pub fn square_root_allocation(lambdas: &[f64], budget: f64) -> Result<Vec<f64>> {
    Ok(square_root_water_fill(lambdas, budget)?.0)
}

/// Returns the allocation and the number of coordinates clamped at 1.
pub(crate) fn square_root_water_fill(lambdas: &[f64], budget: f64) -> Result<(Vec<f64>, usize)> {
    validate_lambdas(lambdas)?;
    validate_budget(budget, lambdas.len())?;
    let roots: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    let mut pinned = vec![false; lambdas.len()];
    let mut pis = vec![0.0; lambdas.len()];
    loop {
        let n_pinned = pinned.iter().filter(|p| **p).count();
        let residual = budget - n_pinned as f64;
        let free_mass: f64 = roots
            .iter()
            .zip(&pinned)
            .filter(|(_, p)| !**p)
            .map(|(r, _)| r)
            .sum();
        let mut changed = false;
        for c in 0..lambdas.len() {
            if pinned[c] {
                pis[c] = 1.0;
            } else if free_mass > 0.0 {
                pis[c] = residual * roots[c] / free_mass;
                if pis[c] > 1.0 {
                    pinned[c] = true;
                    changed = true;
                }
            } else {
                pis[c] = 0.0;
            }
        }
        if !changed {
            return Ok((pis, n_pinned));
        }
    }
}

/// Indices ordered by decreasing popularity, ties broken by index.
fn popularity_order(lambdas: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]).then(a.cmp(&b)));
    order
}

/// Caches the `budget` most popular contents with probability one.
pub fn top_b_allocation(lambdas: &[f64], budget: usize) -> Result<Vec<f64>> {
    validate_lambdas(lambdas)?;
    if budget > lambdas.len() {
        return Err(Error::InfeasibleBudget {
            budget: budget as f64,
            contents: lambdas.len(),
        });
    }
    let mut pis = vec![0.0; lambdas.len()];
    for &c in popularity_order(lambdas).iter().take(budget) {
        pis[c] = 1.0;
    }
    Ok(pis)
}

/// Fractional version of [`top_b_allocation`]: fill by popularity, the last
/// content taking whatever is left of the budget.
pub fn popularity_fill(lambdas: &[f64], budget: f64) -> Result<Vec<f64>> {
    validate_lambdas(lambdas)?;
    validate_budget(budget, lambdas.len())?;
    let mut pis = vec![0.0; lambdas.len()];
    let mut left = budget;
    for c in popularity_order(lambdas) {
        if left <= 0.0 {
            break;
        }
        pis[c] = left.min(1.0);
        left -= pis[c];
    }
    Ok(pis)
}
