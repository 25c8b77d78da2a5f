use crate::analytic::Ttl;
use crate::error::Result;
use crate::optimizer::allocation::{popularity_fill, square_root_water_fill};
use crate::optimizer::{delay_objective, AllocationProblem, AllocationResult, Diagnostics};

/// Three-step heuristic for the joint placement and TTL problem:
///
/// 1. square-root occupancies (the `T = inf` optimum),
/// 2. bang-bang TTLs on those occupancies,
/// 3. the budget held by contents that ended with `T = 0` is re-spread over
///    them by popularity, which is optimal when no search takes place.
pub fn combined_heuristic(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    let (mut pis, clamp_events) = square_root_water_fill(&problem.lambdas, problem.budget)?;
    let threshold = problem.custodian_cost * problem.hop_rate;
    let searched: Vec<bool> = pis.iter().map(|p| p * threshold > 1.0).collect();
    let ttls: Vec<Ttl> = searched
        .iter()
        .map(|s| if *s { Ttl::Unbounded } else { Ttl::Finite(0.0) })
        .collect();

    let direct: Vec<usize> = (0..pis.len()).filter(|c| !searched[*c]).collect();
    let mut notes = vec![format!(
        "{} of {} contents searched without timeout",
        pis.len() - direct.len(),
        pis.len()
    )];
    if !direct.is_empty() {
        let residual: f64 = direct.iter().map(|c| pis[*c]).sum();
        let sub: Vec<f64> = direct.iter().map(|c| problem.lambdas[*c]).collect();
        let refill = popularity_fill(&sub, residual.min(sub.len() as f64))?;
        for (c, p) in direct.iter().zip(refill) {
            pis[*c] = p;
        }
        notes.push(format!("refilled budget {residual:.6} over direct-to-custodian contents"));
    }

    Ok(AllocationResult {
        objective: delay_objective(problem, &pis, &ttls),
        diagnostics: Diagnostics {
            method: "combined_heuristic".into(),
            iterations: 1,
            kkt_residual: (pis.iter().sum::<f64>() - problem.budget).abs(),
            clamp_events,
            budget_multiplier: None,
            notes,
        },
        pis,
        ttls,
    })
}
