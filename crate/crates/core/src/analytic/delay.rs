//! Search delay inside a domain, custodian cost and end-to-end delay.

use crate::analytic::occupancy::saturated_occupancy;
use crate::analytic::search::{
    check_probability, ln_poisson_pmf, replica_count_pmf, stateful_miss_prob_exact,
    stateful_miss_prob_large_n, stateless_miss_prob,
};
use crate::analytic::{ContentSpec, CostModel, DomainConfig, SearchVariant, TierState, Topology, Ttl};
use crate::error::{Error, Result};

/// `(1 - e^{-x}) / x`, with its Taylor expansion near the removable
/// singularity at zero.
pub fn relative_expm1(x: f64) -> f64 {
    if x < 1e-6 {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Probability of failing to find the content within the domain's TTL.
pub fn miss_prob_at(variant: SearchVariant, dom: &DomainConfig, pi: f64, ttl: Ttl) -> Result<f64> {
    let t = ttl.as_secs();
    match variant {
        SearchVariant::Stateless => stateless_miss_prob(t, dom, pi),
        SearchVariant::StatefulExact => stateful_miss_prob_exact(t, dom, pi),
        SearchVariant::StatefulLargeN => stateful_miss_prob_large_n(t, dom.hop_rate, pi),
    }
}

/// `E[D] = int_0^T R(t) dt` for the domain's TTL.
pub fn expected_domain_delay(variant: SearchVariant, dom: &DomainConfig, pi: f64) -> Result<f64> {
    expected_search_time(variant, dom, pi, dom.ttl)
}

/// Same as [`expected_domain_delay`] with an explicit TTL.
pub fn expected_search_time(
    variant: SearchVariant,
    dom: &DomainConfig,
    pi: f64,
    ttl: Ttl,
) -> Result<f64> {
    check_probability("pi", pi)?;
    dom.validate()?;
    match variant {
        SearchVariant::Stateless => stateless_delay(dom, pi, ttl),
        SearchVariant::StatefulExact => stateful_exact_delay(dom, pi, ttl),
        SearchVariant::StatefulLargeN => Ok(large_n_delay(dom.hop_rate, pi, ttl)?),
    }
}

fn stateless_delay(dom: &DomainConfig, pi: f64, ttl: Ttl) -> Result<f64> {
    let n = dom.n_caches;
    let q = 1.0 - pi;
    let t = match ttl {
        Ttl::Finite(t) => t,
        Ttl::Unbounded if pi >= 1.0 => return Ok(0.0),
        Ttl::Unbounded => {
            return Err(Error::domain(
                "stateless search delay diverges for unbounded ttl",
            ))
        }
    };
    if n == 1 {
        return Ok(q * t);
    }
    let others = (n - 1) as f64;
    // l = 0: nothing to find, the walk runs for the full TTL
    let mut total = q.powi(n as i32) * t;
    for l in 1..n {
        let w = dom.hop_rate * l as f64 / others;
        let mass = replica_count_pmf(n, pi, l)?;
        total += q * mass * t * relative_expm1(w * t);
    }
    Ok(total)
}

/// `sum_{k > n} (k - n) P(k)` for `X ~ Poisson(mean)`.
fn poisson_excess(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    if n as f64 > mean {
        let ln_first = ln_poisson_pmf(n + 1, mean);
        if ln_first < -745.0 {
            return 0.0;
        }
        let mut p = ln_first.exp();
        let mut k = n + 1;
        let mut sum = 0.0;
        loop {
            let term = (k - n) as f64 * p;
            sum += term;
            if term <= 1e-16 * sum || p == 0.0 {
                break;
            }
            k += 1;
            p *= mean / k as f64;
        }
        sum
    } else {
        // E[(X-n)^+] = E[X] - n + E[(n-X)^+]
        let head: f64 = (0..n)
            .map(|k| (n - k) as f64 * ln_poisson_pmf(k, mean).exp())
            .sum();
        mean - n as f64 + head
    }
}

/// Integrates the exact stateful survival term by term using
/// `int_0^T P(Pois(gamma t) = n) dt = P(Pois(gamma T) >= n + 1) / gamma`.
fn stateful_exact_delay(dom: &DomainConfig, pi: f64, ttl: Ttl) -> Result<f64> {
    let n = dom.n_caches;
    let q = 1.0 - pi;
    let gamma = dom.hop_rate;
    let t = match ttl {
        Ttl::Finite(t) => t,
        Ttl::Unbounded if pi >= 1.0 => return Ok(0.0),
        Ttl::Unbounded => {
            return Err(Error::domain(
                "finite-N stateful delay diverges for unbounded ttl",
            ))
        }
    };
    if t == 0.0 {
        return Ok(0.0);
    }
    let mean = gamma * t;
    let mut cdf = 0.0;
    let mut head = 0.0;
    let mut q_pow = 1.0;
    for k in 0..n {
        cdf += ln_poisson_pmf(k, mean).exp();
        let survival = (1.0 - cdf).max(0.0);
        head += q_pow * survival;
        q_pow *= q;
    }
    let tail = q.powi(n as i32 - 1) * poisson_excess(n, mean);
    Ok(q * (head + tail) / gamma)
}

/// `(1 - pi)(1 - e^{-gamma pi T}) / (pi gamma)`.
pub fn large_n_delay(gamma: f64, pi: f64, ttl: Ttl) -> Result<f64> {
    check_probability("pi", pi)?;
    let q = 1.0 - pi;
    match ttl {
        Ttl::Finite(t) => Ok(q * t * relative_expm1(gamma * pi * t)),
        Ttl::Unbounded if pi > 0.0 => Ok(q / (pi * gamma)),
        Ttl::Unbounded => Err(Error::domain(
            "content never cached and search unbounded: delay diverges",
        )),
    }
}

/// Load reaching the custodian: `Lambda * prod_i R_i(T_i)`.
pub fn publisher_load(exo_rate: f64, per_tier_miss: &[f64]) -> f64 {
    exo_rate * per_tier_miss.iter().product::<f64>()
}

/// Mean custodian service delay at the given load.
pub fn custodian_cost(model: &CostModel, load: f64) -> Result<f64> {
    model.validate()?;
    match *model {
        CostModel::Fixed { cost } => Ok(cost),
        CostModel::Mm1 { capacity } => {
            if load >= capacity {
                Err(Error::Overload { load, capacity })
            } else {
                Ok(1.0 / (capacity - load))
            }
        }
        CostModel::Exponential => Ok(load.exp()),
    }
}

/// End-to-end delay for one content given resolved tier states, custodian side
/// first:
///
/// `E[D] = sum_i E[D_i] prod_{j>i} R_j + C(Lambda_hat) prod_j R_j`.
pub fn expected_content_delay_from_tiers(
    tiers: &[TierState],
    variant: SearchVariant,
    cost: &CostModel,
    exo_rate: f64,
) -> Result<f64> {
    if tiers.is_empty() {
        return custodian_cost(cost, exo_rate);
    }
    let mut total = 0.0;
    // fraction of requests reaching the tier currently being visited
    let mut reach = 1.0;
    let mut misses = Vec::with_capacity(tiers.len());
    for state in tiers.iter().rev() {
        if reach > 0.0 {
            let d = expected_search_time(variant, &state.domain, state.pi, state.ttl)?;
            total += reach * d;
        }
        let r = miss_prob_at(variant, &state.domain, state.pi, state.ttl)?;
        misses.push(r);
        reach *= r;
    }
    if reach > 0.0 {
        let load = publisher_load(exo_rate, &misses);
        total += reach * custodian_cost(cost, load)?;
    }
    Ok(total)
}

/// Resolves occupancy and TTL of `content` at every tier of `topology`.
///
/// A counter with `rho >= 1` never drains, so such a content counts as
/// permanently stored (`pi = 1`).
pub fn tier_states(topology: &Topology, content: usize) -> Result<Vec<TierState>> {
    if content >= topology.n_contents() {
        return Err(Error::Range {
            name: "content",
            value: content,
            max: topology.n_contents().saturating_sub(1),
        });
    }
    topology
        .tiers
        .iter()
        .map(|tier| {
            Ok(TierState {
                domain: tier.domain,
                pi: {
                    let spec = &tier.contents[content];
                    saturated_occupancy(spec.lambda, spec.alpha, spec.k_threshold)
                },
                ttl: tier.ttl_for(content),
            })
        })
        .collect()
}

/// `E[D_c]` for one content of a multi-tier topology.
pub fn expected_content_delay(
    topology: &Topology,
    variant: SearchVariant,
    cost: &CostModel,
    content: usize,
) -> Result<f64> {
    topology.validate()?;
    let states = tier_states(topology, content)?;
    expected_content_delay_from_tiers(&states, variant, cost, topology.exogenous_rates[content])
}

/// Popularity-weighted mean `sum_c (lambda_c / lambda) E[D_c]`.
pub fn aggregate_delay(specs: &[ContentSpec], delays: &[f64]) -> Result<f64> {
    if specs.is_empty() {
        return Err(Error::EmptyInput("no contents"));
    }
    if specs.len() != delays.len() {
        return Err(Error::domain(format!(
            "{} contents but {} delays",
            specs.len(),
            delays.len()
        )));
    }
    let total: f64 = specs.iter().map(|s| s.lambda).sum();
    if !(total > 0.0) {
        return Err(Error::EmptyInput("total request rate is zero"));
    }
    Ok(specs
        .iter()
        .zip(delays)
        .map(|(s, d)| s.lambda / total * d)
        .sum())
}
