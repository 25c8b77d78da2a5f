//! Stationary behaviour of a single reinforced counter.
//!
//! Requests increment the counter at Poisson rate `lambda`, ticks decrement it
//! at exponential rate `mu`, so the counter is an M/M/1-like birth-death chain
//! with geometric stationary law `P(n) = (1 - rho) rho^n`.

use crate::analytic::ContentSpec;
use crate::error::{Error, Result};

fn stable_rho(spec: &ContentSpec) -> Result<f64> {
    spec.validate()?;
    let rho = spec.rho();
    if rho >= 1.0 {
        return Err(Error::domain(format!(
            "counter chain not positive recurrent: rho = {rho} >= 1"
        )));
    }
    Ok(rho)
}

/// Probability that the content is stored: `rho^(K+1)`.
pub fn occupancy_probability(spec: &ContentSpec) -> Result<f64> {
    let rho = stable_rho(spec)?;
    Ok(rho.powi(spec.k_threshold as i32 + 1))
}

/// Like [`occupancy_probability`] but returns 1 when `rho >= 1`: the counter
/// drifts to infinity and the content is never evicted.
pub fn saturated_occupancy(lambda: f64, alpha: f64, k_threshold: u32) -> f64 {
    let rho = lambda * alpha;
    if rho >= 1.0 {
        1.0
    } else {
        rho.max(0.0).powi(k_threshold as i32 + 1)
    }
}

/// Miss rate `lambda (1 - pi)`.
pub fn miss_rate(spec: &ContentSpec) -> Result<f64> {
    let pi = occupancy_probability(spec)?;
    Ok(spec.lambda * (1.0 - pi))
}

/// Rate at which the content is brought into the cache: the up-crossing rate
/// of the counter from `K` to `K+1`, `lambda rho^K (1 - rho)`.
pub fn insertion_rate(spec: &ContentSpec) -> Result<f64> {
    let rho = stable_rho(spec)?;
    Ok(spec.lambda * rho.powi(spec.k_threshold as i32) * (1.0 - rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lambda: f64, alpha: f64, k: u32) -> ContentSpec {
        ContentSpec::new(lambda, k, alpha).unwrap()
    }

    #[test]
    fn occupancy_examples() {
        assert!((occupancy_probability(&spec(0.5, 1.0, 0)).unwrap() - 0.5).abs() < 1e-15);
        assert!((occupancy_probability(&spec(0.5, 1.0, 1)).unwrap() - 0.25).abs() < 1e-15);
        let pi = occupancy_probability(&spec(0.8, 0.8875, 0)).unwrap();
        assert!((pi - 0.71).abs() < 1e-12);
        let back = ContentSpec::for_target_occupancy(0.8, 0, 0.71).unwrap();
        assert!((back.alpha - 0.8875).abs() < 1e-12);
    }

    #[test]
    fn unstable_chain_is_rejected() {
        assert!(matches!(
            occupancy_probability(&spec(1.0, 1.0, 0)),
            Err(Error::Domain(_))
        ));
        assert!(insertion_rate(&spec(2.0, 1.0, 3)).is_err());
        assert_eq!(saturated_occupancy(2.0, 1.0, 3), 1.0);
        assert_eq!(saturated_occupancy(0.5, 1.0, 1), 0.25);
    }

    #[test]
    fn miss_rate_examples() {
        assert!((miss_rate(&spec(0.5, 1.0, 0)).unwrap() - 0.25).abs() < 1e-15);
        assert!((miss_rate(&spec(0.8, 1.0, 0)).unwrap() - 0.16).abs() < 1e-15);
        // rho -> 1 drives the miss rate to zero
        let near = miss_rate(&spec(1.0, 1.0 - 1e-9, 0)).unwrap();
        assert!(near < 1e-8);
    }

    #[test]
    fn insertion_examples() {
        assert!((insertion_rate(&spec(0.5, 1.0, 0)).unwrap() - 0.25).abs() < 1e-15);
        assert!((insertion_rate(&spec(0.5, 1.0, 2)).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn insertion_decreases_in_k_at_fixed_occupancy() {
        let mut last = f64::INFINITY;
        for k in 0..3 {
            let s = ContentSpec::for_target_occupancy(0.5, k, 0.25).unwrap();
            assert!((occupancy_probability(&s).unwrap() - 0.25).abs() < 1e-12);
            let psi = insertion_rate(&s).unwrap();
            // psi = pi (mu - lambda)
            assert!((psi - 0.25 * (s.mu() - 0.5)).abs() < 1e-12);
            assert!(psi < last);
            last = psi;
        }
    }
}
