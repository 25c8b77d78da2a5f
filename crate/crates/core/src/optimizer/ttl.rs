use crate::analytic::Ttl;
use crate::optimizer::content_objective;

/// Per-miss cost of searching with timeout `ttl`:
/// `(1 - e^{-gamma pi T})/(gamma pi) + C e^{-gamma pi T}`.
pub fn search_cost(pi: f64, ttl: Ttl, custodian_cost: f64, hop_rate: f64) -> f64 {
    if pi >= 1.0 {
        // the miss factor is zero; evaluate the limit pi -> 1 directly
        return match ttl {
            Ttl::Finite(t) => {
                let x = hop_rate * t;
                crate::analytic::relative_expm1(x) * t + custodian_cost * (-x).exp()
            }
            Ttl::Unbounded => 1.0 / hop_rate,
        };
    }
    content_objective(pi, ttl, custodian_cost, hop_rate) / (1.0 - pi)
}

/// Optimal TTL for fixed occupancies: search forever when
/// `pi_c > 1/(C gamma)`, otherwise go straight to the custodian.
///
/// `search_cost` is monotone in `T` with the sign of `1 - C gamma pi`, so the
/// optimum is always an endpoint. At equality every `T` is optimal and `0` is
/// returned.
pub fn bang_bang_ttl(pis: &[f64], custodian_cost: f64, hop_rate: f64) -> Vec<Ttl> {
    pis.iter()
        .map(|&pi| {
            if pi * custodian_cost * hop_rate > 1.0 {
                Ttl::Unbounded
            } else {
                Ttl::Finite(0.0)
            }
        })
        .collect()
}
