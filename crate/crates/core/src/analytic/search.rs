//! Probability that a random walk has not found the content by time `t`.

use statrs::function::gamma::ln_gamma;

use crate::analytic::DomainConfig;
use crate::error::{Error, Result};

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {p} is not a probability")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("time must be >= 0, got {t}")))
    }
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `C(n, k)`; multiplicative form for `n <= 64`, log-space above.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    if n > 64 {
        return ln_binomial(n, k).exp();
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c as f64
}

/// `ln P(X = n)` for `X ~ Poisson(mean)`.
pub fn ln_poisson_pmf(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - mean - ln_gamma(n as f64 + 1.0)
}

/// Distribution of the number of other caches holding the content:
/// `Binomial(N - 1, pi)` evaluated at `l`.
pub fn replica_count_pmf(n_caches: usize, pi: f64, l: usize) -> Result<f64> {
    check_probability("pi", pi)?;
    if n_caches == 0 {
        return Err(Error::domain("a domain needs at least one cache"));
    }
    let trials = n_caches - 1;
    if l > trials {
        return Err(Error::Range {
            name: "l",
            value: l,
            max: trials,
        });
    }
    let (succ, fail) = (l as i32, (trials - l) as i32);
    if trials > 64 {
        if pi == 0.0 || pi == 1.0 {
            let hit = (pi == 0.0 && l == 0) || (pi == 1.0 && l == trials);
            return Ok(if hit { 1.0 } else { 0.0 });
        }
        let ln = ln_binomial(trials, l) + succ as f64 * pi.ln() + fail as f64 * (1.0 - pi).ln();
        return Ok(ln.exp());
    }
    Ok(binomial(trials, l) * pi.powi(succ) * (1.0 - pi).powi(fail))
}

/// Stateless walk, placement frozen during the walk:
/// `R(t) = (pi e^{-gamma t/(N-1)} + 1 - pi)^{N-1} (1 - pi)`.
///
/// `t = f64::INFINITY` gives the plateau `(1 - pi)^N`.
pub fn stateless_miss_prob(t: f64, dom: &DomainConfig, pi: f64) -> Result<f64> {
    check_time(t)?;
    check_probability("pi", pi)?;
    dom.validate()?;
    let n = dom.n_caches;
    if n == 1 {
        return Ok(1.0 - pi);
    }
    let others = (n - 1) as f64;
    let decay = (-dom.hop_rate * t / others).exp();
    Ok((pi * decay + 1.0 - pi).powi((n - 1) as i32) * (1.0 - pi))
}

enum PoissonSide {
    /// Tail sum from `N` upward converges quickly.
    Tail,
    /// `N` below the mean: use the finite head instead.
    Head,
}

fn side(n_caches: usize, mean: f64) -> PoissonSide {
    if n_caches as f64 > mean {
        PoissonSide::Tail
    } else {
        PoissonSide::Head
    }
}

/// Tail series `sum_{n >= N} P(n) (1 - q^{n+1-N})`, truncated once a term
/// falls below `1e-15` of the partial sum past the Poisson mode.
fn tail_series(n_caches: usize, mean: f64, q: f64) -> f64 {
    let ln_first = ln_poisson_pmf(n_caches, mean);
    if ln_first < -745.0 {
        return 0.0;
    }
    let mut p = ln_first.exp();
    let mut q_pow = q;
    let mut sum = 0.0;
    let mut n = n_caches;
    loop {
        let term = p * (1.0 - q_pow);
        sum += term;
        if (n as f64 > mean && term <= 1e-15 * sum) || p == 0.0 {
            break;
        }
        n += 1;
        p *= mean / n as f64;
        q_pow *= q;
    }
    sum
}

/// Returns `(sum_{n<N} P(n) q^n, sum_{n<N} P(n))`.
fn head_sums(n_caches: usize, mean: f64, q: f64) -> (f64, f64) {
    let ln_q = q.ln();
    let mut weighted = 0.0;
    let mut mass = 0.0;
    for n in 0..n_caches {
        let lp = ln_poisson_pmf(n, mean);
        mass += lp.exp();
        if q > 0.0 {
            weighted += (lp + n as f64 * ln_q).exp();
        } else if n == 0 {
            weighted += lp.exp();
        }
    }
    (weighted, mass.min(1.0))
}

/// Finite-`N` correction `g(N)` to the stateful miss probability: the part of
/// the Poisson hop-count tail beyond the point where every cache was visited.
pub fn stateful_tail_correction(t: f64, dom: &DomainConfig, pi: f64) -> Result<f64> {
    check_time(t)?;
    check_probability("pi", pi)?;
    dom.validate()?;
    let q = 1.0 - pi;
    let mean = dom.hop_rate * t;
    let n = dom.n_caches;
    if mean == 0.0 || pi == 0.0 {
        return Ok(0.0);
    }
    if t.is_infinite() {
        return Ok(q.powi(n as i32 - 1));
    }
    let g = match side(n, mean) {
        PoissonSide::Tail => q.powi(n as i32 - 1) * tail_series(n, mean, q),
        PoissonSide::Head => {
            let (weighted, mass) = head_sums(n, mean, q);
            weighted + q.powi(n as i32 - 1) * (1.0 - mass) - (-mean * pi).exp()
        }
    };
    Ok(g.max(0.0))
}

/// Stateful (no-revisit) walk, exact for finite `N`:
/// `R~(t) = (1 - pi) (e^{-gamma pi t} + g(N))`.
pub fn stateful_miss_prob_exact(t: f64, dom: &DomainConfig, pi: f64) -> Result<f64> {
    check_time(t)?;
    check_probability("pi", pi)?;
    dom.validate()?;
    let q = 1.0 - pi;
    let mean = dom.hop_rate * t;
    let n = dom.n_caches;
    if t.is_infinite() {
        return Ok(q.powi(n as i32));
    }
    if mean == 0.0 {
        return Ok(q);
    }
    let inner = match side(n, mean) {
        PoissonSide::Tail => (-mean * pi).exp() + q.powi(n as i32 - 1) * tail_series(n, mean, q),
        PoissonSide::Head => {
            let (weighted, mass) = head_sums(n, mean, q);
            weighted + q.powi(n as i32 - 1) * (1.0 - mass)
        }
    };
    Ok((q * inner).clamp(0.0, q))
}

/// Large-`N` stateful approximation `(1 - pi) e^{-gamma pi t}`.
pub fn stateful_miss_prob_large_n(t: f64, gamma: f64, pi: f64) -> Result<f64> {
    check_time(t)?;
    check_probability("pi", pi)?;
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("hop rate must be positive, got {gamma}")));
    }
    if t.is_infinite() {
        return Ok(if pi > 0.0 { 0.0 } else { 1.0 });
    }
    Ok((1.0 - pi) * (-gamma * pi * t).exp())
}

/// Normal-approximation criterion for the large-`N` form: `N > gamma t + 4 sqrt(gamma t)`.
pub fn large_n_valid(n_caches: usize, gamma: f64, t: f64) -> bool {
    let m = gamma * t;
    n_caches as f64 > m + 4.0 * m.sqrt()
}

/// Walk whose `j` targets are drawn without replacement up front.
/// Conditioned on `j` visits the miss probability is `(1 - pi)^{j+1}`.
pub fn stateful_preselected_miss_prob(j: usize, n_caches: usize, pi: f64) -> Result<f64> {
    check_probability("pi", pi)?;
    if n_caches == 0 {
        return Err(Error::domain("a domain needs at least one cache"));
    }
    if j > n_caches - 1 {
        return Err(Error::Range {
            name: "j",
            value: j,
            max: n_caches - 1,
        });
    }
    Ok((1.0 - pi).powi(j as i32 + 1))
}
