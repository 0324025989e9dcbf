//! Exact and high-precision probabilities behind the protocol's analysis.
//!
//! Independent of the simulator: everything here is closed-form or a binomial
//! tail. Tails with at most [`DIRECT_LIMIT`] trials are summed directly in log
//! space; larger ones go through the regularized incomplete beta.

pub mod special;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use special::{binomial_upper_tail_beta, binomial_upper_tail_direct, dbinom_log};

/// Largest trial count handled by direct summation.
pub const DIRECT_LIMIT: u64 = 1_000_000;

/// The `2^22` scale of the majority sample count in the analysis.
pub use crate::params::ANALYSIS_R_SCALE;

fn check_unit(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name}={v} outside [{lo}, {hi}]")))
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 && epsilon <= 0.5 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "epsilon={epsilon} outside (0, 1/2]"
        )))
    }
}

fn check_odd(gamma: u64) -> Result<()> {
    if gamma % 2 == 1 {
        Ok(())
    } else {
        Err(Error::Argument(format!("gamma={gamma} must be odd")))
    }
}

/// Probability that a uniform sample from a population with bias `delta`,
/// passed through the channel, reads correct: `1/2 + 2 epsilon delta`.
pub fn sample_correct_prob(delta: f64, epsilon: f64) -> Result<f64> {
    check_unit("delta", delta, 0.0, 0.5)?;
    check_epsilon(epsilon)?;
    Ok(0.5 + 2.0 * epsilon * delta)
}

/// `P(Bin(n, p) >= k)`, choosing the method by size.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> Result<f64> {
    check_unit("p", p, 0.0, 1.0)?;
    Ok(if n <= DIRECT_LIMIT {
        binomial_upper_tail_direct(n, k, p)
    } else {
        binomial_upper_tail_beta(n, k, p)
    })
}

/// Probability that the majority of `gamma` independent samples, each correct
/// with probability `q`, is correct.
pub fn majority_correct_prob(gamma: u64, q: f64) -> Result<f64> {
    if gamma <= DIRECT_LIMIT {
        majority_correct_prob_direct(gamma, q)
    } else {
        majority_correct_prob_beta(gamma, q)
    }
}

fn majority_domain(gamma: u64, q: f64) -> Result<Option<f64>> {
    check_odd(gamma)?;
    check_unit("q", q, 0.5, 1.0)?;
    Ok(if q == 0.5 {
        Some(0.5)
    } else if q == 1.0 {
        Some(1.0)
    } else {
        None
    })
}

pub fn majority_correct_prob_direct(gamma: u64, q: f64) -> Result<f64> {
    if let Some(v) = majority_domain(gamma, q)? {
        return Ok(v);
    }
    Ok(binomial_upper_tail_direct(gamma, gamma / 2 + 1, q))
}

pub fn majority_correct_prob_beta(gamma: u64, q: f64) -> Result<f64> {
    if let Some(v) = majority_domain(gamma, q)? {
        return Ok(v);
    }
    Ok(binomial_upper_tail_beta(gamma, gamma / 2 + 1, q))
}

/// `1 - majority_correct_prob`, computed as its own tail so small values keep
/// their relative accuracy.
pub fn majority_wrong_prob(gamma: u64, q: f64) -> Result<f64> {
    if let Some(v) = majority_domain(gamma, q)? {
        return Ok(1.0 - v);
    }
    binomial_upper_tail(gamma, gamma / 2 + 1, 1.0 - q)
}

/// Which of the three bias ranges of the analysis `delta` falls in. Diagnostic only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaRegime {
    /// `delta <= epsilon / 2^20`
    Small,
    /// `delta < 2^-12`
    Medium,
    Large,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MajorityBoundCheck {
    pub epsilon: f64,
    pub delta: f64,
    pub r_scale: f64,
    pub r: u64,
    pub gamma: u64,
    pub q: f64,
    pub probability: f64,
    pub bound: f64,
    pub holds: bool,
    pub regime: DeltaRegime,
}

/// Numerical slack allowed when comparing a tail against its bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Does the majority of `gamma = 2r+1` samples, `r = ceil(r_scale/eps^2)`, beat
/// `min(1/2 + 4 delta, 1/2 + 1/100)`?
pub fn majority_bound_check(epsilon: f64, delta: f64, r_scale: f64) -> Result<MajorityBoundCheck> {
    check_epsilon(epsilon)?;
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::Argument(format!("delta={delta} outside (0, 1/2]")));
    }
    if !(r_scale.is_finite() && r_scale > 0.0) {
        return Err(Error::Argument(format!(
            "rScale={r_scale} must be positive"
        )));
    }
    let r = crate::params::ceil_tol(r_scale / (epsilon * epsilon));
    let gamma = 2 * r + 1;
    let q = sample_correct_prob(delta, epsilon)?;
    let probability = majority_correct_prob(gamma, q)?;
    let bound = (0.5 + 4.0 * delta).min(0.51);
    let regime = if delta <= epsilon / 1_048_576.0 {
        DeltaRegime::Small
    } else if delta < 1.0 / 4096.0 {
        DeltaRegime::Medium
    } else {
        DeltaRegime::Large
    };
    Ok(MajorityBoundCheck {
        epsilon,
        delta,
        r_scale,
        r,
        gamma,
        q,
        probability,
        bound,
        holds: probability >= bound - BOUND_SLACK,
        regime,
    })
}

fn check_b(b: f64) -> Result<()> {
    check_unit("b", b, 0.0, 0.5)
}

/// Per-sample correctness after the two-step process: a fair coin, then a
/// wrong outcome is corrected with probability `2b`. Equals `1/2 + b`.
pub fn two_step_correct_prob(b: f64) -> Result<f64> {
    check_b(b)?;
    Ok(0.5 * 1.0 + 0.5 * (2.0 * b))
}

/// Law of the correct count after the two-step process on `gamma` samples,
/// built by convolving the coin stage with the correction stage.
pub fn two_step_count_distribution(gamma: u64, b: f64) -> Result<Vec<f64>> {
    check_b(b)?;
    let g = gamma as usize;
    let mut dist = vec![0.0; g + 1];
    for c in 0..=g {
        let p_coin = dbinom_log(c as f64, gamma as f64, 0.5).exp();
        let wrong = g - c;
        for x in 0..=wrong {
            dist[c + x] += p_coin * dbinom_log(x as f64, wrong as f64, 2.0 * b).exp();
        }
    }
    Ok(dist)
}

/// One draw of the two-step correct count.
pub fn two_step_sample<R: Rng + ?Sized>(gamma: u64, b: f64, rng: &mut R) -> Result<u64> {
    check_b(b)?;
    let mut correct = 0;
    for _ in 0..gamma {
        if rng.gen_bool(0.5) || rng.gen_bool(2.0 * b) {
            correct += 1;
        }
    }
    Ok(correct)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StirlingCheck {
    pub r: u64,
    /// `min_i P(r+i) * 10 sqrt(r)` over `1 <= i <= floor(sqrt r)`; the bound needs `> 1`.
    pub min_ratio: f64,
    pub holds: bool,
}

/// `P(r+i) = 2^-(2r+1) C(2r+1, r+i)`.
pub fn central_binomial_prob(r: u64, i: u64) -> f64 {
    dbinom_log((r + i) as f64, (2 * r + 1) as f64, 0.5).exp()
}

/// Checks `P(r+i) > 1/(10 sqrt r)` for every `1 <= i <= floor(sqrt r)`.
pub fn stirling_check(r: u64) -> Result<StirlingCheck> {
    if r == 0 {
        return Err(Error::Argument("r must be at least 1".into()));
    }
    let scale = 10.0 * (r as f64).sqrt();
    let imax = (r as f64).sqrt().floor() as u64;
    // P(r+i) decreases in i, so the last term is the smallest; scan anyway.
    let min_ratio = (1..=imax)
        .map(|i| central_binomial_prob(r, i) * scale)
        .fold(f64::INFINITY, f64::min);
    Ok(StirlingCheck {
        r,
        min_ratio,
        holds: min_ratio > 1.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlipCase1 {
    /// `(r+1) 2b (1-2b)^r`
    pub value: f64,
    /// `r b / e^4`
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlipCase2 {
    pub x: u64,
    /// `P(Bin(r+x, 2b) >= x)`
    pub probability: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlipCountCheck {
    pub case1: Option<FlipCase1>,
    pub case2: Option<FlipCase2>,
}

/// Corrective-flip counts: exactly one flip when `r <= 2/b`, at least
/// `ceil(rb)` flips when `rb > 2`.
pub fn flip_count_bound_check(r: u64, b: f64) -> Result<FlipCountCheck> {
    check_b(b)?;
    let rf = r as f64;
    let case1 = (b == 0.0 || rf <= 2.0 / b).then(|| {
        let value = (rf + 1.0) * 2.0 * b * (1.0 - 2.0 * b).powf(rf);
        let bound = rf * b / 4f64.exp();
        FlipCase1 {
            value,
            bound,
            holds: value >= bound,
        }
    });
    let case2 = if rf * b > 2.0 {
        let x = crate::params::ceil_tol(rf * b);
        let probability = binomial_upper_tail(r + x, x, 2.0 * b)?;
        Some(FlipCase2 {
            x,
            probability,
            holds: probability >= 1.0 / 3.0,
        })
    } else {
        None
    };
    Ok(FlipCountCheck { case1, case2 })
}

/// Expected correct fraction after one stage-II phase: successful agents
/// take a `gamma`-sample majority, the rest keep their opinion.
pub fn boost_map(delta: f64, epsilon: f64, gamma: u64, success_rate: f64) -> Result<f64> {
    check_unit("successRate", success_rate, 0.0, 1.0)?;
    let q = sample_correct_prob(delta, epsilon)?;
    let maj = majority_correct_prob(gamma, q)?;
    Ok(success_rate * maj + (1.0 - success_rate) * (0.5 + delta))
}

/// Smallest odd `m` whose `m`-sample majority over the raw channel errs with
/// probability at most `n^-exponent`.
pub fn direct_sample_requirement(epsilon: f64, n: u64, exponent: f64) -> Result<u64> {
    check_epsilon(epsilon)?;
    if n < 2 {
        return Err(Error::Argument(format!("n={n} must be at least 2")));
    }
    if !(exponent.is_finite() && exponent > 0.0) {
        return Err(Error::Argument(format!(
            "exponent={exponent} must be positive"
        )));
    }
    let target = (n as f64).powf(-exponent);
    let q = 0.5 + epsilon;
    let ok = |m: u64| majority_wrong_prob(m, q).map(|w| w <= target);
    // Search over i with m = 2i + 1.
    let mut hi = 0u64;
    while !ok(2 * hi + 1)? {
        hi = 2 * hi + 1;
        if hi > 1 << 40 {
            return Err(Error::Argument("sample requirement does not fit".into()));
        }
    }
    let mut lo = 0u64;
    if ok(1)? {
        return Ok(1);
    }
    // Invariant: ok(2*hi+1), !ok(2*lo+1).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(2 * mid + 1)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(2 * hi + 1)
}

#[cfg(test)]
mod tests;
