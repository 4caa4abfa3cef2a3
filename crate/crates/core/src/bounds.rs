//! Exponential tail bounds for the deviation `|X_{n+1} − x*|`.
//!
//! The bound of [`exp_inequality_bound`] is assembled from
//!
//! ```text
//! P(|X_{n+1} − x*| ≥ ε) ≤ P(|X_{[δn]} − x*| > F)
//!                        + P(b|Σ_{i=[δn]}^n U_{i+1}/(i+1)| ≥ 2ε)
//!                        + Σ_{k=[δn]}^n P(b|Σ_{i=k+1}^n U_{i+1}/(i+1)| ≥ ε/4)
//! ```
//!
//! with every probability on the right replaced by the Azuma-Hoeffding tail
//! for the ranges `±bK_u/(i+1)`. `F` is the supremum of the deterministic
//! envelope, so the first term is exactly zero.

use crate::engine::envelope_bound;
use crate::error::{invalid, Error, Result};
use crate::model::ProblemSpec;

/// `min(1, 2 exp(−2t²/Σ(b_k − a_k)²))` for a martingale difference sequence
/// with `a_k ≤ Y_k ≤ b_k`.
///
/// Degenerate ranges (all `a_k = b_k`) give 0 for `t > 0`.
pub fn azuma_tail(t: f64, ranges: &[(f64, f64)]) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("{t} must be nonnegative")));
    }
    let mut width_sq = 0.0;
    for &(a, b) in ranges {
        if !(a <= b) {
            return Err(invalid("ranges", format!("lower {a} exceeds upper {b}")));
        }
        width_sq += (b - a) * (b - a);
    }
    Ok(azuma_from_width_sq(t, width_sq))
}

/// Azuma tail given `Σ(b_k − a_k)²` directly.
pub fn azuma_from_width_sq(t: f64, width_sq: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if width_sq == 0.0 {
        return 0.0;
    }
    (2.0 * (-2.0 * t * t / width_sq).exp()).min(1.0)
}

/// An admissible `δ` with the envelope supremum `F` it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaChoice {
    pub delta: f64,
    /// Strict upper limit `exp(−2(F+ε)/(bK₁ε))`.
    pub delta_max: f64,
    pub f_sup: f64,
    pub epsilon: f64,
    /// Smallest `n₀` such that the margin condition holds for every
    /// `n ∈ [n₀, probe_horizon]`.
    pub feasible_from: u64,
    /// Horizon the envelope and the margin scan were evaluated at.
    pub probe_horizon: u64,
}

/// `δ_max = exp(−2(F+ε)/(bK₁ε))`.
pub fn delta_limit(f_sup: f64, epsilon: f64, b: f64, k1: f64) -> f64 {
    (-2.0 * (f_sup + epsilon) / (b * k1 * epsilon)).exp()
}

/// `F − (bK₁ε/2) Σ_{i=[δn]}^n 1/(i+1) + ε`; the margin condition is that this is negative.
fn margin(f_sup: f64, epsilon: f64, b: f64, k1: f64, harmonic_tail: f64) -> f64 {
    f_sup - b * k1 * epsilon / 2.0 * harmonic_tail + epsilon
}

fn block_start(delta: f64, n: u64) -> u64 {
    (delta * n as f64).floor() as u64
}

/// Harmonic partial sums `H_m = Σ_{i=1}^m 1/i`, `m = 0..=len`.
fn harmonic_table(len: u64) -> Vec<f64> {
    let mut table = Vec::with_capacity(len as usize + 1);
    let mut h = 0.0;
    table.push(h);
    for i in 1..=len {
        h += 1.0 / i as f64;
        table.push(h);
    }
    table
}

/// Picks `δ = δ_max/2` and scans `n ≤ n_probe` for the margin condition
/// `F + b Σ_{i=[δn]}^n (−K₁ε/2)/(i+1) < −ε`.
pub fn select_delta(spec: &ProblemSpec, epsilon: f64, n_probe: u64) -> Result<DeltaChoice> {
    select_delta_with(spec, epsilon, n_probe, None)
}

/// As [`select_delta`], with an explicit `δ` that must lie in `(0, δ_max)`.
pub fn select_delta_with(
    spec: &ProblemSpec,
    epsilon: f64,
    n_probe: u64,
    delta: Option<f64>,
) -> Result<DeltaChoice> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid("epsilon", format!("{epsilon} must be positive")));
    }
    let (b, k1) = (spec.b(), spec.drift.k1());
    let f_sup = envelope_bound(spec, n_probe).sup;
    let delta_max = delta_limit(f_sup, epsilon, b, k1);
    let delta = match delta {
        None => 0.5 * delta_max,
        Some(d) if d > 0.0 && d < delta_max => d,
        Some(d) => {
            return Err(invalid(
                "delta",
                format!("{d} outside (0, {delta_max})"),
            ))
        }
    };

    let harmonic = harmonic_table(n_probe + 1);
    let holds = |n: u64| {
        let start = block_start(delta, n);
        // Σ_{i=start}^n 1/(i+1) = H_{n+1} − H_start
        margin(f_sup, epsilon, b, k1, harmonic[(n + 1) as usize] - harmonic[start as usize]) < 0.0
    };
    if !holds(n_probe) {
        return Err(Error::Infeasible(format!(
            "margin condition fails at n = {n_probe} for epsilon = {epsilon}, delta = {delta}"
        )));
    }
    let mut feasible_from = n_probe;
    while feasible_from > 0 && holds(feasible_from - 1) {
        feasible_from -= 1;
    }
    Ok(DeltaChoice {
        delta,
        delta_max,
        f_sup,
        epsilon,
        feasible_from,
        probe_horizon: n_probe,
    })
}

/// Value and contributions of the explicit exponential inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    /// `min(1, envelope_term + block_term + sum_term)`.
    pub value: f64,
    /// `P(|X_{[δn]} − x*| > F)`, zero because `F` dominates the envelope.
    pub envelope_term: f64,
    pub block_term: f64,
    pub sum_term: f64,
}

/// Explicit bound on `P(|X_{n+1} − x*| ≥ ε)` for `n ≥ choice.feasible_from`.
///
/// `Σ 1/(i+1)²` is summed exactly, so the result is never looser than the
/// closed form with the integral bound `1/k − 1/n`.
pub fn exp_inequality_bound(spec: &ProblemSpec, epsilon: f64, n: u64, choice: &DeltaChoice) -> Result<TailBound> {
    if epsilon != choice.epsilon {
        return Err(invalid(
            "epsilon",
            format!("delta was selected for epsilon = {}", choice.epsilon),
        ));
    }
    if n < choice.feasible_from {
        return Err(Error::Infeasible(format!(
            "n = {n} is below feasible_from = {}",
            choice.feasible_from
        )));
    }
    let start = block_start(choice.delta, n);
    if start > choice.probe_horizon + 1 {
        return Err(Error::Infeasible(format!(
            "[delta n] = {start} lies beyond the probed envelope horizon {}",
            choice.probe_horizon
        )));
    }
    let scale = 2.0 * spec.b() * spec.noise.ku();
    // suffix[k - start] = Σ_{i=k+1}^n (2bK_u/(i+1))², walked from k = n down to start
    let mut suffix = 0.0;
    let mut sum_term = 0.0;
    let mut k = n;
    loop {
        sum_term += azuma_from_width_sq(epsilon / 4.0, suffix);
        let w = scale / (k + 1) as f64;
        suffix += w * w;
        if k == start {
            break;
        }
        k -= 1;
    }
    // after the loop suffix = Σ_{i=start}^n widths²
    let block_term = azuma_from_width_sq(2.0 * epsilon, suffix);
    let envelope_term = 0.0;
    Ok(TailBound {
        value: (envelope_term + block_term + sum_term).min(1.0),
        envelope_term,
        block_term,
        sum_term,
    })
}

/// The closed form `2 exp(−Cε²δn/(1−δ)) (1 + 1/(1 − exp(−Cε²/(1−δ))))` for a
/// caller-chosen constant `C`.
pub fn closed_form_bound(c_const: f64, epsilon: f64, delta: f64, n: f64) -> f64 {
    let rate = c_const * epsilon * epsilon / (1.0 - delta);
    2.0 * (-rate * delta * n).exp() * (1.0 + 1.0 / (1.0 - (-rate).exp()))
}
