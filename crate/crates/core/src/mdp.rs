//! Moderate-deviation experiments.
//!
//! For a speed `b_n → ∞` with `b_n/√n → 0` and a level `r > 0`, the rate
//!
//! ```text
//! (1/b_n²) log P(h_n |statistic| > r b_n)  →  −r²/(2σ²)
//! ```
//!
//! for both the weighted martingale sum and the recursion deviation
//! `X_{n+1} − x*`. This module estimates the left side by plain Monte Carlo
//! with exact binomial intervals, checks the estimator against exhaustive
//! enumeration of Rademacher sign patterns, and supplies the exact Gaussian
//! reference `log(2Φ̄(r b_n/σ))/b_n²`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{final_deviations, weighted_sums, Runner};
use crate::error::{invalid, Error, Result};
use crate::model::ProblemSpec;
use crate::output::fmt_f64;
use crate::rng::derive_seed;
use crate::stats::clopper_pearson;
use crate::weights::{gain_weights, h_norm};

/// Statistic whose tail is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `X_{n+1} − x*`.
    Recursion,
    /// `b Σ_k β_{k+1}^n U_{k+1}/(k+1)`.
    WeightedSum,
}

/// Speed `b_n = n^{1/(2(1+γ))}` over a grid of horizons, at level `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    gamma: f64,
    n_grid: Vec<u64>,
    r: f64,
}

impl Schedule {
    pub fn new(gamma: f64, n_grid: Vec<u64>, r: f64) -> Result<Schedule> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", format!("{gamma} must be positive")));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(invalid("r", format!("{r} must be positive")));
        }
        if n_grid.is_empty() {
            return Err(invalid("n_grid", "must not be empty"));
        }
        if n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_grid", "must be positive and strictly increasing"));
        }
        Ok(Schedule { gamma, n_grid, r })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_grid(&self) -> &[u64] {
        &self.n_grid
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn speed(&self, n: u64) -> f64 {
        speed(self.gamma, n)
    }
}

/// `b_n = n^{1/(2(1+γ))}`.
pub fn speed(gamma: f64, n: u64) -> f64 {
    (n as f64).powf(1.0 / (2.0 * (1.0 + gamma)))
}

/// `−r²/(2σ²)`.
pub fn limit_rate(r: f64, sigma: f64) -> f64 {
    -r * r / (2.0 * sigma * sigma)
}

/// Monte Carlo estimate of `P(h_n |statistic| > r b_n)` at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub n: u64,
    pub b_n: f64,
    /// `r b_n / h_n`, the event threshold on the raw statistic.
    pub threshold: f64,
    pub hits: u64,
    pub replicas: u64,
    pub p_hat: f64,
    /// 95% Clopper-Pearson interval.
    pub ci_low: f64,
    pub ci_high: f64,
    /// `log(p_hat)/b_n²`; `-inf` when there are no hits.
    pub rate: f64,
    /// Gaussian reference rate at the same `b_n`.
    pub reference_rate: f64,
}

impl TailEstimate {
    pub fn has_hits(&self) -> bool {
        self.hits > 0
    }

    /// `[log(ci_low), log(ci_high)] / b_n²`.
    pub fn rate_interval(&self) -> (f64, f64) {
        let speed_sq = self.b_n * self.b_n;
        (self.ci_low.ln() / speed_sq, self.ci_high.ln() / speed_sq)
    }
}

pub const CI_LEVEL: f64 = 0.95;

/// Estimates the tail at horizon `n` and level `r` with speed `b_n`,
/// from replicas `0..replicas` of `seed`.
pub fn estimate_tail(
    target: Target,
    spec: &ProblemSpec,
    n: u64,
    b_n: f64,
    r: f64,
    replicas: u64,
    seed: u64,
    runner: &Runner,
) -> Result<TailEstimate> {
    let c = spec.require_mdp()?;
    if replicas == 0 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    if !(r >= 0.0) || !(b_n > 0.0) {
        return Err(invalid("r/b_n", "need r >= 0 and b_n > 0"));
    }
    let h = h_norm(spec.b(), c, n);
    let threshold = r * b_n / h;
    let values = match target {
        Target::Recursion => final_deviations(spec, n, seed, replicas, runner),
        Target::WeightedSum => weighted_sums(spec, n, seed, replicas, runner)?,
    };
    let hits = values.iter().filter(|v| v.abs() > threshold).count() as u64;
    Ok(build_estimate(n, b_n, threshold, hits, replicas, r, spec.noise.sigma()))
}

fn build_estimate(n: u64, b_n: f64, threshold: f64, hits: u64, replicas: u64, r: f64, sigma: f64) -> TailEstimate {
    let p_hat = hits as f64 / replicas as f64;
    let (ci_low, ci_high) = clopper_pearson(hits, replicas, CI_LEVEL);
    let rate = if hits == 0 {
        f64::NEG_INFINITY
    } else {
        p_hat.ln() / (b_n * b_n)
    };
    TailEstimate {
        n,
        b_n,
        threshold,
        hits,
        replicas,
        p_hat,
        ci_low,
        ci_high,
        rate,
        reference_rate: gaussian_reference(r, b_n, sigma).rate,
    }
}

/// Exact probability `hits / 2^bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicProbability {
    pub hits: u64,
    pub log2_denominator: u32,
}

impl DyadicProbability {
    pub fn denominator(&self) -> u64 {
        1u64 << self.log2_denominator
    }

    pub fn to_f64(&self) -> f64 {
        self.hits as f64 / self.denominator() as f64
    }
}

pub const MAX_ENUMERATION_HORIZON: u64 = 22;

/// Calls `visit` with `σ Σ_k ξ_k w_k` for every sign pattern `ξ ∈ {±1}^len`.
///
/// Each sum is accumulated left to right, so it is bit-identical to the
/// sequential dot product of the pattern.
pub fn for_each_sign_pattern(weights: &[f64], sigma: f64, mut visit: impl FnMut(f64)) {
    fn walk(weights: &[f64], sigma: f64, partial: f64, visit: &mut dyn FnMut(f64)) {
        match weights.split_first() {
            None => visit(partial),
            Some((w, rest)) => {
                walk(rest, sigma, partial + w * sigma, visit);
                walk(rest, sigma, partial + w * -sigma, visit);
            }
        }
    }
    assert!(weights.len() < 64, "too many terms to enumerate");
    walk(weights, sigma, 0.0, &mut visit);
}

/// `P(|σ Σ_k ξ_k w_k| > t)` over uniform sign patterns, exactly.
pub fn enumerate_weighted_tail(weights: &[f64], sigma: f64, t: f64) -> DyadicProbability {
    let mut hits = 0u64;
    for_each_sign_pattern(weights, sigma, |s| {
        if s.abs() > t {
            hits += 1;
        }
    });
    DyadicProbability {
        hits,
        log2_denominator: weights.len() as u32,
    }
}

/// Exact `P(|S| > t)` for the weighted sum of a Rademacher spec at horizon
/// `n ≤ 22`, enumerating all `2^{n+1}` sign patterns.
pub fn exact_tail_enumeration(spec: &ProblemSpec, n: u64, t: f64) -> Result<DyadicProbability> {
    if !spec.noise.is_rademacher() {
        return Err(Error::UnsupportedNoise(
            "enumeration needs Rademacher noise".into(),
        ));
    }
    if n > MAX_ENUMERATION_HORIZON {
        return Err(invalid(
            "n",
            format!("{n} exceeds the enumeration limit {MAX_ENUMERATION_HORIZON}"),
        ));
    }
    let c = spec.require_mdp()?;
    let weights = gain_weights(spec.b(), c, n);
    Ok(enumerate_weighted_tail(&weights, spec.noise.sigma(), t))
}

/// Tail and rate of the Gaussian comparison statistic, which is exactly
/// `N(0, σ²)` after normalization by `h_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianReference {
    /// `2Φ̄(r b_n/σ)`.
    pub tail: f64,
    /// `log(tail)/b_n²`.
    pub rate: f64,
}

pub fn gaussian_reference(r: f64, b_n: f64, sigma: f64) -> GaussianReference {
    let z = r * b_n / sigma;
    GaussianReference {
        tail: normal_two_sided_tail(z),
        rate: ln_normal_two_sided_tail(z) / (b_n * b_n),
    }
}

/// `2(1 − Φ(z)) = erfc(z/√2)`.
pub fn normal_two_sided_tail(z: f64) -> f64 {
    libm::erfc(z / std::f64::consts::SQRT_2)
}

/// `log(2(1 − Φ(z)))`, finite far past the underflow of the tail itself.
pub fn ln_normal_two_sided_tail(z: f64) -> f64 {
    if z < 30.0 {
        return normal_two_sided_tail(z).ln();
    }
    // 1 − Φ(z) = φ(z)/(z + 1/(z + 2/(z + 3/(z + ...)))), evaluated bottom-up
    let mut fraction = z;
    for k in (1..=60).rev() {
        fraction = z + k as f64 / fraction;
    }
    let ln_phi = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
    std::f64::consts::LN_2 + ln_phi - fraction.ln()
}

/// One estimate per grid point plus the limit line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCurve {
    pub target: Target,
    pub r: f64,
    pub sigma: f64,
    pub points: Vec<TailEstimate>,
    pub limit_rate: f64,
}

pub const RATE_CSV_HEADER: &str =
    "n,b_n,threshold,replicas,hits,p_hat,ci_low,ci_high,rate,gaussian_rate,limit_rate";

impl RateCurve {
    /// One row per grid point and a final `limit` row carrying only the
    /// limit rate.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{RATE_CSV_HEADER}")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                p.n,
                fmt_f64(p.b_n),
                fmt_f64(p.threshold),
                p.replicas,
                p.hits,
                fmt_f64(p.p_hat),
                fmt_f64(p.ci_low),
                fmt_f64(p.ci_high),
                fmt_f64(p.rate),
                fmt_f64(p.reference_rate),
                fmt_f64(self.limit_rate),
            )?;
        }
        writeln!(out, "limit,,,,,,,,,,{}", fmt_f64(self.limit_rate))
    }

    /// JSON document; a rate of `-inf` is written as `null`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("rate curve serializes")
    }
}

/// Runs [`estimate_tail`] along the schedule. Point `n` uses the seed
/// `derive_seed(seed, n)`, so each point is reproducible on its own.
pub fn rate_curve(
    target: Target,
    spec: &ProblemSpec,
    schedule: &Schedule,
    replicas: u64,
    seed: u64,
    runner: &Runner,
) -> Result<RateCurve> {
    let points = schedule
        .n_grid()
        .iter()
        .map(|&n| {
            estimate_tail(
                target,
                spec,
                n,
                schedule.speed(n),
                schedule.r(),
                replicas,
                derive_seed(seed, n),
                runner,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateCurve {
        target,
        r: schedule.r(),
        sigma: spec.noise.sigma(),
        points,
        limit_rate: limit_rate(schedule.r(), spec.noise.sigma()),
    })
}
