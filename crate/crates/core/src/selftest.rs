//! Fast invariant checks run by the `selftest` subcommand.
//!
//! Every check is seeded, so two runs print identical reports.

use std::fmt;

use crate::bounds::azuma_tail;
use crate::engine::{
    envelope_bound, simulate, taylor_decompose, within_envelope, Simulation,
};
use crate::mdp::{enumerate_weighted_tail, for_each_sign_pattern, gaussian_reference, limit_rate};
use crate::model::{DriftFunction, NoiseModel, ProblemSpec};
use crate::rng::ReplicaStream;
use crate::weights::{beta, beta_bounds, gain_weights, h_norm, weight_sum};

/// Replaceable pieces, so that tests can check the suite catches a broken
/// implementation.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub beta: fn(f64, u64, u64) -> f64,
}

impl Default for Hooks {
    fn default() -> Hooks {
        Hooks {
            beta: |c, k, n| beta(c, k, n).to_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {} ({})", c.name, c.detail)?;
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        write!(f, "{passed}/{} checks passed", self.checks.len())
    }
}

pub fn run() -> Report {
    run_with(Hooks::default())
}

pub fn run_with(hooks: Hooks) -> Report {
    let checks: [(&'static str, fn(&Hooks) -> Result<String, String>); 9] = [
        ("weights.sandwich", sandwich),
        ("weights.recurrence", recurrence),
        ("weights.normalizer", normalizer),
        ("engine.decomposition", decomposition),
        ("engine.second_moment", second_moment),
        ("engine.envelope", envelope),
        ("bounds.azuma_enumeration", azuma_enumeration),
        ("mdp.enumeration", enumeration),
        ("mdp.gaussian_reference", reference),
    ];
    Report {
        checks: checks
            .iter()
            .map(|(name, check)| {
                let (passed, detail) = match check(&hooks) {
                    Ok(d) => (true, d),
                    Err(d) => (false, d),
                };
                CheckResult { name, passed, detail }
            })
            .collect(),
    }
}

const SEED: u64 = 0x5e1f_7e57;

fn uniform(stream: &mut ReplicaStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * stream.next_unit()
}

fn integer(stream: &mut ReplicaStream, lo: u64, hi: u64) -> u64 {
    lo + ((hi - lo + 1) as f64 * stream.next_unit()) as u64
}

fn sandwich(h: &Hooks) -> Result<String, String> {
    let mut s = ReplicaStream::new(SEED, 1);
    let cases = 2000;
    for _ in 0..cases {
        let c = uniform(&mut s, -5.0, -0.01);
        let n = integer(&mut s, 1, 10_000);
        let m = ((-2.0 * c - 1.0).max(1.0)).ceil() as u64;
        if m > n {
            continue;
        }
        let k = integer(&mut s, m, n);
        let (lo, hi) = beta_bounds(c, k, n).map_err(|e| e.to_string())?;
        let b = (h.beta)(c, k, n);
        if !(lo <= b && b <= hi) {
            return Err(format!("c = {c}, k = {k}, n = {n}: {b} outside [{lo}, {hi}]"));
        }
    }
    Ok(format!("{cases} random triples"))
}

fn recurrence(h: &Hooks) -> Result<String, String> {
    for c in [-0.3, -1.5, -4.0] {
        for n in [5u64, 50, 500] {
            for k in 0..n {
                let lhs = (h.beta)(c, k, n);
                let rhs = (1.0 + c / (k + 1) as f64) * (h.beta)(c, k + 1, n);
                if (lhs - rhs).abs() > 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300) {
                    return Err(format!("c = {c}, k = {k}, n = {n}: {lhs} vs {rhs}"));
                }
            }
            if (h.beta)(c, n + 1, n) != 1.0 {
                return Err(format!("empty product at n = {n} is not 1"));
            }
        }
    }
    Ok("beta_k = (1 + c/(k+1)) beta_{k+1}".into())
}

fn normalizer(h: &Hooks) -> Result<String, String> {
    for c in [-1.2, -2.0, -3.5] {
        for n in [1u64, 10, 200] {
            let direct: f64 = (0..=n)
                .map(|k| {
                    let w = (h.beta)(c, k + 1, n) / (k + 1) as f64;
                    w * w
                })
                .sum();
            let got = weight_sum(c, n);
            if ((got - direct) / direct).abs() > 1e-12 {
                return Err(format!("c = {c}, n = {n}: {got} vs {direct}"));
            }
            let hn = h_norm(2.0, c, n);
            if ((hn * hn * 4.0 * direct) - 1.0).abs() > 1e-12 {
                return Err(format!("h_n mismatch at c = {c}, n = {n}"));
            }
        }
    }
    Ok("weight sums match direct summation".into())
}

fn decomposition(_: &Hooks) -> Result<String, String> {
    let mut s = ReplicaStream::new(SEED, 2);
    let paths = 100;
    let mut worst = 0.0f64;
    for i in 0..paths {
        let c2 = uniform(&mut s, 0.1, 1.0);
        let c1 = c2 + uniform(&mut s, 0.1, 1.0);
        let drift = DriftFunction::sine_linear(c1, c2, uniform(&mut s, -1.0, 1.0)).map_err(|e| e.to_string())?;
        let noise = NoiseModel::rademacher(uniform(&mut s, 0.2, 2.0)).map_err(|e| e.to_string())?;
        let spec = ProblemSpec::new(drift, noise, uniform(&mut s, 0.3, 2.0), uniform(&mut s, -3.0, 3.0))
            .map_err(|e| e.to_string())?;
        let n = integer(&mut s, 1, 200);
        let Simulation::Path(traj) = simulate(&spec, n, SEED ^ i, true) else {
            return Err("recording produced no path".into());
        };
        let d = taylor_decompose(&traj).map_err(|e| e.to_string())?;
        let dev = traj.final_deviation();
        let rel = (d.total() - dev).abs() / dev.abs().max(1.0);
        worst = worst.max(rel);
        if rel > 1e-10 {
            return Err(format!("path {i}: relative error {rel:e}"));
        }
    }
    Ok(format!("{paths} nonlinear paths, worst relative error {worst:.1e}"))
}

fn second_moment(_: &Hooks) -> Result<String, String> {
    for (b, c) in [(1.0, -2.0), (2.0, -1.5), (0.5, -3.0)] {
        let sigma = 1.3;
        for n in 0..=10u64 {
            let weights = gain_weights(b, c, n);
            let mut total = 0.0;
            for_each_sign_pattern(&weights, sigma, |sum| total += sum * sum);
            let mean = total / (1u64 << weights.len()) as f64;
            let h = h_norm(b, c, n);
            let got = h * h * mean;
            if (got - sigma * sigma).abs() > 1e-12 {
                return Err(format!("b = {b}, c = {c}, n = {n}: {got}"));
            }
        }
    }
    Ok("E[(h_n I3)^2] = sigma^2 for n <= 10".into())
}

fn envelope(_: &Hooks) -> Result<String, String> {
    let spec = ProblemSpec::new(
        DriftFunction::sine_linear(1.5, 0.5, 0.2).map_err(|e| e.to_string())?,
        NoiseModel::two_point_adaptive(1.0, 0.3, 0.6).map_err(|e| e.to_string())?,
        1.0,
        2.0,
    )
    .map_err(|e| e.to_string())?;
    let n = 500;
    let env = envelope_bound(&spec, n);
    for seed in 0..50 {
        let Simulation::Path(traj) = simulate(&spec, n, seed, true) else {
            return Err("recording produced no path".into());
        };
        for (k, x) in traj.xs.iter().enumerate() {
            if !within_envelope(x - spec.drift.x_star(), env.bounds[k], spec.drift.x_star()) {
                return Err(format!("seed {seed}, k = {k}: |{x}| above {}", env.bounds[k]));
            }
        }
    }
    Ok("50 adaptive-noise paths".into())
}

fn azuma_enumeration(_: &Hooks) -> Result<String, String> {
    let mut s = ReplicaStream::new(SEED, 3);
    for len in 1..=12usize {
        let weights: Vec<f64> = (0..len).map(|_| uniform(&mut s, 0.05, 1.0)).collect();
        let ranges: Vec<(f64, f64)> = weights.iter().map(|w| (-w, *w)).collect();
        let total: f64 = weights.iter().sum();
        for i in 0..=40 {
            let t = total * i as f64 / 40.0;
            let exact = enumerate_weighted_tail(&weights, 1.0, t).to_f64();
            let bound = azuma_tail(t, &ranges).map_err(|e| e.to_string())?;
            if exact > bound {
                return Err(format!("{len} terms, t = {t}: {exact} > {bound}"));
            }
        }
    }
    Ok("exact tails below the bound for up to 12 terms".into())
}

fn enumeration(_: &Hooks) -> Result<String, String> {
    let p = enumerate_weighted_tail(&[0.6, 0.8], 1.0, 1.0);
    if p.to_f64() != 0.5 {
        return Err(format!("weights (0.6, 0.8) at t = 1 gave {}", p.to_f64()));
    }
    Ok("known two-term tail".into())
}

fn reference(_: &Hooks) -> Result<String, String> {
    let rate = gaussian_reference(1.0, 30.0, 1.0).rate;
    let limit = limit_rate(1.0, 1.0);
    if (rate / limit - 1.0).abs() > 0.01 {
        return Err(format!("rate {rate} not within 1% of {limit}"));
    }
    Ok(format!("rate {rate:.6} at b_n = 30"))
}
