//! Path simulation of
//!
//! ```text
//! X_{k+1} = X_k + b/(k+1) · (g(X_k) + U_{k+1}),   k = 0..=n
//! ```
//!
//! together with the weighted martingale sum `b Σ_k β_{k+1}^n(c) U_{k+1}/(k+1)`,
//! the three-term Taylor decomposition of `X_{n+1} − x*` and the pathwise
//! envelope `|X_k − x*| ≤ B_k`.
//!
//! "Horizon `n`" always means the path ends at `X_{n+1}`.
//!
//! Replica `i` of a batch run with seed `s` sees exactly the noise that
//! [`simulate`] sees for seed `s` when `i = 0`; see [`crate::rng`].

use std::io::{self, Write};
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{linear_g, sine_linear_g, DriftKind, NoiseModel, NoiseState, ProblemSpec};
use crate::output::fmt_f64;
use crate::rng::ReplicaStream;
use crate::weights::{gain_weights, CompensatedSum};

/// One step of the recursion from `x = X_k`.
#[inline]
pub fn step(spec: &ProblemSpec, x: f64, k: u64, u: f64) -> f64 {
    x + gain(spec.b(), k) * (spec.drift.eval(x) + u)
}

#[inline(always)]
fn gain(b: f64, k: u64) -> f64 {
    b / (k + 1) as f64
}

/// Noise replaced by a constant, for the deterministic cross-checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcedNoise {
    /// Every `U_k = 0`.
    Zero,
    /// Every `U_k = +σ`.
    PlusSigma,
}

/// Where the noise of a run comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSource {
    /// Replica 0 of the stream family keyed by this seed.
    Seeded(u64),
    Forced(ForcedNoise),
}

/// Sequential noise generator of one replica.
#[derive(Debug, Clone)]
enum NoiseDriver {
    Random {
        stream: ReplicaStream,
        state: NoiseState,
    },
    Constant(f64),
}

impl NoiseDriver {
    fn new(noise: &NoiseModel, source: NoiseSource) -> NoiseDriver {
        match source {
            NoiseSource::Seeded(seed) => NoiseDriver::replica(seed, 0),
            NoiseSource::Forced(ForcedNoise::Zero) => NoiseDriver::Constant(0.0),
            NoiseSource::Forced(ForcedNoise::PlusSigma) => NoiseDriver::Constant(noise.sigma()),
        }
    }

    fn replica(seed: u64, replica: u64) -> NoiseDriver {
        NoiseDriver::Random {
            stream: ReplicaStream::new(seed, replica),
            state: NoiseState::Fresh,
        }
    }

    #[inline]
    fn next(&mut self, noise: &NoiseModel) -> f64 {
        match self {
            NoiseDriver::Random { stream, state } => {
                let (u, next) = noise.sample(*state, stream);
                *state = next;
                u
            }
            NoiseDriver::Constant(u) => *u,
        }
    }

    /// Fills `out` with the next `out.len()` draws, exactly as repeated
    /// [`NoiseDriver::next`] calls would.
    fn fill(&mut self, noise: &NoiseModel, out: &mut [f64]) {
        let NoiseDriver::Random { stream, state } = self else {
            let NoiseDriver::Constant(u) = *self else { unreachable!() };
            out.fill(u);
            return;
        };
        if noise.is_rademacher() {
            stream.fill_signs(noise.sigma(), out);
            if let Some(last) = out.last() {
                *state = if *last > 0.0 { NoiseState::AfterUp } else { NoiseState::AfterDown };
            }
            return;
        }
        let laws = [NoiseState::Fresh, NoiseState::AfterUp, NoiseState::AfterDown].map(|s| noise.law(s));
        let index = |s: NoiseState| match s {
            NoiseState::Fresh => 0,
            NoiseState::AfterUp => 1,
            NoiseState::AfterDown => 2,
        };
        let mut current = *state;
        for slot in out.iter_mut() {
            let law = &laws[index(current)];
            if stream.next_unit() < law.p_up {
                *slot = law.up;
                current = NoiseState::AfterUp;
            } else {
                *slot = law.down;
                current = NoiseState::AfterDown;
            }
        }
        *state = current;
    }
}

/// A recorded path `X_0..X_{n+1}` with its noise `U_1..U_{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
    pub spec: ProblemSpec,
    pub fingerprint: u64,
    pub source: NoiseSource,
}

impl Trajectory {
    /// Horizon `n` (the path ends at `X_{n+1}`).
    pub fn horizon(&self) -> u64 {
        self.us.len() as u64 - 1
    }

    pub fn final_deviation(&self) -> f64 {
        self.xs[self.xs.len() - 1] - self.spec.drift.x_star()
    }

    fn check_shape(&self) -> Result<()> {
        if self.us.is_empty() || self.xs.len() != self.us.len() + 1 {
            return Err(Error::MalformedTrajectory(format!(
                "{} states for {} noise values",
                self.xs.len(),
                self.us.len()
            )));
        }
        if self.fingerprint != self.spec.fingerprint() {
            return Err(Error::MalformedTrajectory(
                "fingerprint does not match the attached spec".into(),
            ));
        }
        Ok(())
    }

    /// Writes `k,x_k,u_k` rows; `u_0` is left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,x_k,u_k")?;
        for (k, x) in self.xs.iter().enumerate() {
            if k == 0 {
                writeln!(out, "0,{},", fmt_f64(*x))?;
            } else {
                writeln!(out, "{k},{},{}", fmt_f64(*x), fmt_f64(self.us[k - 1]))?;
            }
        }
        Ok(())
    }
}

/// Result of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Simulation {
    Path(Trajectory),
    /// `X_{n+1} − x*` only, computed in O(1) memory.
    Final(f64),
}

impl Simulation {
    pub fn final_deviation(&self) -> f64 {
        match self {
            Simulation::Path(t) => t.final_deviation(),
            Simulation::Final(d) => *d,
        }
    }
}

/// Runs the recursion to horizon `n` on the noise stream of `seed`.
pub fn simulate(spec: &ProblemSpec, n: u64, seed: u64, record: bool) -> Simulation {
    simulate_with(spec, n, NoiseSource::Seeded(seed), record)
}

pub fn simulate_with(spec: &ProblemSpec, n: u64, source: NoiseSource, record: bool) -> Simulation {
    if record {
        Simulation::Path(record_path(spec, n, source))
    } else {
        let mut driver = NoiseDriver::new(&spec.noise, source);
        Simulation::Final(run_lanes::<false>(spec, n, std::slice::from_mut(&mut driver), None).0[0])
    }
}

fn record_path(spec: &ProblemSpec, n: u64, source: NoiseSource) -> Trajectory {
    let len = usize::try_from(n + 1).expect("horizon fits in memory");
    let mut driver = NoiseDriver::new(&spec.noise, source);
    let mut xs = Vec::with_capacity(len + 1);
    let mut us = Vec::with_capacity(len);
    let mut x = spec.x0();
    xs.push(x);
    for k in 0..=n {
        let u = driver.next(&spec.noise);
        x = step(spec, x, k, u);
        us.push(u);
        xs.push(x);
    }
    Trajectory {
        xs,
        us,
        spec: *spec,
        fingerprint: spec.fingerprint(),
        source,
    }
}

/// Weighted martingale sum `S = b Σ_{k=0}^n β_{k+1}^n(c) U_{k+1}/(k+1)` with
/// `c = b·g'(x*)`, for the noise of `seed`.
///
/// Forward sweep `T_k = (1 + c/(k+1)) T_{k−1} + b U_{k+1}/(k+1)`, `T_n = S`.
pub fn weighted_sum(spec: &ProblemSpec, n: u64, seed: u64) -> Result<f64> {
    weighted_sum_with(spec, n, NoiseSource::Seeded(seed))
}

pub fn weighted_sum_with(spec: &ProblemSpec, n: u64, source: NoiseSource) -> Result<f64> {
    let c = spec.require_mdp()?;
    let b = spec.b();
    let mut driver = NoiseDriver::new(&spec.noise, source);
    let mut total = 0.0;
    for k in 0..=n {
        let u = driver.next(&spec.noise);
        let decay = if k == 0 { 0.0 } else { 1.0 + c / (k + 1) as f64 };
        total = decay * total + gain(b, k) * u;
    }
    Ok(total)
}

/// The three terms of `X_{n+1} − x* = I₁ + I₂ + I₃`:
///
/// ```text
/// I₁ = β_0^n (X_0 − x*)
/// I₂ = b Σ β_{k+1}^n R_k/(k+1),   R_k = g(X_k) − g'(x*)(X_k − x*)
/// I₃ = b Σ β_{k+1}^n U_{k+1}/(k+1)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.i1 + self.i2 + self.i3
    }
}

pub fn taylor_decompose(traj: &Trajectory) -> Result<Decomposition> {
    traj.check_shape()?;
    let spec = &traj.spec;
    let n = traj.horizon();
    let c = spec.exponent();
    let x_star = spec.drift.x_star();
    let slope = spec.drift.gprime_star();
    let weights = gain_weights(spec.b(), c, n);

    let mut remainder_sum = CompensatedSum::default();
    let mut noise_sum = CompensatedSum::default();
    for (k, w) in weights.iter().enumerate() {
        let x = traj.xs[k];
        let remainder = match spec.drift.kind() {
            // exactly zero, whatever rounding the subtraction would give
            DriftKind::Linear { .. } => 0.0,
            DriftKind::SineLinear { .. } => spec.drift.eval(x) - slope * (x - x_star),
        };
        remainder_sum.add(w * remainder);
        noise_sum.add(w * traj.us[k]);
    }
    // β_0^n = (1 + c) β_1^n and w_0 = b β_1^n
    let beta_0 = (1.0 + c) * weights[0] / spec.b();
    Ok(Decomposition {
        i1: beta_0 * (spec.x0() - x_star),
        i2: remainder_sum.value(),
        i3: noise_sum.value(),
    })
}

/// Deterministic envelope `B_0..B_{n+1}` with `|X_k − x*| ≤ B_k` on every path.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub bounds: Vec<f64>,
    /// `F = max_k B_k`.
    pub sup: f64,
}

/// `B_0 = |x0 − x*|`, `B_{k+1} = q_k B_k + b K_u/(k+1)` with
/// `q_k = max(|1 − bK₁/(k+1)|, |1 − bK₂/(k+1)|)`.
pub fn envelope_bound(spec: &ProblemSpec, n: u64) -> Envelope {
    let len = usize::try_from(n + 2).expect("horizon fits in memory");
    let b = spec.b();
    let (k1, k2) = (spec.drift.k1(), spec.drift.k2());
    let ku = spec.noise.ku();
    let mut bounds = Vec::with_capacity(len);
    let mut current = (spec.x0() - spec.drift.x_star()).abs();
    let mut sup = current;
    bounds.push(current);
    for k in 0..=n {
        let a = gain(b, k);
        let q = (1.0 - a * k1).abs().max((1.0 - a * k2).abs());
        current = q * current + a * ku;
        sup = sup.max(current);
        bounds.push(current);
    }
    Envelope { bounds, sup }
}

/// Rounding allowance for comparing a simulated deviation against `B_k`.
#[inline]
pub(crate) fn within_envelope(deviation: f64, bound: f64, x_star: f64) -> bool {
    deviation.abs() <= bound + 1e-12 * (bound + x_star.abs())
}

/// Executes replica blocks, optionally on a dedicated thread pool.
///
/// Replicas are cut into fixed blocks of [`Runner::BLOCK`] whatever the worker
/// count, and block outputs are concatenated in replica order.
pub struct Runner {
    pool: Option<rayon::ThreadPool>,
}

impl Runner {
    pub const BLOCK: u64 = 2048;

    /// `None` uses rayon's global pool.
    pub fn new(workers: Option<usize>) -> Result<Runner> {
        let pool = match workers {
            None => None,
            Some(0) => return Err(invalid("workers", "must be at least 1")),
            Some(w) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| invalid("workers", e.to_string()))?,
            ),
        };
        Ok(Runner { pool })
    }

    pub fn map_blocks<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<u64>) -> Vec<T> + Sync,
    {
        let blocks = count.div_ceil(Self::BLOCK);
        let run = || {
            (0..blocks)
                .into_par_iter()
                .map(|i| f(i * Self::BLOCK..((i + 1) * Self::BLOCK).min(count)))
                .collect::<Vec<Vec<T>>>()
        };
        let parts = match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        };
        parts.into_iter().flatten().collect()
    }
}

impl Default for Runner {
    fn default() -> Runner {
        Runner { pool: None }
    }
}

const LANES: usize = 8;
const CHUNK: usize = 64;

trait Drift: Copy {
    fn g(&self, x: f64) -> f64;
}

#[derive(Clone, Copy)]
struct LinearDrift {
    alpha1: f64,
    x_star: f64,
}

impl Drift for LinearDrift {
    #[inline(always)]
    fn g(&self, x: f64) -> f64 {
        linear_g(self.alpha1, self.x_star, x)
    }
}

#[derive(Clone, Copy)]
struct SineLinearDrift {
    c1: f64,
    c2: f64,
    x_star: f64,
}

impl Drift for SineLinearDrift {
    #[inline(always)]
    fn g(&self, x: f64) -> f64 {
        sine_linear_g(self.c1, self.c2, self.x_star, x)
    }
}

/// Advances up to [`LANES`] replicas in lock-step; returns final deviations and
/// whether each stayed inside `envelope` (when `CHECK`).
fn run_lanes<const CHECK: bool>(
    spec: &ProblemSpec,
    n: u64,
    drivers: &mut [NoiseDriver],
    envelope: Option<&[f64]>,
) -> ([f64; LANES], [bool; LANES]) {
    let x_star = spec.drift.x_star();
    match spec.drift.kind() {
        DriftKind::Linear { alpha1 } => {
            lanes_kernel::<_, CHECK>(LinearDrift { alpha1, x_star }, spec, n, drivers, envelope)
        }
        DriftKind::SineLinear { c1, c2 } => {
            lanes_kernel::<_, CHECK>(SineLinearDrift { c1, c2, x_star }, spec, n, drivers, envelope)
        }
    }
}

fn lanes_kernel<D: Drift, const CHECK: bool>(
    drift: D,
    spec: &ProblemSpec,
    n: u64,
    drivers: &mut [NoiseDriver],
    envelope: Option<&[f64]>,
) -> ([f64; LANES], [bool; LANES]) {
    debug_assert!(drivers.len() <= LANES);
    let active = drivers.len();
    let b = spec.b();
    let x_star = spec.drift.x_star();
    let mut xs = [spec.x0(); LANES];
    let mut inside = [true; LANES];
    let mut noise = [[0.0f64; LANES]; CHUNK];
    let mut scratch = [0.0f64; CHUNK];

    let total = n + 1;
    let mut start = 0u64;
    while start < total {
        let m = (total - start).min(CHUNK as u64) as usize;
        for (lane, driver) in drivers.iter_mut().enumerate() {
            driver.fill(&spec.noise, &mut scratch[..m]);
            for (j, u) in scratch[..m].iter().enumerate() {
                noise[j][lane] = *u;
            }
        }
        for (j, row) in noise[..m].iter().enumerate() {
            let k = start + j as u64;
            let a = gain(b, k);
            for lane in 0..LANES {
                let x = xs[lane];
                xs[lane] = x + a * (drift.g(x) + row[lane]);
            }
            if CHECK {
                let bound = envelope.expect("envelope")[(k + 1) as usize];
                for lane in 0..active {
                    inside[lane] &= within_envelope(xs[lane] - x_star, bound, x_star);
                }
            }
        }
        start += m as u64;
    }
    let mut out = [0.0; LANES];
    for lane in 0..LANES {
        out[lane] = xs[lane] - x_star;
    }
    (out, inside)
}

/// `X_{n+1} − x*` for replicas `0..replicas` of `seed`.
pub fn final_deviations(spec: &ProblemSpec, n: u64, seed: u64, replicas: u64, runner: &Runner) -> Vec<f64> {
    runner.map_blocks(replicas, |range| {
        let mut out = Vec::with_capacity((range.end - range.start) as usize);
        for group in chunked(range) {
            let mut drivers: Vec<NoiseDriver> = group.clone().map(|r| NoiseDriver::replica(seed, r)).collect();
            let (dev, _) = run_lanes::<false>(spec, n, &mut drivers, None);
            out.extend_from_slice(&dev[..drivers.len()]);
        }
        out
    })
}

/// Like [`final_deviations`], also counting replicas whose path left the
/// envelope of [`envelope_bound`] at any step.
pub fn final_deviations_enveloped(
    spec: &ProblemSpec,
    n: u64,
    seed: u64,
    replicas: u64,
    runner: &Runner,
) -> (Vec<f64>, u64) {
    let envelope = envelope_bound(spec, n);
    let pairs = runner.map_blocks(replicas, |range| {
        let mut out = Vec::with_capacity((range.end - range.start) as usize);
        for group in chunked(range) {
            let mut drivers: Vec<NoiseDriver> = group.clone().map(|r| NoiseDriver::replica(seed, r)).collect();
            let (dev, inside) = run_lanes::<true>(spec, n, &mut drivers, Some(&envelope.bounds));
            out.extend((0..drivers.len()).map(|l| (dev[l], inside[l])));
        }
        out
    });
    let violations = pairs.iter().filter(|(_, ok)| !ok).count() as u64;
    (pairs.into_iter().map(|(d, _)| d).collect(), violations)
}

/// Weighted martingale sums for replicas `0..replicas` of `seed`, using one
/// precomputed weight vector shared by all replicas.
pub fn weighted_sums(spec: &ProblemSpec, n: u64, seed: u64, replicas: u64, runner: &Runner) -> Result<Vec<f64>> {
    let c = spec.require_mdp()?;
    let weights = gain_weights(spec.b(), c, n);
    Ok(runner.map_blocks(replicas, |range| {
        let mut out = Vec::with_capacity((range.end - range.start) as usize);
        for group in chunked(range) {
            let mut drivers: Vec<NoiseDriver> = group.clone().map(|r| NoiseDriver::replica(seed, r)).collect();
            let sums = dot_lanes(&spec.noise, &weights, &mut drivers);
            out.extend_from_slice(&sums[..drivers.len()]);
        }
        out
    }))
}

fn dot_lanes(noise: &NoiseModel, weights: &[f64], drivers: &mut [NoiseDriver]) -> [f64; LANES] {
    let mut acc = [0.0f64; LANES];
    let mut block = [[0.0f64; LANES]; CHUNK];
    let mut scratch = [0.0f64; CHUNK];
    for chunk in weights.chunks(CHUNK) {
        let m = chunk.len();
        for (lane, driver) in drivers.iter_mut().enumerate() {
            driver.fill(noise, &mut scratch[..m]);
            for (j, u) in scratch[..m].iter().enumerate() {
                block[j][lane] = *u;
            }
        }
        for (w, row) in chunk.iter().zip(block.iter()) {
            for lane in 0..LANES {
                acc[lane] += w * row[lane];
            }
        }
    }
    acc
}

fn chunked(range: Range<u64>) -> impl Iterator<Item = Range<u64>> {
    let end = range.end;
    range
        .step_by(LANES)
        .map(move |s| s..(s + LANES as u64).min(end))
}
