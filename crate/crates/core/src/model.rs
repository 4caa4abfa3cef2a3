//! Problem definitions: the drift `g`, the noise `(U_n)` and the recursion gain.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::ReplicaStream;

/// Shape of the drift around its stable point `x*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    /// `g(x) = α₁ (x − x*)`.
    Linear { alpha1: f64 },
    /// `g(x) = −c₁ u − c₂ sin u` with `u = x − x*`.
    SineLinear { c1: f64, c2: f64 },
}

/// A drift with a unique stable point and the constants `K₁, K₂, K_a` of
///
/// ```text
/// K₁|x − x*| ≤ |g(x)| ≤ K₂|x − x*|,   |g''(x)| ≤ K_a,   (x − x*)g(x) ≤ 0
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftFunction {
    kind: DriftKind,
    x_star: f64,
    gprime_star: f64,
    k1: f64,
    k2: f64,
    ka: f64,
}

#[inline(always)]
pub(crate) fn linear_g(alpha1: f64, x_star: f64, x: f64) -> f64 {
    alpha1 * (x - x_star)
}

#[inline(always)]
pub(crate) fn sine_linear_g(c1: f64, c2: f64, x_star: f64, x: f64) -> f64 {
    let u = x - x_star;
    -c1 * u - c2 * u.sin()
}

impl DriftFunction {
    pub fn linear(alpha1: f64, x_star: f64) -> Result<DriftFunction> {
        if !(alpha1.is_finite() && alpha1 < 0.0) {
            return Err(invalid("alpha1", format!("{alpha1} must be negative")));
        }
        check_finite("x_star", x_star)?;
        Ok(DriftFunction {
            kind: DriftKind::Linear { alpha1 },
            x_star,
            gprime_star: alpha1,
            k1: -alpha1,
            k2: -alpha1,
            ka: 0.0,
        })
    }

    pub fn sine_linear(c1: f64, c2: f64, x_star: f64) -> Result<DriftFunction> {
        if !(c1.is_finite() && c2.is_finite() && c2 > 0.0 && c1 > c2) {
            return Err(invalid(
                "parameters",
                format!("need c1 > c2 > 0, got c1 = {c1}, c2 = {c2}"),
            ));
        }
        check_finite("x_star", x_star)?;
        Ok(DriftFunction {
            kind: DriftKind::SineLinear { c1, c2 },
            x_star,
            gprime_star: -(c1 + c2),
            k1: c1 - c2,
            k2: c1 + c2,
            ka: c2,
        })
    }

    pub fn from_kind(kind: DriftKind, x_star: f64) -> Result<DriftFunction> {
        match kind {
            DriftKind::Linear { alpha1 } => DriftFunction::linear(alpha1, x_star),
            DriftKind::SineLinear { c1, c2 } => DriftFunction::sine_linear(c1, c2, x_star),
        }
    }

    pub fn kind(&self) -> DriftKind {
        self.kind
    }

    pub fn x_star(&self) -> f64 {
        self.x_star
    }

    pub fn gprime_star(&self) -> f64 {
        self.gprime_star
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn ka(&self) -> f64 {
        self.ka
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            DriftKind::Linear { alpha1 } => linear_g(alpha1, self.x_star, x),
            DriftKind::SineLinear { c1, c2 } => sine_linear_g(c1, c2, self.x_star, x),
        }
    }

    /// Scans a uniform grid of `grid_points` over `x* ± grid_halfwidth` and
    /// reports the first violated condition, if any.
    pub fn validate(&self, grid_halfwidth: f64, grid_points: usize) -> Result<DriftReport> {
        if grid_points < 3 {
            return Err(invalid("grid_points", "need at least 3 points"));
        }
        if !(grid_halfwidth.is_finite() && grid_halfwidth > 0.0) {
            return Err(invalid("grid_halfwidth", "must be positive"));
        }
        const STEP: f64 = 1e-4;
        const CURVATURE_TOL: f64 = 1e-4;
        let spacing = 2.0 * grid_halfwidth / (grid_points - 1) as f64;
        for i in 0..grid_points {
            let x = self.x_star - grid_halfwidth + spacing * i as f64;
            let dist = (x - self.x_star).abs();
            let gx = self.eval(x);
            let slack = 1e-12 * (1.0 + dist);

            let lower = self.k1 * dist;
            if gx.abs() < lower - slack {
                return Ok(DriftReport::violated(
                    grid_points,
                    DriftCondition::LowerLinear,
                    x,
                    gx.abs(),
                    lower,
                ));
            }
            let upper = self.k2 * dist;
            if gx.abs() > upper + slack {
                return Ok(DriftReport::violated(
                    grid_points,
                    DriftCondition::UpperLinear,
                    x,
                    gx.abs(),
                    upper,
                ));
            }
            let second = (self.eval(x + STEP) - 2.0 * gx + self.eval(x - STEP)) / (STEP * STEP);
            if second.abs() > self.ka + CURVATURE_TOL {
                return Ok(DriftReport::violated(
                    grid_points,
                    DriftCondition::Curvature,
                    x,
                    second.abs(),
                    self.ka,
                ));
            }
            let sign_product = (x - self.x_star) * gx;
            if sign_product > 0.0 {
                return Ok(DriftReport::violated(
                    grid_points,
                    DriftCondition::SignRestoring,
                    x,
                    sign_product,
                    0.0,
                ));
            }
        }
        Ok(DriftReport {
            points_checked: grid_points,
            violation: None,
        })
    }
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, "must be finite"))
    }
}

/// Which drift condition a grid point broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftCondition {
    /// `K₁|x − x*| ≤ |g(x)|`
    LowerLinear,
    /// `|g(x)| ≤ K₂|x − x*|`
    UpperLinear,
    /// `|g''(x)| ≤ K_a`
    Curvature,
    /// `(x − x*) g(x) ≤ 0`
    SignRestoring,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftViolation {
    pub condition: DriftCondition,
    pub x: f64,
    /// The side of the inequality computed from `g` at `x`.
    pub observed: f64,
    /// The side of the inequality it was compared against.
    pub limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub points_checked: usize,
    pub violation: Option<DriftViolation>,
}

impl DriftReport {
    fn violated(points: usize, condition: DriftCondition, x: f64, observed: f64, limit: f64) -> Self {
        DriftReport {
            points_checked: points,
            violation: Some(DriftViolation {
                condition,
                x,
                observed,
                limit,
            }),
        }
    }

    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Law of the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// `±σ` with probability 1/2 each, independent of the past.
    Rademacher,
    /// Two-point law whose up-probability depends on the previous draw:
    /// `p_max` after an up move, `p_min` after a down move, their midpoint
    /// before the first draw.
    TwoPointAdaptive { p_min: f64, p_max: f64 },
}

/// Conditional state of the noise given the past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseState {
    #[default]
    Fresh,
    AfterUp,
    AfterDown,
}

/// The two outcomes of the conditional law given the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointLaw {
    pub up: f64,
    pub down: f64,
    pub p_up: f64,
}

impl TwoPointLaw {
    pub fn mean(&self) -> f64 {
        self.p_up * self.up + (1.0 - self.p_up) * self.down
    }

    pub fn second_moment(&self) -> f64 {
        self.p_up * self.up * self.up + (1.0 - self.p_up) * self.down * self.down
    }
}

/// Bounded martingale-difference noise with conditional variance `σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    sigma: f64,
    ku: f64,
}

impl NoiseModel {
    pub fn rademacher(sigma: f64) -> Result<NoiseModel> {
        check_sigma(sigma)?;
        Ok(NoiseModel {
            kind: NoiseKind::Rademacher,
            sigma,
            ku: sigma,
        })
    }

    pub fn two_point_adaptive(sigma: f64, p_min: f64, p_max: f64) -> Result<NoiseModel> {
        check_sigma(sigma)?;
        if !(p_min > 0.0 && p_min <= p_max && p_max < 1.0) {
            return Err(invalid(
                "p_min/p_max",
                format!("need 0 < p_min <= p_max < 1, got {p_min}, {p_max}"),
            ));
        }
        let ku = sigma * ((1.0 - p_min) / p_min).sqrt().max((p_max / (1.0 - p_max)).sqrt());
        Ok(NoiseModel {
            kind: NoiseKind::TwoPointAdaptive { p_min, p_max },
            sigma,
            ku,
        })
    }

    pub fn from_kind(kind: NoiseKind, sigma: f64) -> Result<NoiseModel> {
        match kind {
            NoiseKind::Rademacher => NoiseModel::rademacher(sigma),
            NoiseKind::TwoPointAdaptive { p_min, p_max } => {
                NoiseModel::two_point_adaptive(sigma, p_min, p_max)
            }
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Almost-sure bound `K_u` on `|U_n|`.
    pub fn ku(&self) -> f64 {
        self.ku
    }

    pub fn is_rademacher(&self) -> bool {
        matches!(self.kind, NoiseKind::Rademacher)
    }

    pub fn up_probability(&self, state: NoiseState) -> f64 {
        match self.kind {
            NoiseKind::Rademacher => 0.5,
            NoiseKind::TwoPointAdaptive { p_min, p_max } => match state {
                NoiseState::Fresh => 0.5 * (p_min + p_max),
                NoiseState::AfterUp => p_max,
                NoiseState::AfterDown => p_min,
            },
        }
    }

    /// Conditional law given `state`: `+σ√((1−p)/p)` w.p. `p`, `−σ√(p/(1−p))` otherwise.
    pub fn law(&self, state: NoiseState) -> TwoPointLaw {
        match self.kind {
            NoiseKind::Rademacher => TwoPointLaw {
                up: self.sigma,
                down: -self.sigma,
                p_up: 0.5,
            },
            NoiseKind::TwoPointAdaptive { .. } => {
                let p = self.up_probability(state);
                TwoPointLaw {
                    up: self.sigma * ((1.0 - p) / p).sqrt(),
                    down: -self.sigma * (p / (1.0 - p)).sqrt(),
                    p_up: p,
                }
            }
        }
    }

    /// Draws `U_{k+1}` given the current state; returns the value and the next state.
    ///
    /// Rademacher draws consume one bit of the stream, adaptive draws one
    /// uniform variate.
    #[inline]
    pub fn sample(&self, state: NoiseState, stream: &mut ReplicaStream) -> (f64, NoiseState) {
        let up = match self.kind {
            NoiseKind::Rademacher => stream.next_bit(),
            NoiseKind::TwoPointAdaptive { .. } => stream.next_unit() < self.up_probability(state),
        };
        let law = self.law(state);
        if up {
            (law.up, NoiseState::AfterUp)
        } else {
            (law.down, NoiseState::AfterDown)
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(invalid("sigma", format!("{sigma} must be positive")))
    }
}

/// One instance of the recursion: drift, noise, gain `b` and start `x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub drift: DriftFunction,
    pub noise: NoiseModel,
    b: f64,
    x0: f64,
}

impl ProblemSpec {
    pub fn new(drift: DriftFunction, noise: NoiseModel, b: f64, x0: f64) -> Result<ProblemSpec> {
        if !(b.is_finite() && b > 0.0) {
            return Err(invalid("b", format!("{b} must be positive")));
        }
        check_finite("x0", x0)?;
        Ok(ProblemSpec { drift, noise, b, x0 })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// `c = b·g'(x*)`, the exponent of the weight products.
    pub fn exponent(&self) -> f64 {
        self.b * self.drift.gprime_star()
    }

    /// Fails unless `b·g'(x*) < −1`.
    pub fn require_mdp(&self) -> Result<f64> {
        let c = self.exponent();
        if c < -1.0 {
            Ok(c)
        } else {
            Err(Error::NotMdpRegime { exponent: c })
        }
    }

    /// Stable 64-bit digest of every parameter (FNV-1a over the bit patterns).
    pub fn fingerprint(&self) -> u64 {
        let mut words: Vec<u64> = Vec::with_capacity(10);
        match self.drift.kind() {
            DriftKind::Linear { alpha1 } => words.extend([1, alpha1.to_bits()]),
            DriftKind::SineLinear { c1, c2 } => words.extend([2, c1.to_bits(), c2.to_bits()]),
        }
        words.push(self.drift.x_star().to_bits());
        match self.noise.kind() {
            NoiseKind::Rademacher => words.push(1),
            NoiseKind::TwoPointAdaptive { p_min, p_max } => {
                words.extend([2, p_min.to_bits(), p_max.to_bits()])
            }
        }
        words.extend([self.noise.sigma().to_bits(), self.b.to_bits(), self.x0.to_bits()]);
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in words.iter().flat_map(|w| w.to_le_bytes()) {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn eval_examples() {
        let lin = DriftFunction::linear(-1.0, 0.0).unwrap();
        assert_eq!(lin.eval(0.5), -0.5);
        let sine = DriftFunction::sine_linear(2.0, 1.0, 0.0).unwrap();
        assert_eq!(sine.eval(0.0), 0.0);
        assert!((sine.eval(PI) - (-2.0 * PI)).abs() < 1e-14);
        assert_eq!(sine.gprime_star(), -3.0);
        assert_eq!((sine.k1(), sine.k2(), sine.ka()), (1.0, 3.0, 1.0));
    }

    #[test]
    fn stable_point_is_exact_root() {
        for xs in [-3.25, 0.0, 1e3] {
            assert_eq!(DriftFunction::linear(-0.7, xs).unwrap().eval(xs), 0.0);
            assert_eq!(DriftFunction::sine_linear(1.5, 0.5, xs).unwrap().eval(xs), 0.0);
        }
    }

    #[test]
    fn validation_passes_for_shipped_drifts() {
        let lin = DriftFunction::linear(-1.0, 0.0).unwrap();
        assert!(lin.validate(10.0, 1001).unwrap().passed());
        let sine = DriftFunction::sine_linear(2.0, 1.0, 0.0).unwrap();
        let report = sine.validate(20.0, 4001).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.points_checked, 4001);
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(DriftFunction::linear(0.0, 0.0).is_err());
        assert!(DriftFunction::linear(1.0, 0.0).is_err());
        assert!(DriftFunction::sine_linear(1.0, 2.0, 0.0).is_err());
        assert!(DriftFunction::sine_linear(1.0, 1.0, 0.0).is_err());
        assert!(DriftFunction::sine_linear(1.0, 0.0, 0.0).is_err());
        assert!(DriftFunction::linear(-1.0, f64::NAN).is_err());
    }

    #[test]
    fn scan_flags_sine_overpowering_linear_part() {
        // c2 > c1 cannot be constructed, and there K1 = c1 - c2 < 0 makes the
        // lower bound vacuous; declare K1 = c1 as a misconfigured caller would.
        let bad = DriftFunction {
            kind: DriftKind::SineLinear { c1: 1.0, c2: 2.0 },
            x_star: 0.0,
            gprime_star: -3.0,
            k1: 1.0,
            k2: 3.0,
            ka: 2.0,
        };
        let report = bad.validate(20.0, 4001).unwrap();
        let v = report.violation.expect("violation");
        assert_eq!(v.condition, DriftCondition::LowerLinear);
        assert!(v.observed < v.limit);
        // |g(u)| = |u + 2 sin u| drops below |u| only where u sin u < 0
        assert!(v.x * v.x.sin() < 0.0);
    }

    #[test]
    fn validation_needs_three_points() {
        let lin = DriftFunction::linear(-1.0, 0.0).unwrap();
        assert!(lin.validate(1.0, 2).is_err());
    }

    #[test]
    fn two_point_examples() {
        let noise = NoiseModel::two_point_adaptive(1.0, 0.2, 0.8).unwrap();
        let law = noise.law(NoiseState::AfterUp);
        assert_eq!(law.p_up, 0.8);
        assert!((law.up - 0.5).abs() < 1e-15);
        assert!((law.down + 2.0).abs() < 1e-15);
        assert!(law.mean().abs() < 1e-15);
        assert!((law.second_moment() - 1.0).abs() < 1e-15);

        let rad = NoiseModel::rademacher(2.0).unwrap();
        let law = rad.law(NoiseState::Fresh);
        assert_eq!((law.up, law.down, law.p_up), (2.0, -2.0, 0.5));
        assert_eq!(rad.ku(), 2.0);

        let sym = NoiseModel::two_point_adaptive(1.0, 0.5, 0.5).unwrap();
        for s in [NoiseState::Fresh, NoiseState::AfterUp, NoiseState::AfterDown] {
            let law = sym.law(s);
            assert_eq!((law.up, law.down), (1.0, -1.0));
        }
    }

    #[test]
    fn noise_construction_rejects_bad_parameters() {
        assert!(NoiseModel::rademacher(0.0).is_err());
        assert!(NoiseModel::two_point_adaptive(1.0, 0.0, 0.5).is_err());
        assert!(NoiseModel::two_point_adaptive(1.0, 0.6, 0.5).is_err());
        assert!(NoiseModel::two_point_adaptive(1.0, 0.2, 1.0).is_err());
    }

    #[test]
    fn draws_stay_within_ku_under_adversarial_histories() {
        let noise = NoiseModel::two_point_adaptive(1.3, 0.05, 0.9).unwrap();
        let mut stream = ReplicaStream::new(99, 3);
        let states = [NoiseState::Fresh, NoiseState::AfterUp, NoiseState::AfterDown];
        let mut max_abs: f64 = 0.0;
        for i in 0..1_000_000usize {
            // cycle states regardless of the actual outcome
            let (u, _) = noise.sample(states[i % 3], &mut stream);
            max_abs = max_abs.max(u.abs());
        }
        assert!(max_abs <= noise.ku());
        // the p_min branch is the extreme one here: σ√((1−p_min)/p_min)
        assert!((noise.ku() - 1.3 * (0.95f64 / 0.05).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mdp_regime_check() {
        let drift = DriftFunction::linear(-1.0, 0.0).unwrap();
        let noise = NoiseModel::rademacher(1.0).unwrap();
        assert!(ProblemSpec::new(drift, noise, 2.0, 1.0).unwrap().require_mdp().is_ok());
        assert!(ProblemSpec::new(drift, noise, 1.0, 1.0).unwrap().require_mdp().is_err());
        assert!(ProblemSpec::new(drift, noise, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn conditional_moments_are_exact(sigma in 0.01f64..10.0, p_min in 0.01f64..0.99, width in 0.0f64..1.0) {
            let p_max = (p_min + width * (0.99 - p_min)).min(0.99);
            let noise = NoiseModel::two_point_adaptive(sigma, p_min, p_max).unwrap();
            for s in [NoiseState::Fresh, NoiseState::AfterUp, NoiseState::AfterDown] {
                let law = noise.law(s);
                prop_assert!(law.mean().abs() <= 1e-12 * sigma);
                prop_assert!((law.second_moment() - sigma * sigma).abs() <= 1e-12 * sigma * sigma);
                prop_assert!(law.up.abs() <= noise.ku() * (1.0 + 1e-15));
                prop_assert!(law.down.abs() <= noise.ku() * (1.0 + 1e-15));
            }
        }

        #[test]
        fn sine_linear_conditions_hold(c2 in 0.01f64..5.0, gap in 0.01f64..5.0, xs in -10.0f64..10.0) {
            let drift = DriftFunction::sine_linear(c2 + gap, c2, xs).unwrap();
            let report = drift.validate(15.0, 301).unwrap();
            prop_assert!(report.passed(), "{:?}", report);
        }
    }
}
