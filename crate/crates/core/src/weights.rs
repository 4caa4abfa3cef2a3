//! Product weights `β_k^n(c) = ∏_{j=k}^n (1 + c/(j+1))` and the normalizer
//! `h_n = (b² Σ_{k=0}^n (k+1)^{-2} (β_{k+1}^n(c))²)^{-1/2}`.
//!
//! For `c < -1` the leading factors `1 + c/(j+1)` are zero or negative, so
//! products are carried as a sign together with a log-magnitude.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{invalid, Result};

/// Sign of a [`SignedLogValue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Zero => 0.0,
            Sign::Positive => 1.0,
        }
    }

    fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }
}

/// A real number stored as `sign · exp(log_magnitude)`.
///
/// `sign` is [`Sign::Zero`] exactly when `log_magnitude` is `-∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLogValue {
    log_magnitude: f64,
    sign: Sign,
}

impl SignedLogValue {
    pub const ONE: SignedLogValue = SignedLogValue {
        log_magnitude: 0.0,
        sign: Sign::Positive,
    };

    pub const ZERO: SignedLogValue = SignedLogValue {
        log_magnitude: f64::NEG_INFINITY,
        sign: Sign::Zero,
    };

    pub fn from_f64(x: f64) -> SignedLogValue {
        match x.partial_cmp(&0.0) {
            Some(Ordering::Greater) => SignedLogValue {
                log_magnitude: x.ln(),
                sign: Sign::Positive,
            },
            Some(Ordering::Less) => SignedLogValue {
                log_magnitude: (-x).ln(),
                sign: Sign::Negative,
            },
            _ => SignedLogValue::ZERO,
        }
    }

    pub fn log_magnitude(&self) -> f64 {
        self.log_magnitude
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn is_zero(&self) -> bool {
        self.sign == Sign::Zero
    }

    /// Materializes the value; may underflow to `±0` or overflow to `±∞`.
    pub fn to_f64(&self) -> f64 {
        match self.sign {
            Sign::Zero => 0.0,
            s => s.as_f64() * self.log_magnitude.exp(),
        }
    }

    /// Multiplies by the factor `1 + q`, using `ln_1p` while the factor is positive.
    fn mul_one_plus(self, q: f64) -> SignedLogValue {
        if self.is_zero() {
            return self;
        }
        let factor = 1.0 + q;
        if factor == 0.0 {
            SignedLogValue::ZERO
        } else if factor > 0.0 {
            SignedLogValue {
                log_magnitude: self.log_magnitude + q.ln_1p(),
                sign: self.sign,
            }
        } else {
            SignedLogValue {
                log_magnitude: self.log_magnitude + (-factor).ln(),
                sign: self.sign.flip(),
            }
        }
    }
}

impl std::ops::Mul for SignedLogValue {
    type Output = SignedLogValue;

    fn mul(self, rhs: SignedLogValue) -> SignedLogValue {
        if self.is_zero() || rhs.is_zero() {
            return SignedLogValue::ZERO;
        }
        let sign = if self.sign == rhs.sign {
            Sign::Positive
        } else {
            Sign::Negative
        };
        SignedLogValue {
            log_magnitude: self.log_magnitude + rhs.log_magnitude,
            sign,
        }
    }
}

impl fmt::Display for SignedLogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            Sign::Zero => write!(f, "0"),
            Sign::Positive => write!(f, "exp({})", self.log_magnitude),
            Sign::Negative => write!(f, "-exp({})", self.log_magnitude),
        }
    }
}

/// Parameters of a weight family: exponent `c`, horizon `n`, gain `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    c: f64,
    n: u64,
    b: f64,
}

impl WeightParams {
    pub fn new(c: f64, n: u64, b: f64) -> Result<WeightParams> {
        if !(c.is_finite() && c < 0.0) {
            return Err(invalid("c", format!("{c} is not a negative real")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(invalid("b", format!("{b} is not a positive real")));
        }
        Ok(WeightParams { c, n, b })
    }

    /// As [`WeightParams::new`], additionally requiring `c < -1`.
    pub fn for_mdp(c: f64, n: u64, b: f64) -> Result<WeightParams> {
        if c >= -1.0 {
            return Err(crate::Error::NotMdpRegime { exponent: c });
        }
        WeightParams::new(c, n, b)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn weight_sum(&self) -> f64 {
        weight_sum(self.c, self.n)
    }

    pub fn h_norm(&self) -> f64 {
        h_norm(self.b, self.c, self.n)
    }
}

#[inline]
fn factor_ratio(c: f64, j: u64) -> f64 {
    c / (j + 1) as f64
}

/// `β_k^n(c) = ∏_{j=k}^n (1 + c/(j+1))`, factor by factor in sign/log space.
///
/// `k > n` gives the empty product 1.
pub fn beta(c: f64, k: u64, n: u64) -> SignedLogValue {
    let mut acc = SignedLogValue::ONE;
    if k > n {
        return acc;
    }
    for j in k..=n {
        acc = acc.mul_one_plus(factor_ratio(c, j));
        if acc.is_zero() {
            break;
        }
    }
    acc
}

/// `(−2c−1) ∨ 1`, the smallest admissible `k` of the sandwich bounds.
pub fn sandwich_floor(c: f64) -> f64 {
    (-2.0 * c - 1.0).max(1.0)
}

/// Sandwich `(lower, upper)` with `lower ≤ β_k^n(c) ≤ upper`:
///
/// ```text
/// exp(−c²/((−2c−1)∨1)) · ((n+1)/k)^c  ≤  β_k^n(c)  ≤  (n/(k+1))^c
/// ```
///
/// Only proved for `n ≥ 1` and `(−2c−1)∨1 ≤ k ≤ n`; other `k` are rejected.
pub fn beta_bounds(c: f64, k: u64, n: u64) -> Result<(f64, f64)> {
    if !(c.is_finite() && c < 0.0) {
        return Err(invalid("c", format!("{c} is not a negative real")));
    }
    if n < 1 {
        return Err(invalid("n", "sandwich needs n >= 1"));
    }
    let floor = sandwich_floor(c);
    if (k as f64) < floor || k > n {
        return Err(invalid(
            "k",
            format!("{k} outside the sandwich range [{floor}, {n}]"),
        ));
    }
    let (kf, nf) = (k as f64, n as f64);
    let lower = (-c * c / floor).exp() * ((nf + 1.0) / kf).powf(c);
    let upper = (nf / (kf + 1.0)).powf(c);
    Ok((lower, upper))
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// `S_n = Σ_{k=0}^n (k+1)^{-2} (β_{k+1}^n(c))²`, one backward sweep in log space.
///
/// Always positive: the `k = n` term is `(n+1)^{-2}`.
pub fn weight_sum(c: f64, n: u64) -> f64 {
    let mut sum = CompensatedSum::default();
    // running value is β_{k+1}^n
    let mut running = SignedLogValue::ONE;
    for k in (0..=n).rev() {
        if running.is_zero() {
            break;
        }
        let log_term = 2.0 * (running.log_magnitude() - ((k + 1) as f64).ln());
        sum.add(log_term.exp());
        running = running.mul_one_plus(factor_ratio(c, k));
    }
    sum.value()
}

/// `h_n = (b² S_n)^{-1/2}`.
pub fn h_norm(b: f64, c: f64, n: u64) -> f64 {
    1.0 / (b * weight_sum(c, n).sqrt())
}

/// Large-`n` reference `sqrt((−2c−1)·n)/b` for [`h_norm`]; needs `c < −1/2`.
pub fn h_asymptotic(b: f64, c: f64, n: u64) -> Result<f64> {
    if !(c < -0.5) {
        return Err(invalid("c", format!("{c} must be < -1/2")));
    }
    Ok(((-2.0 * c - 1.0) * n as f64).sqrt() / b)
}

/// Gains `w_k = b/(k+1) · β_{k+1}^n(c)` for `k = 0..=n`, so that the weighted
/// martingale sum is `Σ_k w_k U_{k+1}`.
///
/// Plain `f64` backward product: entries far below the `k = n` term may
/// underflow to zero, which is harmless for the sums they feed.
pub fn gain_weights(b: f64, c: f64, n: u64) -> Vec<f64> {
    let len = usize::try_from(n + 1).expect("horizon fits in memory");
    let mut out = vec![0.0; len];
    let mut running = 1.0;
    for k in (0..len).rev() {
        out[k] = b / (k + 1) as f64 * running;
        running *= 1.0 + factor_ratio(c, k as u64);
    }
    out
}
