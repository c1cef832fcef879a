//! Arithmetic on nonnegative reals represented by their natural logarithms.
//!
//! Every norm, series term, and resolvent magnitude in this crate is a
//! [`LogMag`]. Quantities like `e^(1/|z|)` at `|z| = 1e-3` have logarithms
//! near 1000 and cannot be held in an `f64` directly; their logs can.

use thiserror::Error;

/// A nonnegative real number stored as its natural logarithm.
///
/// Exact zero is represented by `ln = -inf`, so ordering and the
/// `log_add`/`log_sub` kernels treat it uniformly.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogMag(f64);

impl LogMag {
    /// Exact zero.
    pub const ZERO: LogMag = LogMag(f64::NEG_INFINITY);
    /// Exact one (`ln 1 = 0`).
    pub const ONE: LogMag = LogMag(0.0);

    /// Wraps a raw natural logarithm.
    pub fn from_ln(ln: f64) -> Self {
        debug_assert!(!ln.is_nan());
        LogMag(ln)
    }

    /// Converts a nonnegative real. `0.0` maps to [`LogMag::ZERO`].
    pub fn from_real(x: f64) -> Self {
        assert!(x >= 0.0, "LogMag::from_real requires x >= 0, got {x}");
        LogMag(x.ln())
    }

    pub fn is_zero(&self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// The stored logarithm. `-inf` when the value is zero.
    pub fn ln_value(&self) -> f64 {
        self.0
    }

    /// Back to a plain real. Overflows to `inf` past `ln ~ 709`.
    pub fn to_real(&self) -> f64 {
        self.0.exp()
    }

    /// Raises to a real power `s >= 0` (multiplies the log).
    pub fn pow(&self, s: f64) -> Self {
        if self.is_zero() {
            return LogMag::ZERO;
        }
        LogMag(self.0 * s)
    }
}

impl std::ops::Mul for LogMag {
    type Output = LogMag;
    fn mul(self, rhs: LogMag) -> LogMag {
        if self.is_zero() || rhs.is_zero() {
            return LogMag::ZERO;
        }
        LogMag(self.0 + rhs.0)
    }
}

impl std::ops::Div for LogMag {
    type Output = LogMag;
    fn div(self, rhs: LogMag) -> LogMag {
        assert!(!rhs.is_zero(), "division by zero LogMag");
        if self.is_zero() {
            return LogMag::ZERO;
        }
        LogMag(self.0 - rhs.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LogDomainError {
    /// `log_sub(a, b)` needs `a >= b`.
    #[error("log_sub order violation: minuend ln {minuend} < subtrahend ln {subtrahend}")]
    OrderViolation { minuend: f64, subtrahend: f64 },
}

/// Result of [`log_sub`]. When the operands agree to better than `1e-12`
/// in the log, the difference has lost essentially all significant digits
/// and `cancellation` is set; callers fall back to a non-subtractive route.
#[derive(Clone, Copy, Debug)]
pub struct SubResult {
    pub value: LogMag,
    pub cancellation: bool,
}

const CANCELLATION_GAP: f64 = 1e-12;

/// `ln(e^a + e^b)`, computed as `max + ln1p(e^(min-max))`.
pub fn log_add(a: LogMag, b: LogMag) -> LogMag {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    let (hi, lo) = if a.0 >= b.0 { (a.0, b.0) } else { (b.0, a.0) };
    LogMag(hi + (lo - hi).exp().ln_1p())
}

/// `ln(e^a - e^b)` for `a >= b`, via `a + ln(1 - e^(b-a))`.
///
/// Equal operands give exact zero. A gap below `1e-12` sets the
/// cancellation flag: the returned value is then unreliable.
pub fn log_sub(a: LogMag, b: LogMag) -> Result<SubResult, LogDomainError> {
    if b.is_zero() {
        return Ok(SubResult { value: a, cancellation: false });
    }
    if a.is_zero() || b.0 > a.0 {
        return Err(LogDomainError::OrderViolation { minuend: a.0, subtrahend: b.0 });
    }
    if a.0 == b.0 {
        return Ok(SubResult { value: LogMag::ZERO, cancellation: false });
    }
    let gap = a.0 - b.0;
    let value = LogMag(a.0 + (-(-gap).exp_m1()).ln());
    Ok(SubResult { value, cancellation: gap < CANCELLATION_GAP })
}

/// Streaming log-sum-exp with rescaling and compensated accumulation.
///
/// Terms are added as `e^(t - scale)` against a running scale that tracks
/// the maximum; the linear-domain partial sum uses Kahan compensation, so
/// roundoff stays near `n * eps` even over 1e5-term series.
#[derive(Clone, Debug)]
pub struct LogSumAccumulator {
    scale: f64,
    sum: f64,
    comp: f64,
    count: usize,
}

impl Default for LogSumAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumAccumulator {
    pub fn new() -> Self {
        LogSumAccumulator { scale: f64::NEG_INFINITY, sum: 0.0, comp: 0.0, count: 0 }
    }

    pub fn push(&mut self, term: LogMag) {
        if term.is_zero() {
            return;
        }
        self.count += 1;
        if term.0 > self.scale {
            if self.scale != f64::NEG_INFINITY {
                let f = (self.scale - term.0).exp();
                self.sum *= f;
                self.comp *= f;
            }
            self.scale = term.0;
            self.add_scaled(1.0);
        } else {
            self.add_scaled((term.0 - self.scale).exp());
        }
    }

    fn add_scaled(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> LogMag {
        if self.scale == f64::NEG_INFINITY {
            LogMag::ZERO
        } else {
            LogMag(self.scale + self.sum.ln())
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// `ln(k!)`, exact for small `k`, Stirling with Bernoulli corrections
/// above (absolute error below 1e-13 for k >= 32).
pub(crate) fn ln_factorial(k: u64) -> f64 {
    const TABLE_LEN: usize = 64;
    static SMALL: std::sync::OnceLock<[f64; TABLE_LEN]> = std::sync::OnceLock::new();
    let small = SMALL.get_or_init(|| {
        let mut t = [0.0; TABLE_LEN];
        let mut acc = 0.0;
        for (i, slot) in t.iter_mut().enumerate() {
            if i > 0 {
                acc += (i as f64).ln();
            }
            *slot = acc;
        }
        t
    });
    if (k as usize) < TABLE_LEN {
        return small[k as usize];
    }
    let x = k as f64 + 1.0;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    (x - 0.5) * x.ln() - x + 0.5 * ln_2pi + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
        + 1.0 / (1260.0 * x.powi(5))
}

/// Sums a series of nonnegative terms whose omitted tail the caller has
/// already bounded. Returns `(partial sum, tail_bound)` — the second
/// component is the guaranteed bound on the absolute truncation error.
pub fn log_sum_series(
    terms: impl IntoIterator<Item = LogMag>,
    tail_bound: LogMag,
) -> (LogMag, LogMag) {
    let mut acc = LogSumAccumulator::new();
    for t in terms {
        acc.push(t);
    }
    (acc.value(), tail_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn add_zero_is_identity() {
        let a = LogMag::from_real(1.0);
        assert_eq!(log_add(a, LogMag::ZERO), a);
        assert_eq!(log_add(LogMag::ZERO, a), a);
    }

    #[test]
    fn add_doubles() {
        let two = LogMag::from_real(2.0);
        let four = log_add(two, two);
        assert!((four.ln_value() - 4.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn add_extreme_scales() {
        // oracle: 100 + ln(1 + e^-100), evaluated at 60 digits; e^-100 is
        // below f64 resolution at this scale so the result rounds to 100.
        let r = log_add(LogMag::from_ln(100.0), LogMag::from_ln(0.0));
        assert!((r.ln_value() - 100.0).abs() < 1e-15);
    }

    #[test]
    fn sub_exact_cancellation() {
        let four = LogMag::from_real(4.0);
        let r = log_sub(four, four).unwrap();
        assert!(r.value.is_zero());
        assert!(!r.cancellation);
    }

    #[test]
    fn sub_small_integers() {
        let r = log_sub(LogMag::from_real(5.0), LogMag::from_real(1.0)).unwrap();
        assert!((r.value.ln_value() - 4.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn sub_large_scale() {
        // oracle (60-digit): 100 + ln(1 - e^-10) = 99.99995459903962951079
        let r = log_sub(LogMag::from_ln(100.0), LogMag::from_ln(90.0)).unwrap();
        assert!((r.value.ln_value() - 99.99995459903963).abs() < 1e-12);
        assert!(!r.cancellation);
    }

    #[test]
    fn sub_order_violation() {
        let r = log_sub(LogMag::from_real(1.0), LogMag::from_real(2.0));
        assert!(matches!(r, Err(LogDomainError::OrderViolation { .. })));
    }

    #[test]
    fn sub_flags_cancellation() {
        let a = LogMag::from_ln(1.0);
        let b = LogMag::from_ln(1.0 - 1e-13);
        assert!(log_sub(a, b).unwrap().cancellation);
    }

    #[test]
    fn series_empty() {
        let (s, e) = log_sum_series(std::iter::empty(), LogMag::ZERO);
        assert!(s.is_zero());
        assert!(e.is_zero());
    }

    #[test]
    fn series_small_integers() {
        let terms = [1.0, 2.0, 3.0].map(LogMag::from_real);
        let (s, _) = log_sum_series(terms, LogMag::ZERO);
        assert!((s.ln_value() - 6.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn series_exponential_identity() {
        // sum_{n<=30} 1/n! = e up to a tail below 1e-30
        let mut lnfact = 0.0;
        let terms: Vec<LogMag> = (0..=30u32)
            .map(|n| {
                if n > 0 {
                    lnfact += (n as f64).ln();
                }
                LogMag::from_ln(-lnfact)
            })
            .collect();
        let tail = LogMag::from_ln(-71.0); // 1/31! < e^-71
        let (s, e) = log_sum_series(terms, tail);
        assert!((s.ln_value() - 1.0).abs() < 1e-14);
        assert!(e.ln_value() < -70.0);
    }

    #[test]
    fn roundtrip_relative_error() {
        // exp(ln x) carries a relative error of about half an ulp of ln x,
        // so the achievable bound degrades linearly in |ln x|: ~1e-14 holds
        // through |ln x| <= 90, ~1.5e-13 out to the f64 range ends
        for exp10 in (-300i32..=300).step_by(20) {
            let x = 10f64.powi(exp10) * 1.7;
            let back = LogMag::from_real(x).to_real();
            let tol = if exp10.abs() <= 38 { 1e-14 } else { 1.5e-13 };
            assert!((back - x).abs() <= tol * x, "roundtrip failed at {x}");
        }
    }

    #[test]
    fn accumulator_matches_pairwise() {
        let mut acc = LogSumAccumulator::new();
        let mut pair = LogMag::ZERO;
        for i in 0..2000 {
            let t = LogMag::from_ln((i as f64 * 0.37).sin() * 300.0);
            acc.push(t);
            pair = log_add(pair, t);
        }
        assert!((acc.value().ln_value() - pair.ln_value()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn add_associative(a in -700.0..700.0f64, b in -700.0..700.0f64, c in -700.0..700.0f64) {
            let (a, b, c) = (LogMag::from_ln(a), LogMag::from_ln(b), LogMag::from_ln(c));
            let l = log_add(log_add(a, b), c);
            let r = log_add(a, log_add(b, c));
            prop_assert!((l.ln_value() - r.ln_value()).abs() <= 1e-12);
        }

        #[test]
        fn add_commutative(a in -700.0..700.0f64, b in -700.0..700.0f64) {
            let (a, b) = (LogMag::from_ln(a), LogMag::from_ln(b));
            prop_assert_eq!(log_add(a, b), log_add(b, a));
        }

        #[test]
        fn sub_inverts_add_away_from_cancellation(a in -300.0..300.0f64, d in 1.0..50.0f64) {
            // a > b by at least 1 in the log, so subtraction is well conditioned
            let b = LogMag::from_ln(a - d);
            let a = LogMag::from_ln(a);
            let s = log_sub(log_add(a, b), b).unwrap();
            prop_assert!(!s.cancellation);
            prop_assert!((s.value.ln_value() - a.ln_value()).abs() <= 1e-10);
        }

        #[test]
        fn add_monotone(a in -500.0..500.0f64, bump in 0.0..10.0f64, b in -500.0..500.0f64) {
            let lo = log_add(LogMag::from_ln(a), LogMag::from_ln(b));
            let hi = log_add(LogMag::from_ln(a + bump), LogMag::from_ln(b));
            prop_assert!(hi.ln_value() >= lo.ln_value() - 1e-13);
        }

        #[test]
        fn ln2_doubling(a in -600.0..600.0f64) {
            let x = LogMag::from_ln(a);
            let s = log_add(x, x);
            prop_assert!((s.ln_value() - (a + LN2)).abs() < 1e-13);
        }
    }
}
