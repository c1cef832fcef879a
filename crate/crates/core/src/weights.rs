//! Weight sequences for weighted shifts: rule forms, validation, and
//! memoized prefix sums of `ln w_j`.
//!
//! Weights are real and strictly positive. Complex weights are excluded at
//! construction: a weighted shift is unitarily equivalent to the shift with
//! `|w_n|` weights, so nothing is lost for the norms computed here.

use std::fmt;
use std::str::FromStr;
use std::sync::RwLock;

use thiserror::Error;

/// Hard cap on the memoized prefix-log table (entries), grown on demand.
const TABLE_CAP: u64 = 4_000_000;
/// Default horizon for numeric monotonicity / band verification.
pub const DEFAULT_CHECK_HORIZON: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("weight rule undefined or nonpositive at n = {n} (w = {value})")]
    InvalidAt { n: u64, value: f64 },
    #[error("weights claimed monotone but increase between indices {n} and {}", n + 1)]
    MonotoneViolation { n: u64 },
    #[error("band condition 1/(n+2*m0) <= w_(n+m0) <= 1/n fails at n = {n}")]
    BandViolation { n: u64 },
    #[error("prefix-log table would exceed {TABLE_CAP} entries (requested {requested})")]
    HorizonExceeded { requested: u64 },
    #[error("cannot parse weight rule: {0}")]
    Parse(String),
}

/// Rule generating a weight sequence `w_0, w_1, ...`.
///
/// Forward shifts read indices from 0, backward shifts from 1; both
/// conventions share one underlying sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightRule {
    /// `w_n = 1/(n + c)`, `c > 0`.
    HarmonicOffset { c: f64 },
    /// `w_n = (n!/(n+1)!)^power = (n+1)^(-power)`, so the cumulative
    /// products are reciprocal powers of factorials.
    ReciprocalFactorialRatio { power: f64 },
    /// Any inner rule together with the banding parameter `m0` asserting
    /// `1/(n + 2 m0) <= w_(n+m0) <= 1/n` for all `n >= 1`.
    Band { m0: u32, inner: Box<WeightRule> },
    /// Explicit leading weights, then a rule for the tail (evaluated at
    /// the absolute index).
    Explicit { prefix: Vec<f64>, tail: Box<WeightRule> },
}

impl WeightRule {
    fn eval(&self, n: u64) -> f64 {
        match self {
            WeightRule::HarmonicOffset { c } => 1.0 / (n as f64 + c),
            WeightRule::ReciprocalFactorialRatio { power } => (n as f64 + 1.0).powf(-power),
            WeightRule::Band { inner, .. } => inner.eval(n),
            WeightRule::Explicit { prefix, tail } => {
                if (n as usize) < prefix.len() {
                    prefix[n as usize]
                } else {
                    tail.eval(n)
                }
            }
        }
    }

    /// Index from which the sequence is certified nonincreasing, if any.
    fn decreasing_from(&self) -> Option<u64> {
        match self {
            WeightRule::HarmonicOffset { c } if *c > 0.0 => Some(0),
            WeightRule::HarmonicOffset { .. } => None,
            WeightRule::ReciprocalFactorialRatio { power } if *power > 0.0 => Some(0),
            WeightRule::ReciprocalFactorialRatio { .. } => None,
            WeightRule::Band { inner, .. } => inner.decreasing_from(),
            WeightRule::Explicit { prefix, tail } => {
                let tail_from = tail.decreasing_from()?;
                let len = prefix.len() as u64;
                let mut from = tail_from.max(len);
                // pull the certificate into the prefix as far as it holds
                if from == len && !prefix.is_empty() {
                    if prefix[prefix.len() - 1] >= tail.eval(len) {
                        let mut i = prefix.len() - 1;
                        while i > 0 && prefix[i - 1] >= prefix[i] {
                            i -= 1;
                        }
                        from = i as u64;
                    }
                }
                Some(from)
            }
        }
    }

    /// Certified `w_n >= 1/(n + shift)` for all `n >= from`.
    fn lower_reciprocal(&self) -> Option<ReciprocalBound> {
        match self {
            WeightRule::HarmonicOffset { c } => Some(ReciprocalBound { shift: *c, from: 0 }),
            WeightRule::ReciprocalFactorialRatio { power } if *power <= 1.0 => {
                // (n+1)^-power >= 1/(n+1) for power <= 1, n >= 0
                Some(ReciprocalBound { shift: 1.0, from: 0 })
            }
            WeightRule::ReciprocalFactorialRatio { .. } => None,
            WeightRule::Band { m0, .. } => {
                Some(ReciprocalBound { shift: *m0 as f64, from: *m0 as u64 + 1 })
            }
            WeightRule::Explicit { prefix, tail } => {
                let b = tail.lower_reciprocal()?;
                Some(ReciprocalBound { shift: b.shift, from: b.from.max(prefix.len() as u64) })
            }
        }
    }

    /// Certified `w_n <= 1/(n + shift)` for all `n >= from` (shift may be
    /// negative, as for banded rules).
    fn upper_reciprocal(&self) -> Option<ReciprocalBound> {
        match self {
            WeightRule::HarmonicOffset { c } => Some(ReciprocalBound { shift: *c, from: 0 }),
            WeightRule::ReciprocalFactorialRatio { power } if *power >= 1.0 => {
                Some(ReciprocalBound { shift: 1.0, from: 0 })
            }
            WeightRule::ReciprocalFactorialRatio { .. } => None,
            WeightRule::Band { m0, .. } => {
                Some(ReciprocalBound { shift: -(*m0 as f64), from: *m0 as u64 + 1 })
            }
            WeightRule::Explicit { prefix, tail } => {
                let b = tail.upper_reciprocal()?;
                Some(ReciprocalBound { shift: b.shift, from: b.from.max(prefix.len() as u64) })
            }
        }
    }

    fn band_m0(&self) -> Option<u32> {
        match self {
            WeightRule::Band { m0, .. } => Some(*m0),
            WeightRule::Explicit { tail, .. } => tail.band_m0(),
            _ => None,
        }
    }
}

impl fmt::Display for WeightRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightRule::HarmonicOffset { c } => write!(f, "harmonic:c={c}"),
            WeightRule::ReciprocalFactorialRatio { power } => write!(f, "recfact:power={power}"),
            WeightRule::Band { m0, inner } => write!(f, "band:m0={m0},rule={inner}"),
            WeightRule::Explicit { prefix, tail } => {
                write!(f, "explicit:[")?;
                for (i, w) in prefix.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{w}")?;
                }
                write!(f, "];tail={tail}")
            }
        }
    }
}

impl FromStr for WeightRule {
    type Err = WeightError;

    /// Accepts `harmonic:c=1`, `recfact:power=2`,
    /// `band:m0=2,rule=<rule>`, `explicit:[1,0.5];tail=<rule>`.
    fn from_str(s: &str) -> Result<Self, WeightError> {
        let bad = |m: &str| WeightError::Parse(format!("{m} in {s:?}"));
        let (head, rest) = s.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        match head {
            "harmonic" => {
                let c = rest
                    .strip_prefix("c=")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| bad("expected c=<real>"))?;
                Ok(WeightRule::HarmonicOffset { c })
            }
            "recfact" => {
                let power = rest
                    .strip_prefix("power=")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| bad("expected power=<real>"))?;
                Ok(WeightRule::ReciprocalFactorialRatio { power })
            }
            "band" => {
                let rest = rest.strip_prefix("m0=").ok_or_else(|| bad("expected m0=<int>"))?;
                let (m0s, inner) =
                    rest.split_once(",rule=").ok_or_else(|| bad("expected ,rule=<rule>"))?;
                let m0 = m0s.parse::<u32>().map_err(|_| bad("bad m0"))?;
                Ok(WeightRule::Band { m0, inner: Box::new(inner.parse()?) })
            }
            "explicit" => {
                let rest = rest.strip_prefix('[').ok_or_else(|| bad("expected ["))?;
                let (list, tail) =
                    rest.split_once("];tail=").ok_or_else(|| bad("expected ];tail=<rule>"))?;
                let prefix: Vec<f64> = if list.trim().is_empty() {
                    Vec::new()
                } else {
                    list.split(',')
                        .map(|v| v.trim().parse::<f64>().map_err(|_| bad("bad prefix entry")))
                        .collect::<Result<_, _>>()?
                };
                Ok(WeightRule::Explicit { prefix, tail: Box::new(tail.parse()?) })
            }
            _ => Err(bad("unknown rule kind")),
        }
    }
}

/// A one-sided bound of the form `w_n {<=,>=} 1/(n + shift)` valid for
/// `n >= from`. Drives the rigorous tail estimates for factorial-type
/// series in the resolvent evaluators.
#[derive(Clone, Copy, Debug)]
pub struct ReciprocalBound {
    pub shift: f64,
    pub from: u64,
}

/// A validated, immutable weight sequence with memoized prefix log-sums.
///
/// Read access is safe from any number of threads; the memo table grows
/// under an internal write lock.
#[derive(Debug)]
pub struct WeightSequence {
    rule: WeightRule,
    claimed_monotone: bool,
    decreasing_from: Option<u64>,
    // prefix[k] = sum_{j<k} ln w_j; prefix[0] = 0
    prefix: RwLock<Vec<f64>>,
}

impl WeightSequence {
    /// Validates and builds a sequence. `claimed_monotone` is verified
    /// numerically up to [`DEFAULT_CHECK_HORIZON`]; banded rules have the
    /// band inequality checked over the same range.
    pub fn new(rule: WeightRule, claimed_monotone: bool) -> Result<Self, WeightError> {
        Self::with_horizon(rule, claimed_monotone, DEFAULT_CHECK_HORIZON)
    }

    pub fn with_horizon(
        rule: WeightRule,
        claimed_monotone: bool,
        horizon: u64,
    ) -> Result<Self, WeightError> {
        // probe positivity on small indices and a log-spaced sample
        for n in (0..64).chain([100, 1_000, 10_000, 100_000, 1_000_000]) {
            let w = rule.eval(n);
            if !(w > 0.0) || !w.is_finite() {
                return Err(WeightError::InvalidAt { n, value: w });
            }
        }
        if claimed_monotone {
            let mut prev = rule.eval(0);
            for n in 1..=horizon {
                let w = rule.eval(n);
                if w > prev {
                    return Err(WeightError::MonotoneViolation { n: n - 1 });
                }
                prev = w;
            }
        }
        if let Some(m0) = rule.band_m0() {
            let m0 = m0 as u64;
            for n in 1..=horizon {
                let w = rule.eval(n + m0);
                if w > 1.0 / n as f64 || w < 1.0 / (n + 2 * m0) as f64 {
                    return Err(WeightError::BandViolation { n });
                }
            }
        }
        let decreasing_from = rule.decreasing_from();
        if claimed_monotone && decreasing_from != Some(0) {
            // numeric check passed but no structural certificate; trust the scan
        }
        Ok(WeightSequence {
            rule,
            claimed_monotone,
            decreasing_from,
            prefix: RwLock::new(vec![0.0]),
        })
    }

    pub fn parse(spec: &str, claimed_monotone: bool) -> Result<Self, WeightError> {
        Self::new(spec.parse()?, claimed_monotone)
    }

    pub fn rule(&self) -> &WeightRule {
        &self.rule
    }

    pub fn claimed_monotone(&self) -> bool {
        self.claimed_monotone
    }

    pub fn weight(&self, n: u64) -> f64 {
        self.rule.eval(n)
    }

    pub fn ln_weight(&self, n: u64) -> f64 {
        self.rule.eval(n).ln()
    }

    /// Index from which the sequence is certified nonincreasing. A fully
    /// monotone sequence reports 0.
    pub fn decreasing_from(&self) -> Option<u64> {
        if self.claimed_monotone {
            Some(0)
        } else {
            self.decreasing_from
        }
    }

    pub fn lower_reciprocal(&self) -> Option<ReciprocalBound> {
        self.rule.lower_reciprocal()
    }

    pub fn upper_reciprocal(&self) -> Option<ReciprocalBound> {
        self.rule.upper_reciprocal()
    }

    pub fn band_m0(&self) -> Option<u32> {
        self.rule.band_m0()
    }

    /// `sum_{j=0}^{k-1} ln w_j` (so `prefix_ln(0) = 0`).
    pub fn prefix_ln(&self, k: u64) -> Result<f64, WeightError> {
        if k >= TABLE_CAP {
            return Err(WeightError::HorizonExceeded { requested: k });
        }
        {
            let t = self.prefix.read().expect("prefix lock poisoned");
            if (k as usize) < t.len() {
                return Ok(t[k as usize]);
            }
        }
        let mut t = self.prefix.write().expect("prefix lock poisoned");
        while t.len() <= k as usize {
            let n = (t.len() - 1) as u64;
            let next = t[t.len() - 1] + self.ln_weight(n);
            t.push(next);
        }
        Ok(t[k as usize])
    }

    /// `ln prod_{j=start}^{start+len-1} w_j` via prefix sums.
    pub fn ln_window(&self, start: u64, len: u64) -> Result<f64, WeightError> {
        Ok(self.prefix_ln(start + len)? - self.prefix_ln(start)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_values() {
        let w = WeightSequence::parse("harmonic:c=1", true).unwrap();
        assert_eq!(w.weight(0), 1.0);
        assert_eq!(w.weight(1), 0.5);
        assert_eq!(w.weight(5), 1.0 / 6.0);
    }

    #[test]
    fn harmonic_c0_rejected() {
        // w_0 = 1/0 is undefined; the rule is excluded at construction
        let err = WeightSequence::parse("harmonic:c=0", false).unwrap_err();
        assert!(matches!(err, WeightError::InvalidAt { n: 0, .. }));
    }

    #[test]
    fn monotone_claim_verified() {
        let rule = WeightRule::Explicit {
            prefix: vec![0.5, 0.9],
            tail: Box::new(WeightRule::HarmonicOffset { c: 1.0 }),
        };
        let err = WeightSequence::with_horizon(rule, true, 1000).unwrap_err();
        assert!(matches!(err, WeightError::MonotoneViolation { n: 0 }));
    }

    #[test]
    fn band_holds_for_harmonic_m0_1() {
        // w_(n+1) = 1/(n+2) sits exactly on the lower edge 1/(n+2*1)
        let w = WeightSequence::parse("band:m0=1,rule=harmonic:c=1", true).unwrap();
        assert_eq!(w.band_m0(), Some(1));
    }

    #[test]
    fn band_violation_detected() {
        let rule = WeightRule::Band {
            m0: 1,
            inner: Box::new(WeightRule::ReciprocalFactorialRatio { power: 2.0 }),
        };
        let err = WeightSequence::with_horizon(rule, false, 1000).unwrap_err();
        assert!(matches!(err, WeightError::BandViolation { .. }));
    }

    #[test]
    fn prefix_sums_match_direct_products() {
        let w = WeightSequence::parse("harmonic:c=1", true).unwrap();
        // prod_{j=0}^{2} w_j = 1 * 1/2 * 1/3 = 1/6
        let ln = w.prefix_ln(3).unwrap();
        assert!((ln - (1.0f64 / 6.0).ln()).abs() < 1e-14);
        let win = w.ln_window(1, 2).unwrap();
        assert!((win - (1.0f64 / 6.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn explicit_prefix_then_tail() {
        let w = WeightSequence::parse("explicit:[2,1.5];tail=harmonic:c=1", false).unwrap();
        assert_eq!(w.weight(0), 2.0);
        assert_eq!(w.weight(1), 1.5);
        assert_eq!(w.weight(2), 1.0 / 3.0);
        assert_eq!(w.decreasing_from(), Some(0));
    }

    #[test]
    fn rule_roundtrips_through_display() {
        for s in [
            "harmonic:c=1",
            "recfact:power=2",
            "band:m0=2,rule=harmonic:c=1",
            "explicit:[1,0.5];tail=harmonic:c=2",
        ] {
            let rule: WeightRule = s.parse().unwrap();
            assert_eq!(rule.to_string(), s);
        }
    }

    #[test]
    fn reciprocal_bounds() {
        let w = WeightSequence::parse("harmonic:c=1", true).unwrap();
        let lo = w.lower_reciprocal().unwrap();
        let hi = w.upper_reciprocal().unwrap();
        assert_eq!(lo.shift, 1.0);
        assert_eq!(hi.shift, 1.0);
        let w2 = WeightSequence::parse("recfact:power=2", true).unwrap();
        assert!(w2.lower_reciprocal().is_none());
        assert!(w2.upper_reciprocal().is_some());
    }
}
