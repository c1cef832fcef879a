//! Shift operators over weight sequences: power norms `||T^n||`, cumulative
//! beta products, and quasinilpotence diagnostics.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::logdomain::LogMag;
use crate::weights::{WeightError, WeightSequence};

#[derive(Debug, Error)]
pub enum ShiftError {
    /// No certificate that window products are eventually dominated, so the
    /// supremum over windows cannot be computed rigorously.
    #[error("power norm supremum not computable: no eventual-monotonicity certificate")]
    NonComputableSup,
    #[error("{kind} shift requires {requirement}")]
    InvalidOperator { kind: ShiftKind, requirement: &'static str },
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("cannot parse shift spec: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftKind {
    /// `T e_n = w_n e_(n+1)` on `l^p(N)`; weights indexed from 0.
    ForwardUnilateral,
    /// `T e_0 = 0`, `T e_n = w_n e_(n-1)` on `l^p(N)`; weights indexed from 1.
    BackwardUnilateral,
    /// The block bilateral shift on `l^p(Z)`: a backward block `B` on
    /// indices `<= 0`, a forward block `A` on indices `>= 1`, coupled by
    /// the rank-one map sending the index-0 coefficient to index 1. Both
    /// blocks draw from one weight sequence indexed from 1.
    BilateralBlock,
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ShiftKind::ForwardUnilateral => "forward",
            ShiftKind::BackwardUnilateral => "backward",
            ShiftKind::BilateralBlock => "bilateral",
        };
        f.write_str(s)
    }
}

/// Holder exponent pair `(p, q)` with `1/p + 1/q = 1`; `q` is infinite
/// when `p = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PNorm {
    p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DualExponent {
    Finite(f64),
    Infinity,
}

impl PNorm {
    pub fn new(p: f64) -> Result<Self, ShiftError> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(ShiftError::Parse(format!("p must be a real >= 1, got {p}")));
        }
        Ok(PNorm { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dual(&self) -> DualExponent {
        if self.p == 1.0 {
            DualExponent::Infinity
        } else {
            DualExponent::Finite(self.p / (self.p - 1.0))
        }
    }
}

/// Which cumulative product convention [`beta_product`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaConvention {
    /// `beta_n = w_0 w_1 ... w_(n-1)` (forward shifts; `T^n e_0 = beta_n e_n`).
    Forward,
    /// `prod_{j=1}^{n} w_j` (backward shifts and both bilateral blocks).
    Backward,
}

/// An immutable weighted shift. Cheap to clone; the weight table is shared.
#[derive(Clone, Debug)]
pub struct ShiftOperator {
    kind: ShiftKind,
    weights: Arc<WeightSequence>,
}

impl ShiftOperator {
    pub fn new(kind: ShiftKind, weights: WeightSequence) -> Result<Self, ShiftError> {
        if kind == ShiftKind::BilateralBlock && weights.decreasing_from() != Some(0) {
            return Err(ShiftError::InvalidOperator {
                kind,
                requirement: "a decreasing weight sequence",
            });
        }
        Ok(ShiftOperator { kind, weights: Arc::new(weights) })
    }

    /// Parses `"forward:harmonic:c=1"`, `"backward:harmonic:c=1"`,
    /// `"bilateral:harmonic:c=1"` and the other weight-rule forms.
    pub fn parse(spec: &str) -> Result<Self, ShiftError> {
        let (kind, rest) =
            spec.split_once(':').ok_or_else(|| ShiftError::Parse(format!("missing kind in {spec:?}")))?;
        let kind = match kind {
            "forward" => ShiftKind::ForwardUnilateral,
            "backward" => ShiftKind::BackwardUnilateral,
            "bilateral" => ShiftKind::BilateralBlock,
            other => return Err(ShiftError::Parse(format!("unknown shift kind {other:?}"))),
        };
        let rule = rest.parse().map_err(ShiftError::Weights)?;
        // decreasing weights are the common case for every scenario here;
        // claim monotone only when the rule certifies it structurally
        let probe = WeightSequence::with_horizon(rule, false, 0)?;
        let monotone = probe.decreasing_from() == Some(0);
        let weights = WeightSequence::new(probe.rule().clone(), monotone)?;
        Self::new(kind, weights)
    }

    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn weights(&self) -> &WeightSequence {
        &self.weights
    }

    pub fn spec_string(&self) -> String {
        format!("{}:{}", self.kind, self.weights.rule())
    }

    /// Reinterprets the same weight sequence under another shift kind.
    /// Used to evaluate the bilateral operator's two blocks.
    pub(crate) fn with_kind_shared(&self, kind: ShiftKind) -> ShiftOperator {
        ShiftOperator { kind, weights: Arc::clone(&self.weights) }
    }
}

impl FromStr for ShiftOperator {
    type Err = ShiftError;
    fn from_str(s: &str) -> Result<Self, ShiftError> {
        ShiftOperator::parse(s)
    }
}

/// Cumulative weight product in log domain. `beta_product(w, 0, _) = 1`.
pub fn beta_product(
    weights: &WeightSequence,
    n: u64,
    convention: BetaConvention,
) -> Result<LogMag, WeightError> {
    let ln = match convention {
        BetaConvention::Forward => weights.prefix_ln(n)?,
        BetaConvention::Backward => weights.prefix_ln(n + 1)? - weights.prefix_ln(1)?,
    };
    Ok(LogMag::from_ln(ln))
}

/// `||T^n|| = sup_k prod_(j in window k of length n) w_j`.
///
/// For weights nonincreasing from index `d`, every window starting past
/// `d` is dominated by the window at `d`, so a finite scan suffices.
pub fn power_norm(t: &ShiftOperator, n: u64) -> Result<LogMag, ShiftError> {
    assert!(n >= 1, "power_norm requires n >= 1");
    let w = t.weights();
    let d = w.decreasing_from().ok_or(ShiftError::NonComputableSup)?;
    let ln = match t.kind() {
        ShiftKind::ForwardUnilateral => {
            // windows start at s >= 0
            let mut best = f64::NEG_INFINITY;
            for s in 0..=d {
                best = best.max(w.ln_window(s, n)?);
            }
            best
        }
        ShiftKind::BackwardUnilateral => {
            // windows start at s >= 1
            let mut best = f64::NEG_INFINITY;
            for s in 1..=d.max(1) {
                best = best.max(w.ln_window(s, n)?);
            }
            best
        }
        ShiftKind::BilateralBlock => {
            // effective bilateral weights: 1 at index 0, w_|j| elsewhere.
            // Windows crossing 0 use prod_{1..a} * prod_{1..b} with
            // a + b = n - 1; one-sided windows are dominated by s = 1.
            let s1 = w.prefix_ln(1)?;
            let side = w.prefix_ln(n + 1)? - s1; // window at s = 1
            let mut best = side;
            for a in 0..n {
                let b = n - 1 - a;
                let v = (w.prefix_ln(a + 1)? - s1) + (w.prefix_ln(b + 1)? - s1);
                best = best.max(v);
            }
            best
        }
    };
    Ok(LogMag::from_ln(ln))
}

/// The `n`-th root sequence `||T^n||^(1/n)` over `n = 1..=n_max`,
/// reported in log domain, with a flag for monotone decay below 1.
#[derive(Clone, Debug)]
pub struct QuasinilpotenceReport {
    /// `(n, ln ||T^n|| / n)` samples.
    pub root_ln: Vec<(u64, f64)>,
    /// Whether the sequence is nonincreasing over the tested range.
    pub decreasing: bool,
    /// Whether every sample past the first is below 0 in the log
    /// (i.e. `||T^n||^(1/n) < 1`).
    pub below_one: bool,
}

pub fn quasinilpotence_report(
    t: &ShiftOperator,
    n_max: u64,
) -> Result<QuasinilpotenceReport, ShiftError> {
    assert!(n_max >= 2, "quasinilpotence_report requires n_max >= 2");
    let mut root_ln = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let ln = power_norm(t, n)?.ln_value();
        root_ln.push((n, ln / n as f64));
    }
    let decreasing = root_ln.windows(2).all(|p| p[1].1 <= p[0].1 + 1e-12);
    let below_one = root_ln.iter().skip(1).all(|&(_, v)| v < 0.0);
    Ok(QuasinilpotenceReport { root_ln, decreasing, below_one })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forward_harmonic() -> ShiftOperator {
        ShiftOperator::parse("forward:harmonic:c=1").unwrap()
    }

    fn backward_harmonic() -> ShiftOperator {
        ShiftOperator::parse("backward:harmonic:c=1").unwrap()
    }

    #[test]
    fn beta_empty_product_is_one() {
        let t = forward_harmonic();
        let b = beta_product(t.weights(), 0, BetaConvention::Forward).unwrap();
        assert_eq!(b, LogMag::ONE);
    }

    #[test]
    fn beta_forward_harmonic() {
        // 1 * 1/2 * 1/3 = 1/6
        let t = forward_harmonic();
        let b = beta_product(t.weights(), 3, BetaConvention::Forward).unwrap();
        assert!((b.ln_value() - (1.0f64 / 6.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn beta_backward_harmonic() {
        // prod_{j=1}^{5} 1/(j+1) = 1/720
        let t = backward_harmonic();
        let b = beta_product(t.weights(), 5, BetaConvention::Backward).unwrap();
        assert!((b.ln_value() - (1.0f64 / 720.0).ln()).abs() < 1e-13);
    }

    #[test]
    fn beta_recurrence() {
        let t = forward_harmonic();
        for n in 0..100u64 {
            let b0 = beta_product(t.weights(), n, BetaConvention::Forward).unwrap();
            let b1 = beta_product(t.weights(), n + 1, BetaConvention::Forward).unwrap();
            let step = b0.ln_value() + t.weights().ln_weight(n);
            assert!((b1.ln_value() - step).abs() < 1e-12);
        }
    }

    #[test]
    fn power_norm_forward_initial_window() {
        let t = forward_harmonic();
        assert!((power_norm(&t, 1).unwrap().ln_value() - 0.0).abs() < 1e-15); // w_0 = 1
        let p3 = power_norm(&t, 3).unwrap();
        assert!((p3.ln_value() - (1.0f64 / 6.0).ln()).abs() < 1e-14);
        // for decreasing weights the power norm equals the beta product
        for n in 1..=100u64 {
            let pn = power_norm(&t, n).unwrap();
            let b = beta_product(t.weights(), n, BetaConvention::Forward).unwrap();
            assert!((pn.ln_value() - b.ln_value()).abs() < 1e-11);
        }
    }

    #[test]
    fn power_norm_backward_initial_window() {
        let t = backward_harmonic();
        // w_1 w_2 = (1/2)(1/3) = 1/6
        let p2 = power_norm(&t, 2).unwrap();
        assert!((p2.ln_value() - (1.0f64 / 6.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn power_norm_explicit_prefix_scan() {
        // large early weight: the sup window is not the initial one
        let t = ShiftOperator::parse("forward:explicit:[0.1,5,4];tail=harmonic:c=1").unwrap();
        let p2 = power_norm(&t, 2).unwrap();
        assert!((p2.ln_value() - 20.0f64.ln()).abs() < 1e-13); // 5*4
    }

    #[test]
    fn power_norm_bilateral_crossing_window() {
        let t = ShiftOperator::parse("bilateral:harmonic:c=1").unwrap();
        // n=3: best window crosses index 0: w_1 * 1 * w_1 = 1/4
        let p3 = power_norm(&t, 3).unwrap();
        assert!((p3.ln_value() - 0.25f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn submultiplicative() {
        for t in [forward_harmonic(), backward_harmonic()] {
            for m in 1..=50u64 {
                for n in [1u64, 2, 7, 50 - m.min(49)] {
                    let lhs = power_norm(&t, m + n).unwrap().ln_value();
                    let rhs =
                        power_norm(&t, m).unwrap().ln_value() + power_norm(&t, n).unwrap().ln_value();
                    assert!(lhs <= rhs + 1e-11, "submultiplicativity failed at ({m},{n})");
                }
            }
        }
    }

    #[test]
    fn quasinilpotence_forward_harmonic() {
        let t = forward_harmonic();
        let rep = quasinilpotence_report(&t, 10).unwrap();
        // (1/10) ln(1/10!) = -1.510441257307551 (60-digit evaluation)
        let last = rep.root_ln.last().unwrap();
        assert_eq!(last.0, 10);
        assert!((last.1 - (-1.510441257307551)).abs() < 1e-12);
        assert!(rep.decreasing);
        assert!(rep.below_one);
    }

    #[test]
    fn root_sequence_consistent_with_power_norm() {
        let t = backward_harmonic();
        let rep = quasinilpotence_report(&t, 5).unwrap();
        let p1 = power_norm(&t, 1).unwrap().ln_value();
        assert!((rep.root_ln[0].1 - p1).abs() < 1e-14);
    }

    #[test]
    fn bilateral_requires_decreasing() {
        let rule: crate::weights::WeightRule = "explicit:[0.1,5];tail=harmonic:c=1".parse().unwrap();
        let w = WeightSequence::new(rule, false).unwrap();
        let err = ShiftOperator::new(ShiftKind::BilateralBlock, w).unwrap_err();
        assert!(matches!(err, ShiftError::InvalidOperator { .. }));
    }

    #[test]
    fn dual_exponents() {
        assert_eq!(PNorm::new(1.0).unwrap().dual(), DualExponent::Infinity);
        match PNorm::new(2.0).unwrap().dual() {
            DualExponent::Finite(q) => assert!((q - 2.0).abs() < 1e-15),
            _ => panic!("p=2 must be self-dual"),
        }
        match PNorm::new(3.0).unwrap().dual() {
            DualExponent::Finite(q) => assert!((q - 1.5).abs() < 1e-15),
            _ => panic!(),
        }
        assert!(PNorm::new(0.5).is_err());
    }
}
