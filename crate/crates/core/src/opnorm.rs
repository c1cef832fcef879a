//! Encloses `ln ||(z - T)^{-1}||` between a Neumann-series upper bound and
//! probe-vector lower bounds.
//!
//! For a forward shift on `l^1` with decreasing weights the two sides
//! coincide: the Neumann sum equals `||(z-T)^{-1} e_0||_1` term by term,
//! and the enclosure collapses to that single evaluation.

use crate::logdomain::{log_add, LogMag, LogSumAccumulator};
use crate::resolvent::{
    resolvent_apply, vector_norm, EvalOptions, ResolventError,
};
use crate::shift::{DualExponent, PNorm, ShiftError, ShiftKind, ShiftOperator};
use crate::vector::VectorSpec;

const LN_HALF: f64 = -std::f64::consts::LN_2;

type Result<T> = std::result::Result<T, ResolventError>;

/// Two-sided bracket of the resolvent operator norm at one point.
#[derive(Clone, Debug)]
pub struct NormEnclosure {
    pub lower: LogMag,
    pub upper: LogMag,
    /// Identifier of the probe achieving the lower end.
    pub probe: String,
}

/// Neumann upper bound `sum_k ||T^k|| / z^(k+1)` (upper-safe: the
/// geometric tail bound is added to the partial sum).
///
/// For the bilateral block the bound is the three-term sum from the block
/// inverse: both diagonal block norms plus the rank-one coupling term
/// `||(z-A)^{-1} e_1||_p ||(z-B')^{-1} f_0||_q`.
pub fn opnorm_upper(t: &ShiftOperator, z: f64, p: PNorm, opts: &EvalOptions) -> Result<LogMag> {
    match t.kind() {
        ShiftKind::ForwardUnilateral | ShiftKind::BackwardUnilateral => {
            neumann_sum(t, z, opts).map(|(lo, tail)| log_add(lo, tail))
        }
        ShiftKind::BilateralBlock => {
            let (block_lo, block_tail) = neumann_sum(t, z, opts)?;
            let block_up = log_add(block_lo, block_tail);
            let f = bilateral_rank_one_factors(t, z, p, opts)?;
            let rank_one = f.ae1_upper * f.bf0_upper;
            Ok(log_add(log_add(block_up, block_up), rank_one))
        }
    }
}

/// Partial Neumann sum and its tail bound. Requires decreasing weights so
/// that `||T^k||` is the initial window product.
fn neumann_sum(t: &ShiftOperator, z: f64, opts: &EvalOptions) -> Result<(LogMag, LogMag)> {
    if z <= 0.0 || !z.is_finite() {
        return Err(ResolventError::InvalidPoint(z));
    }
    let w = t.weights();
    if w.decreasing_from() != Some(0) {
        return Err(ResolventError::Shift(ShiftError::NonComputableSup));
    }
    // forward shifts use products from index 0, backward and both
    // bilateral blocks products from index 1
    let first = u64::from(t.kind() != ShiftKind::ForwardUnilateral);
    let lnz = z.ln();
    let base = w.prefix_ln(first)?;
    let mut acc = LogSumAccumulator::new();
    let mut k = 0u64;
    loop {
        let term = (w.prefix_ln(first + k)? - base) - (k as f64 + 1.0) * lnz;
        acc.push(LogMag::from_ln(term));
        let ratio_ln = w.ln_weight(first + k) - lnz;
        if k > 0 && ratio_ln <= LN_HALF && term <= opts.rel_tol.ln() + acc.value().ln_value() {
            let tail = term + ratio_ln - (-ratio_ln.exp_m1()).ln();
            return Ok((acc.value(), LogMag::from_ln(tail)));
        }
        k += 1;
        if k as usize > opts.k_cap {
            return Err(ResolventError::TruncationBudgetExceeded { cap: opts.k_cap });
        }
    }
}

/// The two factors of the bilateral rank-one coupling block, each with
/// lower- and upper-safe values: `||(z-A)^{-1} e_1||_p` and
/// `||(z-B')^{-1} f_0||_q`.
///
/// Both shares the coefficient sequence `prod_{j=1}^{k} w_j / z^(k+1)`:
/// the first normed with exponent p, the second, the dual functional,
/// with the dual exponent q (supremum when p = 1).
#[derive(Clone, Copy, Debug)]
pub struct RankOneFactors {
    pub ae1_lower: LogMag,
    pub ae1_upper: LogMag,
    pub bf0_lower: LogMag,
    pub bf0_upper: LogMag,
}

pub fn bilateral_rank_one_factors(
    t: &ShiftOperator,
    z: f64,
    p: PNorm,
    opts: &EvalOptions,
) -> Result<RankOneFactors> {
    assert_eq!(t.kind(), ShiftKind::BilateralBlock);
    let (ae1_lower, ae1_upper) = block_sequence_norm(t, z, DualExponent::Finite(p.p()), opts)?;
    let (bf0_lower, bf0_upper) = block_sequence_norm(t, z, p.dual(), opts)?;
    Ok(RankOneFactors { ae1_lower, ae1_upper, bf0_lower, bf0_upper })
}

/// `l^q` norm (or supremum) of `{prod_{j=1}^{k} w_j / z^(k+1)}_(k>=0)`.
fn block_sequence_norm(
    t: &ShiftOperator,
    z: f64,
    exponent: DualExponent,
    opts: &EvalOptions,
) -> Result<(LogMag, LogMag)> {
    if z <= 0.0 || !z.is_finite() {
        return Err(ResolventError::InvalidPoint(z));
    }
    let w = t.weights();
    let lnz = z.ln();
    let base = w.prefix_ln(1)?;
    match exponent {
        DualExponent::Infinity => {
            // terms rise while w_(k+1)/z > 1, then fall; the running max
            // is exact once the ratio drops below 1
            let mut best = f64::NEG_INFINITY;
            let mut k = 0u64;
            loop {
                let term = (w.prefix_ln(1 + k)? - base) - (k as f64 + 1.0) * lnz;
                best = best.max(term);
                if w.weight(k + 1) / z < 1.0 {
                    let v = LogMag::from_ln(best);
                    return Ok((v, v));
                }
                k += 1;
                if k as usize > opts.k_cap {
                    return Err(ResolventError::TruncationBudgetExceeded { cap: opts.k_cap });
                }
            }
        }
        DualExponent::Finite(q) => {
            let mut acc = LogSumAccumulator::new();
            let mut k = 0u64;
            loop {
                let term = (w.prefix_ln(1 + k)? - base) - (k as f64 + 1.0) * lnz;
                acc.push(LogMag::from_ln(q * term));
                let ratio_ln = w.ln_weight(k + 1) - lnz;
                if k > 0
                    && ratio_ln <= LN_HALF
                    && q * term <= opts.rel_tol.ln() + acc.value().ln_value()
                {
                    let tail = q * (term + ratio_ln) - (-(q * ratio_ln).exp_m1()).ln();
                    let lower = acc.value().pow(1.0 / q);
                    let upper = log_add(acc.value(), LogMag::from_ln(tail)).pow(1.0 / q);
                    return Ok((lower, upper));
                }
                k += 1;
                if k as usize > opts.k_cap {
                    return Err(ResolventError::TruncationBudgetExceeded { cap: opts.k_cap });
                }
            }
        }
    }
}

/// Best probe-vector lower bound: `max_x ln ||(z-T)^{-1} x|| - ln ||x||_p`.
pub fn opnorm_lower(
    t: &ShiftOperator,
    z: f64,
    p: PNorm,
    probes: &[VectorSpec],
    opts: &EvalOptions,
) -> Result<(LogMag, String)> {
    assert!(!probes.is_empty(), "opnorm_lower needs at least one probe");
    let mut best: Option<(LogMag, String)> = None;
    for probe in probes {
        let ev = resolvent_apply(t, probe, z, p, opts)?;
        let (vn, vt) = vector_norm(probe, t.weights(), p, opts)?;
        let vn_upper = log_add(vn.pow(p.p()), vt).pow(1.0 / p.p());
        let cand = ev.norm / vn_upper;
        if best.as_ref().map_or(true, |(b, _)| cand > *b) {
            best = Some((cand, probe.to_string()));
        }
    }
    Ok(best.expect("nonempty probes"))
}

/// Smallest `m` for which the x_r probe family is p-summable under the
/// given weights (reciprocal lower bound `w_n >= 1/(n+s)` gives the
/// coefficient ratio `r (n+1+s)/(n+m+1)`, summable at `r = 1` once
/// `p (m - s) > 1`).
fn minimal_probe_m(t: &ShiftOperator, p: PNorm) -> u32 {
    let s = t.weights().lower_reciprocal().map(|b| b.shift).unwrap_or(1.0);
    let mut m = (s + 1.0 / p.p()).floor() as u32 + 1;
    if (m as f64 - s) * p.p() <= 1.0 {
        m += 1;
    }
    m.max(1)
}

/// Default probe set per shift kind.
pub fn default_probes(t: &ShiftOperator, p: PNorm) -> Vec<VectorSpec> {
    match t.kind() {
        ShiftKind::ForwardUnilateral => vec![VectorSpec::Basis(0)],
        ShiftKind::BackwardUnilateral => vec![
            VectorSpec::Basis(0),
            VectorSpec::XrFamily { r: 1.0, m: minimal_probe_m(t, p) },
        ],
        ShiftKind::BilateralBlock => Vec::new(), // handled structurally
    }
}

/// Encloses the operator norm of the resolvent at `z`.
pub fn enclosure(t: &ShiftOperator, z: f64, p: PNorm, opts: &EvalOptions) -> Result<NormEnclosure> {
    match t.kind() {
        ShiftKind::ForwardUnilateral => {
            let decreasing = t.weights().decreasing_from() == Some(0);
            if p.p() == 1.0 && decreasing {
                // l^1 identity: the Neumann sum IS ||(z-T)^{-1} e_0||_1
                let ev = resolvent_apply(t, &VectorSpec::Basis(0), z, p, opts)?;
                return Ok(NormEnclosure {
                    lower: ev.norm,
                    upper: ev.norm_upper(p),
                    probe: "e:0".into(),
                });
            }
            let upper = opnorm_upper(t, z, p, opts)?;
            let probes = default_probes(t, p);
            let (lower, probe) = opnorm_lower(t, z, p, &probes, &EvalOptions::probe())?;
            Ok(NormEnclosure { lower, upper, probe })
        }
        ShiftKind::BackwardUnilateral => {
            let upper = opnorm_upper(t, z, p, opts)?;
            let probes = default_probes(t, p);
            let (lower, probe) = opnorm_lower(t, z, p, &probes, &EvalOptions::probe())?;
            Ok(NormEnclosure { lower, upper, probe })
        }
        ShiftKind::BilateralBlock => bilateral_enclosure(t, z, p, opts),
    }
}

/// Bilateral enclosure: the rank-one coupling block bounds the norm from
/// below (`||(z-A)^{-1} e_1||_p ||(z-B')^{-1} f_0||_q <= ||(z-T)^{-1}||`)
/// and the three-term block sum bounds it from above.
pub fn bilateral_enclosure(
    t: &ShiftOperator,
    z: f64,
    p: PNorm,
    opts: &EvalOptions,
) -> Result<NormEnclosure> {
    assert_eq!(t.kind(), ShiftKind::BilateralBlock);
    let f = bilateral_rank_one_factors(t, z, p, opts)?;
    let lower = f.ae1_lower * f.bf0_lower;
    let (block_lo, block_tail) = neumann_sum(t, z, opts)?;
    let block_up = log_add(block_lo, block_tail);
    let upper = log_add(log_add(block_up, block_up), f.ae1_upper * f.bf0_upper);
    Ok(NormEnclosure { lower, upper, probe: "rank-one:e1*f0".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> EvalOptions {
        EvalOptions::default()
    }

    fn p(v: f64) -> PNorm {
        PNorm::new(v).unwrap()
    }

    #[test]
    fn backward_harmonic_upper_is_expm1_of_inverse_z() {
        // products 1/(k+1)!: sum_k (1/z)^(k+1)/(k+1)! = e^(1/z) - 1
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        for z in [0.5, 0.1, 0.01] {
            let up = opnorm_upper(&t, z, p(1.0), &opts()).unwrap();
            let expected = if 1.0 / z > 30.0 { 1.0 / z } else { (1.0 / z).exp_m1().ln() };
            assert!(
                (up.ln_value() - expected).abs() < 1e-10,
                "upper mismatch at z={z}: {} vs {expected}",
                up.ln_value()
            );
        }
    }

    #[test]
    fn forward_l1_enclosure_collapses() {
        let t = ShiftOperator::parse("forward:harmonic:c=1").unwrap();
        for z in [1.0, 0.3, 0.05] {
            let e = enclosure(&t, z, p(1.0), &opts()).unwrap();
            assert!(e.lower <= e.upper);
            assert!((e.upper.ln_value() - e.lower.ln_value()).abs() < 1e-11);
            // and equals the Neumann sum
            let up = opnorm_upper(&t, z, p(1.0), &opts()).unwrap();
            assert!((e.upper.ln_value() - up.ln_value()).abs() < 1e-10);
        }
    }

    #[test]
    fn large_z_behaves_like_inverse_z() {
        let t = ShiftOperator::parse("forward:harmonic:c=1").unwrap();
        let up = opnorm_upper(&t, 100.0, p(2.0), &opts()).unwrap();
        assert!((up.ln_value() - (1.0f64 / 100.0).ln()).abs() < 0.02);
    }

    #[test]
    fn backward_basis_probe_is_vacuous() {
        // e_5 gives only polynomial growth, far below the upper bound
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let (lo, id) =
            opnorm_lower(&t, 0.01, p(1.0), &[VectorSpec::Basis(5)], &opts()).unwrap();
        // 60-digit oracle: ln(100 + 100^2/6 + ... + 100^6/720) = 21.07218535516437
        assert!((lo.ln_value() - 21.07218535516437).abs() < 1e-10);
        assert_eq!(id, "e:5");
        let up = opnorm_upper(&t, 0.01, p(1.0), &opts()).unwrap();
        assert!(lo.ln_value() < 0.3 * up.ln_value());
    }

    #[test]
    fn backward_xr_probe_reaches_near_upper() {
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let e = enclosure(&t, 0.01, p(1.0), &opts()).unwrap();
        // ln f_0(x_1) - ln ||x_1|| ~ 90.5 against upper 100
        assert!(e.lower.ln_value() > 90.0);
        assert!(e.upper.ln_value() < 100.1);
        assert!(e.probe.starts_with("xr:"));
    }

    #[test]
    fn enclosure_ordering_everywhere() {
        for spec in ["forward:harmonic:c=1", "backward:harmonic:c=1", "bilateral:harmonic:c=1"] {
            let t = ShiftOperator::parse(spec).unwrap();
            for pe in [1.0, 2.0, 3.0] {
                if spec.starts_with("bilateral") && pe == 1.0 {
                    continue;
                }
                for z in [0.5, 0.1, 0.02] {
                    let e = enclosure(&t, z, p(pe), &opts()).unwrap();
                    assert!(
                        e.lower.ln_value() <= e.upper.ln_value() + 1e-12,
                        "ordering violated for {spec} p={pe} z={z}"
                    );
                }
            }
        }
    }

    #[test]
    fn bilateral_p2_factors_equal() {
        let t = ShiftOperator::parse("bilateral:harmonic:c=1").unwrap();
        let f = bilateral_rank_one_factors(&t, 0.05, p(2.0), &opts()).unwrap();
        assert!((f.ae1_lower.ln_value() - f.bf0_lower.ln_value()).abs() < 1e-12);
    }

    #[test]
    fn bilateral_enclosure_tightens_as_z_shrinks() {
        let t = ShiftOperator::parse("bilateral:harmonic:c=1").unwrap();
        let ratio_at = |z: f64| {
            let e = enclosure(&t, z, p(2.0), &opts()).unwrap();
            e.lower.ln_value() / e.upper.ln_value()
        };
        let r1 = ratio_at(0.05);
        let r2 = ratio_at(0.01);
        assert!(r2 >= r1 - 1e-6);
        assert!(r2 > 0.97, "enclosure ratio {r2} at z=0.01");
    }
}
