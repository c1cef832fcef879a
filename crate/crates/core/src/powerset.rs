//! Estimates the asymptotic exponent
//! `k_x = limsup_(z->0) ln ||(z-T)^{-1} x|| / ln ||(z-T)^{-1}||`
//! along a geometric radius schedule, with interval arithmetic over the
//! operator-norm enclosure and model-based extrapolation to radius zero.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::opnorm::{enclosure, NormEnclosure};
use crate::resolvent::{
    dense_complex_solve, resolvent_apply, EvalOptions, ResolventError,
};
use crate::shift::{PNorm, ShiftOperator};
use crate::vector::VectorSpec;

#[derive(Debug, Error)]
pub enum PowersetError {
    #[error("radius {z} too large: resolvent logs nonpositive, no exponent ratio defined")]
    RadiusTooLarge { z: f64 },
    #[error("invalid radius schedule: {0}")]
    ScheduleInvalid(String),
    #[error("cannot parse {what}: {input}")]
    Parse { what: &'static str, input: String },
    #[error(transparent)]
    Resolvent(#[from] ResolventError),
}

type Result<T> = std::result::Result<T, PowersetError>;

/// Geometric radius schedule `r_start * ratio^i`, `i = 0..count`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RadiusSchedule {
    pub r_start: f64,
    pub ratio: f64,
    pub count: u32,
}

impl Default for RadiusSchedule {
    /// `0.1 * 0.5^i` for 8 samples, down to about 7.8e-4.
    fn default() -> Self {
        RadiusSchedule { r_start: 0.1, ratio: 0.5, count: 8 }
    }
}

impl RadiusSchedule {
    pub fn new(r_start: f64, ratio: f64, count: u32) -> Result<Self> {
        let s = RadiusSchedule { r_start, ratio, count };
        s.validate(&EvalOptions::default())?;
        Ok(s)
    }

    pub fn validate(&self, opts: &EvalOptions) -> Result<()> {
        if !(self.r_start > 0.0 && self.r_start < 1.0) {
            return Err(PowersetError::ScheduleInvalid(format!(
                "r_start must be in (0,1), got {}",
                self.r_start
            )));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(PowersetError::ScheduleInvalid(format!(
                "ratio must be in (0,1), got {}",
                self.ratio
            )));
        }
        if self.count < 3 {
            return Err(PowersetError::ScheduleInvalid("count must be >= 3".into()));
        }
        let r_min = self.r_start * self.ratio.powi(self.count as i32 - 1);
        // series lengths scale like 2/r_min; keep them inside the term cap
        if 2.2 / r_min + 1024.0 > opts.k_cap as f64 {
            return Err(PowersetError::ScheduleInvalid(format!(
                "smallest radius {r_min:.3e} needs more than {} series terms",
                opts.k_cap
            )));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.r_start * self.ratio.powi(i as i32)).collect()
    }
}

/// Extrapolation regressor: ratios are fitted against `u` and read off at
/// `u = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FitModel {
    /// `u = 1 / ln(1/r)` — slow logarithmic corrections.
    InverseLog,
    /// `u = r ln(1/r)` — the correction scale of factorial-type weights,
    /// where numerator and denominator are both `~ c/r` plus log terms.
    RLogR,
    /// Fit both regressors and require agreement.
    Dual,
}

impl Default for FitModel {
    fn default() -> Self {
        FitModel::RLogR
    }
}

impl std::str::FromStr for FitModel {
    type Err = PowersetError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse_log" => Ok(FitModel::InverseLog),
            "r_log_r" => Ok(FitModel::RLogR),
            "dual" => Ok(FitModel::Dual),
            _ => Err(PowersetError::Parse { what: "fit model", input: s.into() }),
        }
    }
}

fn regressor(model: FitModel, r: f64) -> f64 {
    match model {
        FitModel::InverseLog => 1.0 / (1.0 / r).ln(),
        FitModel::RLogR => r * (1.0 / r).ln(),
        FitModel::Dual => unreachable!("dual resolves to a concrete regressor"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EstimateStatus {
    Converged,
    Inconclusive,
}

/// One radius sample: the numerator log and the denominator interval, with
/// the induced exponent-ratio interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExponentSample {
    pub r: f64,
    pub ln_num: f64,
    pub ln_den_lo: f64,
    pub ln_den_hi: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

impl ExponentSample {
    pub fn width(&self) -> f64 {
        self.ratio_hi - self.ratio_lo
    }

    fn mid(&self) -> f64 {
        0.5 * (self.ratio_lo + self.ratio_hi)
    }
}

/// Exponent estimate over a schedule. `running_sup` is the supremum of the
/// per-radius lower ratios; `extrapolated` the fitted intercept at radius
/// zero. The limsup estimate is the larger of the two.
#[derive(Clone, Debug, Serialize)]
pub struct ExponentEstimate {
    pub samples: Vec<ExponentSample>,
    /// Samples discarded because the logs were not yet positive.
    pub dropped: usize,
    pub running_sup: f64,
    pub extrapolated: f64,
    pub model: FitModel,
    pub residual: f64,
    pub status: EstimateStatus,
}

impl ExponentEstimate {
    pub fn limsup_estimate(&self) -> f64 {
        self.running_sup.max(self.extrapolated)
    }

    pub fn converged(&self) -> bool {
        self.status == EstimateStatus::Converged
    }
}

/// Estimation thresholds.
#[derive(Clone, Copy, Debug)]
pub struct PowersetOptions {
    pub eval: EvalOptions,
    /// The last retained sample's interval must be narrower than this.
    pub width_max: f64,
    /// Single-model fits must achieve this RMS residual.
    pub residual_max: f64,
    /// Extrapolations outside `[-margin, 1+margin]` are inconclusive.
    pub range_margin: f64,
    /// Dual-model agreement floor (absolute).
    pub agreement_floor: f64,
    /// Minimum number of trailing samples used in the fit.
    pub fit_window_min: usize,
    /// Worker threads for per-radius evaluation (1 = sequential).
    pub threads: usize,
}

impl Default for PowersetOptions {
    fn default() -> Self {
        PowersetOptions {
            eval: EvalOptions::default(),
            width_max: 0.02,
            residual_max: 0.01,
            range_margin: 0.01,
            agreement_floor: 0.01,
            fit_window_min: 4,
            threads: 1,
        }
    }
}

/// Per-radius exponent-ratio interval:
/// `(ln num / ln den_upper, ln num / ln den_lower)`.
pub fn exponent_ratio(
    t: &ShiftOperator,
    x: &VectorSpec,
    z: f64,
    p: PNorm,
    opts: &PowersetOptions,
) -> Result<(f64, f64)> {
    let enc = enclosure(t, z, p, &opts.eval)?;
    match sample_with_enclosure(t, x, z, p, &enc, &opts.eval)? {
        Some(s) => Ok((s.ratio_lo, s.ratio_hi)),
        None => Err(PowersetError::RadiusTooLarge { z }),
    }
}

fn sample_with_enclosure(
    t: &ShiftOperator,
    x: &VectorSpec,
    z: f64,
    p: PNorm,
    enc: &NormEnclosure,
    eval: &EvalOptions,
) -> Result<Option<ExponentSample>> {
    let num = resolvent_apply(t, x, z, p, eval)?;
    let ln_num = num.norm.ln_value();
    let ln_den_lo = enc.lower.ln_value();
    let ln_den_hi = enc.upper.ln_value();
    if ln_num <= 0.0 || ln_den_lo <= 0.0 {
        return Ok(None);
    }
    Ok(Some(ExponentSample {
        r: z,
        ln_num,
        ln_den_lo,
        ln_den_hi,
        ratio_lo: ln_num / ln_den_hi,
        ratio_hi: ln_num / ln_den_lo,
    }))
}

/// Norm enclosures over a whole schedule, reusable across vectors.
pub fn enclosure_schedule(
    t: &ShiftOperator,
    p: PNorm,
    schedule: &RadiusSchedule,
    opts: &PowersetOptions,
) -> Result<Vec<(f64, NormEnclosure)>> {
    schedule.validate(&opts.eval)?;
    let radii = schedule.radii();
    let encs = parallel_map(&radii, opts.threads, |&z| enclosure(t, z, p, &opts.eval))?;
    Ok(radii.into_iter().zip(encs).collect())
}

/// Runs `f` over `items` with up to `threads` scoped workers, preserving
/// order. Results are deterministic regardless of the thread count.
fn parallel_map<T, U, E, F>(items: &[T], threads: usize, f: F) -> std::result::Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> std::result::Result<U, E> + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let mut slots: Vec<Option<std::result::Result<U, E>>> = Vec::new();
    slots.resize_with(items.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_ref = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots_ref.lock().expect("slot lock")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled slot")).collect()
}

fn fit_line(us: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = us.len() as f64;
    let um = us.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut suy = 0.0;
    let mut suu = 0.0;
    for (u, y) in us.iter().zip(ys) {
        suy += (u - um) * (y - ym);
        suu += (u - um) * (u - um);
    }
    let slope = if suu > 0.0 { suy / suu } else { 0.0 };
    let intercept = ym - slope * um;
    let rms = (us
        .iter()
        .zip(ys)
        .map(|(u, y)| {
            let e = y - (intercept + slope * u);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (intercept, rms)
}

fn fit_samples(samples: &[ExponentSample], model: FitModel) -> (f64, f64) {
    let us: Vec<f64> = samples.iter().map(|s| regressor(model, s.r)).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.mid()).collect();
    fit_line(&us, &ys)
}

/// Estimates `k_x` from precomputed enclosures.
pub fn estimate_with_enclosures(
    t: &ShiftOperator,
    x: &VectorSpec,
    p: PNorm,
    enclosures: &[(f64, NormEnclosure)],
    model: FitModel,
    opts: &PowersetOptions,
) -> Result<ExponentEstimate> {
    let raw = parallel_map(enclosures, opts.threads, |(z, enc)| {
        sample_with_enclosure(t, x, *z, p, enc, &opts.eval)
    })?;
    let mut samples = Vec::new();
    let mut dropped = 0usize;
    for s in raw {
        match s {
            Some(s) => samples.push(s),
            None => dropped += 1,
        }
    }
    let running_sup =
        samples.iter().map(|s| s.ratio_lo).fold(f64::NEG_INFINITY, f64::max);
    let window = opts.fit_window_min.max(samples.len() / 2).min(samples.len());
    let fit_slice = &samples[samples.len() - window..];
    let enough = fit_slice.len() >= 3;

    let (extrapolated, residual, agree) = if !enough {
        (f64::NAN, f64::NAN, false)
    } else {
        match model {
            FitModel::Dual => {
                let (k1, r1) = fit_samples(fit_slice, FitModel::InverseLog);
                let (k2, r2) = fit_samples(fit_slice, FitModel::RLogR);
                let tol = (2.0 * r1.max(r2)).max(opts.agreement_floor);
                let agree = (k1 - k2).abs() <= tol;
                // report the better-conditioned fit
                if r2 <= r1 {
                    (k2, r2, agree)
                } else {
                    (k1, r1, agree)
                }
            }
            m => {
                let (k, r) = fit_samples(fit_slice, m);
                (k, r, r <= opts.residual_max)
            }
        }
    };

    let width_ok = samples.last().map(|s| s.width() < opts.width_max).unwrap_or(false);
    let in_range = extrapolated >= -opts.range_margin
        && extrapolated <= 1.0 + opts.range_margin;
    let status = if enough && width_ok && in_range && agree {
        EstimateStatus::Converged
    } else {
        EstimateStatus::Inconclusive
    };
    Ok(ExponentEstimate {
        samples,
        dropped,
        running_sup,
        extrapolated,
        model,
        residual,
        status,
    })
}

/// Estimates `k_x` over a schedule (enclosures computed internally).
pub fn estimate_kx(
    t: &ShiftOperator,
    x: &VectorSpec,
    p: PNorm,
    schedule: &RadiusSchedule,
    model: FitModel,
    opts: &PowersetOptions,
) -> Result<ExponentEstimate> {
    let encs = enclosure_schedule(t, p, schedule, opts)?;
    estimate_with_enclosures(t, x, p, &encs, model, opts)
}

/// Vector family swept over a scaling parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FamilyTemplate {
    /// Backward-shift `x_r` family with fixed `m`.
    Xr { m: u32 },
    /// Bilateral stack `(xi_r, 0)` with fixed `m`.
    StackXr { m: u32 },
}

impl FamilyTemplate {
    pub fn instantiate(&self, r: f64) -> VectorSpec {
        match self {
            FamilyTemplate::Xr { m } => VectorSpec::XrFamily { r, m: *m },
            FamilyTemplate::StackXr { m } => VectorSpec::BilateralStack {
                top: Box::new(VectorSpec::XrFamily { r, m: *m }),
                bottom: Box::new(VectorSpec::zero()),
            },
        }
    }
}

impl std::str::FromStr for FamilyTemplate {
    type Err = PowersetError;
    fn from_str(s: &str) -> Result<Self> {
        let parse_m = |rest: &str| {
            rest.strip_prefix("m=")
                .and_then(|v| v.parse::<u32>().ok())
                .ok_or(PowersetError::Parse { what: "family template", input: s.into() })
        };
        if let Some(rest) = s.strip_prefix("stack-xr:") {
            Ok(FamilyTemplate::StackXr { m: parse_m(rest)? })
        } else if let Some(rest) = s.strip_prefix("xr:") {
            Ok(FamilyTemplate::Xr { m: parse_m(rest)? })
        } else {
            Err(PowersetError::Parse { what: "family template", input: s.into() })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub r: f64,
    pub vector: String,
    pub estimate: ExponentEstimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Extrapolated values are expected nondecreasing in the family
    /// parameter; violations beyond 0.01 clear this flag.
    pub monotone_ok: bool,
}

/// One estimate per family parameter, sharing the enclosure table.
pub fn sweep_family(
    t: &ShiftOperator,
    family: FamilyTemplate,
    r_values: &[f64],
    p: PNorm,
    schedule: &RadiusSchedule,
    model: FitModel,
    opts: &PowersetOptions,
) -> Result<SweepTable> {
    let encs = enclosure_schedule(t, p, schedule, opts)?;
    let mut rows = Vec::with_capacity(r_values.len());
    for &r in r_values {
        let x = family.instantiate(r);
        let estimate = estimate_with_enclosures(t, &x, p, &encs, model, opts)?;
        rows.push(SweepRow { r, vector: x.to_string(), estimate });
    }
    let monotone_ok = rows
        .windows(2)
        .all(|w| w[1].estimate.extrapolated >= w[0].estimate.extrapolated - 0.01);
    Ok(SweepTable { rows, monotone_ok })
}

/// Theta-grid variant for complex-coefficient vectors: evaluates the
/// truncated resolvent at `z = r e^(i theta)` over a uniform grid and
/// takes the largest norm as the numerator. A heuristic sampler — the
/// limsup may be attained off the grid.
pub fn theta_grid_ratio(
    t: &ShiftOperator,
    x: &[(u64, Complex64)],
    radius: f64,
    p: PNorm,
    n_theta: usize,
    n_dim: usize,
    opts: &PowersetOptions,
) -> Result<(f64, f64)> {
    assert!(n_theta >= 1);
    let mut best = f64::NEG_INFINITY;
    for j in 0..n_theta {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
        let z = Complex64::from_polar(radius, theta);
        let coeffs = dense_complex_solve(t, n_dim, z, x)?;
        let pe = p.p();
        let mut sum = 0.0f64;
        for c in &coeffs {
            sum += c.norm().powf(pe);
        }
        best = best.max(sum.ln() / pe);
    }
    let enc = enclosure(t, radius, p, &opts.eval)?;
    let (lo, hi) = (enc.lower.ln_value(), enc.upper.ln_value());
    if best <= 0.0 || lo <= 0.0 {
        return Err(PowersetError::RadiusTooLarge { z: radius });
    }
    Ok((best / hi, best / lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> PowersetOptions {
        PowersetOptions::default()
    }

    fn p(v: f64) -> PNorm {
        PNorm::new(v).unwrap()
    }

    #[test]
    fn default_schedule_reaches_stated_floor() {
        let s = RadiusSchedule::default();
        let radii = s.radii();
        assert_eq!(radii.len(), 8);
        assert!((radii[0] - 0.1).abs() < 1e-15);
        assert!((radii[7] - 7.8125e-4).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(RadiusSchedule::new(0.1, 0.5, 2).is_err());
        assert!(RadiusSchedule::new(1.5, 0.5, 5).is_err());
        assert!(RadiusSchedule::new(0.1, 0.5, 40).is_err()); // radius underflows the term cap
    }

    #[test]
    fn forward_l1_ratio_is_exactly_one() {
        let t = ShiftOperator::parse("forward:harmonic:c=1").unwrap();
        let (lo, hi) =
            exponent_ratio(&t, &VectorSpec::Basis(0), 0.05, p(1.0), &opts()).unwrap();
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_xr_ratio_near_tenth_sample() {
        // numerator ln f_0 ~ 90.8 against denominator ~ 100 at z = 0.01
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let (lo, hi) = exponent_ratio(
            &t,
            &VectorSpec::XrFamily { r: 1.0, m: 3 },
            0.01,
            p(1.0),
            &opts(),
        )
        .unwrap();
        assert!((lo - 0.908).abs() < 0.01, "ratio_lo = {lo}");
        assert!(hi >= lo && hi < 1.02);
    }

    #[test]
    fn ratio_errors_when_radius_too_large() {
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let err = exponent_ratio(&t, &VectorSpec::Basis(0), 1.2, p(1.0), &opts());
        assert!(matches!(err, Err(PowersetError::RadiusTooLarge { .. })));
    }

    #[test]
    fn estimate_forward_e0_converges_to_one() {
        let t = ShiftOperator::parse("forward:harmonic:c=1").unwrap();
        let est = estimate_kx(
            &t,
            &VectorSpec::Basis(0),
            p(2.0),
            &RadiusSchedule::default(),
            FitModel::RLogR,
            &opts(),
        )
        .unwrap();
        assert!(est.converged(), "status {:?}", est.status);
        assert!((est.extrapolated - 1.0).abs() < 0.01, "k = {}", est.extrapolated);
    }

    #[test]
    fn estimate_backward_basis_converges_to_zero() {
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let est = estimate_kx(
            &t,
            &VectorSpec::Basis(2),
            p(1.0),
            &RadiusSchedule::default(),
            FitModel::RLogR,
            &opts(),
        )
        .unwrap();
        assert!(est.converged());
        assert!(est.extrapolated.abs() < 0.02, "k = {}", est.extrapolated);
        // coarse radii overshoot the limit; the running sup keeps them visible
        assert!(est.running_sup > est.extrapolated);
    }

    #[test]
    fn interval_ordering_and_running_sup() {
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let est = estimate_kx(
            &t,
            &VectorSpec::XrFamily { r: 0.5, m: 3 },
            p(1.0),
            &RadiusSchedule::default(),
            FitModel::RLogR,
            &opts(),
        )
        .unwrap();
        for s in &est.samples {
            assert!(s.ratio_lo <= s.ratio_hi);
        }
        let max_lo = est.samples.iter().map(|s| s.ratio_lo).fold(f64::MIN, f64::max);
        assert!((est.running_sup - max_lo).abs() < 1e-15);
        assert!((est.extrapolated - 0.5).abs() < 0.01);
    }

    #[test]
    fn parallel_map_is_deterministic() {
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let x = VectorSpec::XrFamily { r: 1.0, m: 3 };
        let mut o1 = opts();
        o1.threads = 1;
        let mut o4 = opts();
        o4.threads = 4;
        let s = RadiusSchedule::default();
        let e1 = estimate_kx(&t, &x, p(1.0), &s, FitModel::RLogR, &o1).unwrap();
        let e4 = estimate_kx(&t, &x, p(1.0), &s, FitModel::RLogR, &o4).unwrap();
        assert_eq!(e1.extrapolated.to_bits(), e4.extrapolated.to_bits());
    }

    #[test]
    fn sweep_scaling_law() {
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let table = sweep_family(
            &t,
            FamilyTemplate::Xr { m: 3 },
            &[0.25, 0.5, 1.0],
            p(1.0),
            &RadiusSchedule::default(),
            FitModel::RLogR,
            &opts(),
        )
        .unwrap();
        assert!(table.monotone_ok);
        for row in &table.rows {
            assert!(
                (row.estimate.extrapolated - row.r).abs() < 0.01,
                "k(x_{}) = {}",
                row.r,
                row.estimate.extrapolated
            );
        }
    }

    #[test]
    fn degenerate_single_r_sweep_matches_estimate() {
        let t = ShiftOperator::parse("backward:harmonic:c=1").unwrap();
        let s = RadiusSchedule::default();
        let table = sweep_family(
            &t,
            FamilyTemplate::Xr { m: 3 },
            &[1.0],
            p(1.0),
            &s,
            FitModel::RLogR,
            &opts(),
        )
        .unwrap();
        let single = estimate_kx(
            &t,
            &VectorSpec::XrFamily { r: 1.0, m: 3 },
            p(1.0),
            &s,
            FitModel::RLogR,
            &opts(),
        )
        .unwrap();
        assert_eq!(table.rows[0].estimate.extrapolated.to_bits(), single.extrapolated.to_bits());
    }

    #[test]
    fn theta_grid_max_on_positive_axis_for_nonneg_vectors() {
        let t = ShiftOperator::parse("forward:harmonic:c=1").unwrap();
        let x = [(0u64, Complex64::new(1.0, 0.0))];
        let (lo, hi) = theta_grid_ratio(&t, &x, 0.15, p(2.0), 8, 200, &opts()).unwrap();
        let (rlo, rhi) =
            exponent_ratio(&t, &VectorSpec::Basis(0), 0.15, p(2.0), &opts()).unwrap();
        assert!((lo - rlo).abs() < 1e-6);
        assert!((hi - rhi).abs() < 1e-6);
    }
}
