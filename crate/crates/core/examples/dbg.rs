use resolvent_lab::logdomain::{log_add, LogMag};
use resolvent_lab::resolvent::*;
use resolvent_lab::shift::{PNorm, ShiftOperator};
use resolvent_lab::vector::VectorSpec;

fn main() {
    let o = EvalOptions::default();
    let fwd = ShiftOperator::parse("forward:harmonic:c=1").unwrap();
    let bwd = ShiftOperator::parse("backward:harmonic:c=1").unwrap();

    // dense vs series forward
    let x = VectorSpec::Basis(0);
    let dense = dense_truncated_resolvent(&fwd, 50, 0.5, &x).unwrap();
    let series = series_coefficients(&fwd, &x, 0.5, 51, &o).unwrap();
    for k in [0usize, 1, 2, 10, 30, 50] {
        println!(
            "k={k} dense={:.17e} series={:.17e} rel={:.3e}",
            dense.coeffs[k],
            series.coeffs[k].to_real(),
            (dense.coeffs[k] - series.coeffs[k].to_real()) / dense.coeffs[k]
        );
    }

    // xr sandwich at (0.5, 3, 0.05, p=2)
    let p2 = PNorm::new(2.0).unwrap();
    let x = VectorSpec::XrFamily { r: 0.5, m: 3 };
    let ev = resolvent_apply(&bwd, &x, 0.05, p2, &o).unwrap();
    let f0 = ev.f0_value.unwrap();
    let closed = closed_form_f0(0.5, 3, 0.05);
    let (xn, xt) = vector_norm(&x, bwd.weights(), p2, &o).unwrap();
    let xn_up = log_add(xn.pow(2.0), xt).pow(0.5);
    println!(
        "norm={:.15} up={:.15} f0_rec={:.15} f0_closed={:.15} xn={:.15} xn_up={:.15} trunc={:.5e}",
        ev.norm.ln_value(),
        ev.norm_upper(p2).ln_value(),
        f0.ln_value(),
        closed.ln_value(),
        xn.ln_value(),
        xn_up.ln_value(),
        ev.truncation_error.ln_value(),
    );
    println!(
        "lhs(up) = {:.15}  rhs(f0+xn_up) = {:.15}",
        ev.norm_upper(p2).ln_value(),
        f0.ln_value() + xn_up.ln_value()
    );

    // bilateral dense vs series
    let t = ShiftOperator::parse("bilateral:harmonic:c=1").unwrap();
    let x = VectorSpec::stack(VectorSpec::XrFamily { r: 1.0, m: 5 }, VectorSpec::zero()).unwrap();
    let dense = dense_truncated_resolvent(&t, 40, 0.5, &x).unwrap();
    let series = series_coefficients(&t, &x, 0.5, 40, &o).unwrap();
    for i in [0usize, 1, 20, 39, 40, 41, 50, 80] {
        let d = dense.coeffs[i];
        let s = series.coeffs[i].to_real();
        println!("i={i} (idx {}) dense={d:.10e} series={s:.10e}", i as i64 - 40);
    }

    // roundtrip error scale
    for x in [1e-300f64 * 1.7, 1e300 * 1.7, 1e-30, 1e30] {
        let back = LogMag::from_real(x).to_real();
        println!("roundtrip {x:e}: rel={:.3e}", (back - x) / x);
    }
}
