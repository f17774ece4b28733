//! Integrands of the proper-time representations of the free crossed-field
//! Green's function and of the impurity resonance function.
//!
//! All kernels are evaluated at complex proper time `s` and are analytic
//! away from `s = k pi`. The combinations that suffer cancellation near
//! `s = 0` (`s cot s - 1`, `1/sin s - 1/s`) are evaluated by series there.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ComplexEnergy, ModelParams, Point2};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `s cot s - 1 = -2 sum_k zeta(2k) (s/pi)^(2k)`; coefficients of `s^(2k)`.
const SCOT_SERIES: [f64; 12] = [
    -0.333_333_333_333_333_33,
    -0.022_222_222_222_222_222,
    -0.002_116_402_116_402_116_4,
    -0.000_211_640_211_640_211_64,
    -2.137_779_915_557_693_335_5e-5,
    -2.164_404_280_806_397_208_5e-6,
    -2.192_594_785_187_377_78e-7,
    -2.221_460_878_997_967_907_6e-8,
    -2.250_784_651_680_899_285_4e-9,
    -2.280_515_120_459_218_286_6e-10,
    -2.310_643_259_900_262_409_7e-11,
    -2.341_170_681_982_488_395_9e-12,
];

/// Series of `s / sin s - 1` in powers of `s^2`, enough for `|s| < 1e-2`.
const SSIN_SERIES: [f64; 4] = [
    0.166_666_666_666_666_67,
    0.019_444_444_444_444_444,
    0.002_050_264_550_264_550_3,
    0.000_209_986_772_486_772_49,
];

const SCOT_SERIES_RADIUS: f64 = 0.5;
const SMALL_S_RADIUS: f64 = 1e-2;

/// Distance from a nonzero multiple of pi below which kernels refuse to evaluate.
pub const POLE_GUARD: f64 = 1e-9;

/// Default bound on the real part of the integrand exponent.
pub const DEFAULT_EXPONENT_BOUND: f64 = 200.0;

/// `exp(z) - 1` without cancellation for small `|z|`.
pub fn cexpm1(z: Complex64) -> Complex64 {
    let (sin_b, cos_b) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(
        z.re.exp_m1() * cos_b - 2.0 * half * half,
        z.re.exp() * sin_b,
    )
}

fn check_pole(s: Complex64) -> Result<()> {
    let k = (s.re / std::f64::consts::PI).round();
    if k != 0.0 {
        let d = (s - Complex64::new(k * std::f64::consts::PI, 0.0)).norm();
        if d < POLE_GUARD {
            return Err(Error::PoleProximity { s, k: k as i64 });
        }
    }
    Ok(())
}

fn poly_even(coeffs: &[f64], s2: Complex64) -> Complex64 {
    // sum_k c_k s^(2k+2)
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * s2 + c;
    }
    acc * s2
}

/// `cot s`, `s cot s - 1` and `1 / sin s` sharing one exponential.
#[derive(Clone, Copy)]
struct Trig {
    cot: Complex64,
    scm1: Complex64,
    inv_sin: Complex64,
}

/// Direct form through whichever of `exp(+-is)` is bounded; for `|s| >= 0.5`.
fn trig_direct(s: Complex64) -> Trig {
    let (cot, inv_sin) = if s.im >= 0.0 {
        let q = (I * s).exp();
        let q2 = q * q;
        let den = q2 - 1.0;
        (I * (q2 + 1.0) / den, 2.0 * I * q / den)
    } else {
        let p = (-I * s).exp();
        let p2 = p * p;
        let den = 1.0 - p2;
        (I * (1.0 + p2) / den, 2.0 * I * p / den)
    };
    Trig { cot, scm1: s * cot - 1.0, inv_sin }
}

fn trig(s: Complex64) -> Trig {
    if s.norm_sqr() < SCOT_SERIES_RADIUS * SCOT_SERIES_RADIUS {
        let m = poly_even(&SCOT_SERIES, s * s);
        Trig { cot: (1.0 + m) / s, scm1: m, inv_sin: 1.0 / s.sin() }
    } else {
        trig_direct(s)
    }
}

/// `s cot s - 1`, with the power series inside `|s| < 0.5`.
pub fn scot_m1(s: Complex64) -> Result<Complex64> {
    check_pole(s)?;
    Ok(trig(s).scm1)
}

fn guarded_exp(phi: Complex64, bound: f64) -> Result<Complex64> {
    if phi.re > bound || phi.re.is_nan() {
        return Err(Error::ExponentOverflow {
            real_part: phi.re,
            bound,
        });
    }
    Ok(phi.exp())
}

/// Exponent of the free Green's function integrand and its gradient with
/// respect to the field point `r`.
struct G0Exponent {
    phi: Complex64,
    d_x: Complex64,
    d_y: Complex64,
}

fn g0_exponent(s: Complex64, t: &Trig, r: Point2, rp: Point2, e: ComplexEnergy, params: &ModelParams) -> G0Exponent {
    let f = params.field;
    let (cot, scm1) = (t.cot, t.scm1);
    let dx = r.x - rp.x;
    let dy = r.y - rp.y;
    let rho2 = dx * dx + dy * dy;
    let phi = 0.25 * I * rho2 * cot + 0.5 * I * (r.x * rp.y - rp.x * r.y) - I * f * s * (r.x + rp.x)
        + I * f * scm1 * (dy + f * s)
        + I * e * s;
    let d_x = 0.5 * I * dx * cot + 0.5 * I * rp.y - I * f * s;
    let d_y = 0.5 * I * dy * cot - 0.5 * I * rp.x + I * f * scm1;
    G0Exponent { phi, d_x, d_y }
}

/// Integrand of the free crossed-field Green's function,
/// `exp(Phi(s; r, r', E)) / sin s`. The overall `-1` is applied by the caller.
pub fn eval_g0_integrand(
    s: Complex64,
    r: Point2,
    rp: Point2,
    e: ComplexEnergy,
    params: &ModelParams,
    exponent_bound: f64,
) -> Result<Complex64> {
    check_pole(s)?;
    let t = trig(s);
    let ex = g0_exponent(s, &t, r, rp, e, params);
    Ok(guarded_exp(ex.phi, exponent_bound)? * t.inv_sin)
}

/// The G0 integrand together with its x and y derivatives in `r`.
pub fn eval_g0_integrand_with_gradient(
    s: Complex64,
    r: Point2,
    rp: Point2,
    e: ComplexEnergy,
    params: &ModelParams,
    exponent_bound: f64,
) -> Result<[Complex64; 3]> {
    check_pole(s)?;
    let t = trig(s);
    let ex = g0_exponent(s, &t, r, rp, e, params);
    let v = guarded_exp(ex.phi, exponent_bound)? * t.inv_sin;
    Ok([v, v * ex.d_x, v * ex.d_y])
}

/// Impurity kernel `exp(iEs + i F^2 s (s cot s - 1)) / sin s`.
pub fn eval_d_kernel(s: Complex64, e: ComplexEnergy, params: &ModelParams, exponent_bound: f64) -> Result<Complex64> {
    check_pole(s)?;
    let f2 = params.field * params.field;
    let t = trig(s);
    let phi = I * e * s + I * f2 * s * t.scm1;
    Ok(guarded_exp(phi, exponent_bound)? * t.inv_sin)
}

/// Integrand of the resonance function with the `exp(i E_B s) / s` subtraction:
/// `exp(iEs + i F^2 s (s cot s - 1)) / sin s - exp(i E_B s) / s`.
///
/// Integrated from 0 to infinity along a path leaving the origin into the
/// lower half plane this equals `D(E)` including the `ln(E_B/E)` term.
pub fn eval_d_integrand(s: Complex64, e: ComplexEnergy, params: &ModelParams, exponent_bound: f64) -> Result<Complex64> {
    let eb = params.binding_energy;
    if s.norm() >= SMALL_S_RADIUS {
        let k = eval_d_kernel(s, e, params, exponent_bound)?;
        return Ok(k - (I * eb * s).exp() / s);
    }
    d_integrand_small(s, e, params, exponent_bound)
}

fn d_integrand_small(s: Complex64, e: ComplexEnergy, params: &ModelParams, exponent_bound: f64) -> Result<Complex64> {
    let eb = params.binding_energy;
    if s == Complex64::new(0.0, 0.0) {
        return Ok(I * (e - eb));
    }
    let f2 = params.field * params.field;
    let scm1 = trig(s).scm1;
    let phi = I * e * s + I * f2 * s * scm1;
    if phi.re > exponent_bound {
        return Err(Error::ExponentOverflow {
            real_part: phi.re,
            bound: exponent_bound,
        });
    }
    let x_m1 = cexpm1(I * f2 * s * scm1);
    let sigma_m1 = poly_even(&SSIN_SERIES, s * s);
    let sigma = 1.0 + sigma_m1;
    let num = (I * eb * s).exp() * cexpm1(I * (e - eb) * s) + (I * e * s).exp() * (x_m1 * sigma + sigma_m1);
    Ok(num / s)
}

/// Integrand of `dD/dE`: `i s` times the impurity kernel.
pub fn eval_d_derivative_integrand(
    s: Complex64,
    e: ComplexEnergy,
    params: &ModelParams,
    exponent_bound: f64,
) -> Result<Complex64> {
    Ok(I * s * eval_d_kernel(s, e, params, exponent_bound)?)
}
